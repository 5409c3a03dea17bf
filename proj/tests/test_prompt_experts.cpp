#include <doctest.h>

#include <set>

#include "gaug/prompt_experts.hpp"
#include "support.hpp"

using namespace gaug;
using gaug::testing::TempDir;

namespace {

// Star with center 0 and `leaves` leaves, plus one isolated node at the end.
TextGraph star(std::size_t leaves) {
  std::vector<Edge> edges;
  std::vector<std::string> texts{"center text"};
  for (NodeId i = 1; i <= leaves; ++i) {
    edges.emplace_back(0, i);
    texts.push_back("leaf" + std::to_string(i) + " words");
  }
  texts.push_back("lonely node");
  return TextGraph(CsrAdjacency::from_edges(texts.size(), edges), texts, {}, {});
}

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

const CategorySet kCats({"alpha", "bravo", "charlie"});

}  // namespace

TEST_CASE("neighbor sampling") {
  const auto small = star(3);
  CHECK(sample_neighbors(small, 0, 10, 1) == std::vector<NodeId>{1, 2, 3});
  CHECK(sample_neighbors(small, 4, 10, 1).empty());
  CHECK_THROWS_AS(sample_neighbors(small, 0, 0, 1), UsageError);

  const auto big = star(20);
  std::set<std::vector<NodeId>> distinct;
  for (std::uint64_t seed = 0; seed < 2; ++seed) {
    auto s = sample_neighbors(big, 0, 10, seed);
    CHECK(s == sample_neighbors(big, 0, 10, seed));
    CHECK(s.size() == 10);
    CHECK(std::set<NodeId>(s.begin(), s.end()).size() == 10);
    for (NodeId u : s) CHECK(big.adjacency().has_edge(0, u));
    std::sort(s.begin(), s.end());
    distinct.insert(s);
  }
  CHECK(distinct.size() == 2);
}

TEST_CASE("idr prompt has anchor and categories but no neighbors") {
  const auto g = star(2);
  const std::vector<NodeId> nbrs{1, 2};
  const auto r = build_prompt(ExpertKind::kIdr, g, 0, nbrs, kCats);
  CHECK(contains(r.user_prompt, "center text"));
  CHECK(contains(r.user_prompt, "[alpha, bravo, charlie]"));
  CHECK_FALSE(contains(r.user_prompt, "leaf1"));
  CHECK_FALSE(r.system_prompt.empty());
}

TEST_CASE("sas prompt includes neighbor texts") {
  const auto g = star(2);
  const std::vector<NodeId> nbrs{1, 2};
  const auto r = build_prompt(ExpertKind::kSas, g, 0, nbrs, kCats);
  CHECK(contains(r.user_prompt, "Linked node 1: leaf1 words"));
  CHECK(contains(r.user_prompt, "Linked node 2: leaf2 words"));
}

TEST_CASE("sar prompt without neighbors says so") {
  const auto g = star(2);
  const auto r = build_prompt(ExpertKind::kSar, g, 3, {}, kCats);
  CHECK(contains(r.user_prompt, "lonely node"));
  CHECK(contains(r.user_prompt, "no neighbors available"));
  CHECK(contains(r.user_prompt, "[alpha, bravo, charlie]"));
  CHECK_THROWS_AS(build_prompt(ExpertKind::kRaw, g, 0, {}, kCats), UsageError);
  CHECK_THROWS_AS(build_prompt(ExpertKind::kSar, g, 99, {}, kCats), UsageError);
}

TEST_CASE("prompt options are carried into the request") {
  PromptOptions opts;
  opts.model_name = "m";
  opts.temperature = 0.3;
  opts.max_tokens = 64;
  const auto r = build_prompt(ExpertKind::kSas, star(1), 0, {}, kCats, opts);
  CHECK(r.model_name == "m");
  CHECK(r.temperature == 0.3);
  CHECK(r.max_tokens == 64);
}

TEST_CASE("context prompt templates") {
  const auto g = star(5);
  const auto raw = build_context_prompt(ExpertKind::kRaw, g, 0, 3, 1);
  CHECK(raw.rfind("This is the original text of this node. The degree of this node is 5", 0) == 0);
  const auto idr = build_context_prompt(ExpertKind::kIdr, g, 0, 3, 1);
  CHECK(contains(idr, "more than 3 as head nodes"));
  const auto sar = build_context_prompt(ExpertKind::kSar, g, 6, 3, 1);
  CHECK(contains(sar, "tail nodes"));
  CHECK(contains(sar, "degree of this node is 0"));
  CHECK(contains(build_context_prompt(ExpertKind::kSas, g, 1, 3, 1), "summarization"));
}

TEST_CASE("degree thresholds are nearest-rank percentiles") {
  // Degrees of star(5): center 5, five leaves 1, isolated 0 -> sorted [0,1,1,1,1,1,5].
  const auto t = degree_thresholds(star(5));
  CHECK(t.head == 1);  // ceil(0.8 * 7) = 6th value
  CHECK(t.tail == 1);  // ceil(0.2 * 7) = 2nd value
  const auto wide = degree_thresholds(star(5), 1.0, 0.0);
  CHECK(wide.head == 5);
  CHECK(wide.tail == 0);
}

TEST_CASE("category set validation") {
  CHECK_THROWS_AS(CategorySet({}), ValidationError);
  CHECK_THROWS_AS(CategorySet({"a", "a"}), ValidationError);
  CHECK_THROWS_AS(CategorySet({"a,b"}), ValidationError);
  for (auto k : kAllExperts) CHECK(parse_expert(expert_name(k)) == k);
  CHECK_THROWS_AS(parse_expert("xyz"), ValidationError);
}

TEST_CASE("augment_all issues three calls per node and caches") {
  SyntheticSpec spec;
  spec.nodes_per_block = 3;
  spec.num_blocks = 2;
  spec.seed = 4;
  auto g = make_synthetic(spec);
  // Five nodes: drop the last one.
  std::vector<Edge> edges;
  for (const auto& [u, v] : g.adjacency().edge_list())
    if (u < 5 && v < 5) edges.emplace_back(u, v);
  std::vector<std::string> texts(g.texts().begin(), g.texts().begin() + 5);
  const TextGraph five(CsrAdjacency::from_edges(5, edges), texts, {}, {});

  auto backend = std::make_shared<MockBackend>(MockPolicy{});
  Gateway gw(backend);
  const CategorySet cats(synthetic_category_names(2));
  const auto first = augment_all(five, gw, cats, {});
  CHECK(backend->calls() == 15);
  CHECK(first.warnings.empty());
  REQUIRE(first.sets.size() == 5);
  for (NodeId v = 0; v < 5; ++v) {
    CHECK(first.sets[v].id == v);
    CHECK(first.sets[v].text(ExpertKind::kRaw) == five.text(v));
    CHECK(first.sets[v].text(ExpertKind::kSas).rfind("The main node can be summarized as:", 0) == 0);
    CHECK(first.sets[v].text(ExpertKind::kIdr).rfind("The node belongs to the", 0) == 0);
  }

  gw.reset_counters();
  const auto second = augment_all(five, gw, cats, {});
  CHECK(gw.uncached_calls() == 0);
  CHECK(second.sets == first.sets);
}

TEST_CASE("failed expert queries fall back to raw text") {
  class Failing : public LlmBackend {
   public:
    std::string complete(const LlmRequest&) override { throw StatusError(500, "boom"); }
  };
  Gateway gw(std::make_shared<Failing>());
  const auto g = star(2);
  const auto out = augment_all(g, gw, kCats, {});
  CHECK(out.warnings.size() == 3 * g.num_nodes());
  for (NodeId v = 0; v < g.num_nodes(); ++v)
    for (auto k : kAllExperts) CHECK(out.sets[v].text(k) == g.text(v));
}

TEST_CASE("augmentation store round trip") {
  TempDir dir("aug");
  Gateway gw(std::make_shared<MockBackend>(MockPolicy{}));
  const auto out = augment_all(star(3), gw, kCats, {});
  save_augmentations(dir / "a.jsonl", out.sets);
  CHECK(load_augmentations(dir / "a.jsonl") == out.sets);
  CHECK_THROWS_AS(load_augmentations(dir / "none.jsonl"), IoError);
}
