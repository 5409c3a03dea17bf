#include "gaug/tag_store.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <json.hpp>
#include <random>
#include <sstream>

#include "gaug/io.hpp"

namespace gaug {

using nlohmann::json;

CsrAdjacency CsrAdjacency::from_edges(std::size_t num_nodes, std::span<const Edge> edges) {
  std::vector<Edge> directed;
  directed.reserve(edges.size() * 2);
  for (auto [u, v] : edges) {
    if (u >= num_nodes || v >= num_nodes)
      throw ValidationError("edge (" + std::to_string(u) + "," + std::to_string(v) +
                            ") references node " + std::to_string(std::max(u, v)) +
                            " but the graph has " + std::to_string(num_nodes) + " nodes");
    if (u == v) continue;
    directed.emplace_back(u, v);
    directed.emplace_back(v, u);
  }
  std::sort(directed.begin(), directed.end());
  directed.erase(std::unique(directed.begin(), directed.end()), directed.end());

  CsrAdjacency adj;
  adj.offsets_.assign(num_nodes + 1, 0);
  adj.indices_.reserve(directed.size());
  for (auto [u, v] : directed) {
    ++adj.offsets_[u + 1];
    adj.indices_.push_back(v);
  }
  for (std::size_t i = 0; i < num_nodes; ++i) adj.offsets_[i + 1] += adj.offsets_[i];
  return adj;
}

bool CsrAdjacency::has_edge(NodeId u, NodeId v) const {
  auto row = neighbors(u);
  return std::binary_search(row.begin(), row.end(), v);
}

std::vector<Edge> CsrAdjacency::edge_list() const {
  std::vector<Edge> out;
  out.reserve(num_edges());
  for (NodeId u = 0; u < num_nodes(); ++u)
    for (NodeId v : neighbors(u))
      if (u < v) out.emplace_back(u, v);
  return out;
}

TextGraph::TextGraph(CsrAdjacency adjacency, std::vector<std::string> texts,
                     std::vector<std::optional<int>> labels, Splits splits)
    : adjacency_(std::move(adjacency)),
      texts_(std::move(texts)),
      labels_(std::move(labels)),
      splits_(std::move(splits)) {
  const auto n = texts_.size();
  if (adjacency_.num_nodes() != n)
    throw ValidationError("adjacency has " + std::to_string(adjacency_.num_nodes()) +
                          " rows but there are " + std::to_string(n) + " texts");
  if (labels_.empty()) labels_.resize(n);
  if (labels_.size() != n) throw ValidationError("label count does not match node count");
  for (const auto& l : labels_)
    if (l && *l < 0) throw ValidationError("negative label " + std::to_string(*l));

  std::vector<char> seen(n, 0);
  for (auto* part : {&splits_.train, &splits_.val, &splits_.test}) {
    std::sort(part->begin(), part->end());
    for (NodeId v : *part) {
      if (v >= n) throw ValidationError("split index " + std::to_string(v) + " out of range");
      if (seen[v]) throw ValidationError("node " + std::to_string(v) + " appears in two splits");
      seen[v] = 1;
    }
  }
}

bool TextGraph::has_labels() const {
  return std::any_of(labels_.begin(), labels_.end(), [](const auto& l) { return l.has_value(); });
}

int TextGraph::num_classes() const {
  int k = 0;
  for (const auto& l : labels_)
    if (l) k = std::max(k, *l + 1);
  return k;
}

namespace {

std::string located(const std::filesystem::path& path, std::size_t line, const std::string& msg) {
  return path.filename().string() + ":" + std::to_string(line) + ": " + msg;
}

bool parse_index(std::string_view s, long long& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return false;
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace

TextGraph load_graph(const std::filesystem::path& nodes_path,
                     const std::filesystem::path& edges_path) {
  std::ifstream nodes(nodes_path);
  if (!nodes) throw IoError("cannot open nodes file " + nodes_path.string());

  struct Row {
    std::string text;
    std::optional<int> label;
    std::optional<Split> split;
    bool present = false;
  };
  std::vector<Row> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(nodes, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(located(nodes_path, lineno, std::string("invalid JSON: ") + e.what()));
    }
    if (!obj.is_object() || !obj.contains("id") || !obj["id"].is_number_integer() ||
        !obj.contains("text") || !obj["text"].is_string())
      throw ParseError(located(nodes_path, lineno, "expected {\"id\": int, \"text\": str, ...}"));
    const auto id = obj["id"].get<long long>();
    if (id < 0) throw ParseError(located(nodes_path, lineno, "negative id"));
    if (static_cast<std::size_t>(id) >= rows.size()) rows.resize(id + 1);
    Row& row = rows[id];
    if (row.present)
      throw ValidationError(located(nodes_path, lineno, "duplicate id " + std::to_string(id)));
    row.present = true;
    row.text = obj["text"].get<std::string>();
    if (auto it = obj.find("label"); it != obj.end() && !it->is_null()) {
      if (!it->is_number_integer()) throw ParseError(located(nodes_path, lineno, "label must be int or null"));
      row.label = it->get<int>();
    }
    if (auto it = obj.find("split"); it != obj.end() && !it->is_null()) {
      const auto s = it->is_string() ? it->get<std::string>() : std::string();
      if (s == "train") row.split = Split::kTrain;
      else if (s == "val") row.split = Split::kVal;
      else if (s == "test") row.split = Split::kTest;
      else throw ParseError(located(nodes_path, lineno, "split must be train|val|test|null"));
    }
  }
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (!rows[i].present)
      throw ValidationError("node ids must be contiguous from 0; missing id " + std::to_string(i));

  const std::size_t n = rows.size();
  std::vector<std::string> texts;
  std::vector<std::optional<int>> labels;
  Splits splits;
  texts.reserve(n);
  labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    texts.push_back(std::move(rows[i].text));
    labels.push_back(rows[i].label);
    if (rows[i].split) {
      auto& part = *rows[i].split == Split::kTrain ? splits.train
                   : *rows[i].split == Split::kVal ? splits.val
                                                   : splits.test;
      part.push_back(static_cast<NodeId>(i));
    }
  }

  std::ifstream edges_in(edges_path);
  if (!edges_in) throw IoError("cannot open edges file " + edges_path.string());
  std::vector<Edge> edges;
  lineno = 0;
  bool header = false;
  while (std::getline(edges_in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (!header) {
      if (line != "src,dst") throw ParseError(located(edges_path, lineno, "expected header \"src,dst\""));
      header = true;
      continue;
    }
    const auto comma = line.find(',');
    long long u = 0, v = 0;
    if (comma == std::string::npos || !parse_index(std::string_view(line).substr(0, comma), u) ||
        !parse_index(std::string_view(line).substr(comma + 1), v) || u < 0 || v < 0)
      throw ParseError(located(edges_path, lineno, "expected two non-negative integers \"src,dst\""));
    if (static_cast<std::size_t>(u) >= n || static_cast<std::size_t>(v) >= n)
      throw ValidationError(located(edges_path, lineno,
                                    "edge (" + std::to_string(u) + "," + std::to_string(v) +
                                        ") references node " + std::to_string(std::max(u, v)) +
                                        " but the graph has " + std::to_string(n) + " nodes"));
    edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
  }
  if (!header) throw ParseError(located(edges_path, 1, "missing header \"src,dst\""));

  return TextGraph(CsrAdjacency::from_edges(n, edges), std::move(texts), std::move(labels),
                   std::move(splits));
}

void save_graph(const TextGraph& graph, const std::filesystem::path& nodes_path,
                const std::filesystem::path& edges_path) {
  const auto n = graph.num_nodes();
  std::vector<const char*> split_of(n, nullptr);
  for (NodeId v : graph.splits().train) split_of[v] = "train";
  for (NodeId v : graph.splits().val) split_of[v] = "val";
  for (NodeId v : graph.splits().test) split_of[v] = "test";

  std::string nodes;
  for (std::size_t i = 0; i < n; ++i) {
    json obj;
    obj["id"] = i;
    obj["text"] = graph.texts()[i];
    obj["label"] = graph.labels()[i] ? json(*graph.labels()[i]) : json(nullptr);
    obj["split"] = split_of[i] ? json(split_of[i]) : json(nullptr);
    nodes += obj.dump() + "\n";
  }
  write_file_atomic(nodes_path, nodes);

  std::string edges = "src,dst\n";
  for (auto [u, v] : graph.adjacency().edge_list())
    edges += std::to_string(u) + "," + std::to_string(v) + "\n";
  write_file_atomic(edges_path, edges);
}

void SyntheticSpec::validate() const {
  if (num_blocks < 1 || nodes_per_block < 1 || words_per_block < 1 || text_length < 1)
    throw ValidationError("synthetic spec counts must be >= 1");
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(intra_p) || !prob(inter_p) || !prob(noise))
    throw ValidationError("synthetic probabilities must lie in [0,1]");
  if (!(intra_p > inter_p)) throw ValidationError("synthetic spec requires intra_p > inter_p");
  if (train_frac < 0 || val_frac < 0 || train_frac + val_frac > 1)
    throw ValidationError("split fractions must be non-negative and sum to at most 1");
}

std::string synthetic_category_name(std::size_t block) {
  static const char* const kNames[] = {
      "alpha", "bravo", "charlie", "delta", "echo",  "foxtrot", "golf",    "hotel", "india",
      "juliet", "kilo", "lima",    "mike",  "november", "oscar", "papa",   "quebec", "romeo",
      "sierra", "tango", "uniform", "victor", "whiskey", "xray",  "yankee", "zulu"};
  constexpr std::size_t kCount = std::size(kNames);
  return std::string(kNames[block % kCount]) + std::string(block / kCount, 'z');
}

std::vector<std::string> synthetic_category_names(std::size_t num_blocks) {
  std::vector<std::string> out;
  for (std::size_t b = 0; b < num_blocks; ++b) out.push_back(synthetic_category_name(b));
  return out;
}

TextGraph make_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t n = spec.num_blocks * spec.nodes_per_block;
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto block_of = [&](std::size_t v) { return v / spec.nodes_per_block; };

  std::vector<Edge> edges;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v) {
      const double p = block_of(u) == block_of(v) ? spec.intra_p : spec.inter_p;
      if (unif(rng) < p) edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
    }

  const auto names = synthetic_category_names(spec.num_blocks);
  std::uniform_int_distribution<std::size_t> word_idx(0, spec.words_per_block - 1);
  std::vector<std::string> texts;
  std::vector<std::optional<int>> labels;
  for (std::size_t v = 0; v < n; ++v) {
    const auto b = block_of(v);
    std::string text;
    for (std::size_t t = 0; t < spec.text_length; ++t) {
      std::size_t pool = b;
      if (spec.num_blocks > 1 && unif(rng) < spec.noise) {
        std::uniform_int_distribution<std::size_t> other(0, spec.num_blocks - 2);
        pool = other(rng);
        if (pool >= b) ++pool;
      }
      if (!text.empty()) text += ' ';
      text += names[pool] + std::to_string(word_idx(rng));
    }
    texts.push_back(std::move(text));
    labels.emplace_back(static_cast<int>(b));
  }

  std::vector<NodeId> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<NodeId>(i);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto n_train = static_cast<std::size_t>(spec.train_frac * static_cast<double>(n) + 0.5);
  const auto n_val = std::min(n - n_train,
                              static_cast<std::size_t>(spec.val_frac * static_cast<double>(n) + 0.5));
  Splits splits;
  splits.train.assign(perm.begin(), perm.begin() + n_train);
  splits.val.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
  splits.test.assign(perm.begin() + n_train + n_val, perm.end());

  return TextGraph(CsrAdjacency::from_edges(n, edges), std::move(texts), std::move(labels),
                   std::move(splits));
}

std::size_t degree(const TextGraph& graph, NodeId v) {
  if (v >= graph.num_nodes())
    throw UsageError("node " + std::to_string(v) + " out of range (graph has " +
                     std::to_string(graph.num_nodes()) + " nodes)");
  return graph.adjacency().degree(v);
}

}  // namespace gaug
