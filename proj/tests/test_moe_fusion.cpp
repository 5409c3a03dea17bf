#include <doctest.h>

#include <cmath>
#include <random>

#include "gaug/moe_fusion.hpp"
#include "support.hpp"

using namespace gaug;
using testing::numeric_grad;
using testing::random_mat;
using testing::rel_error;

namespace {

Vec softmax_oracle(const std::vector<double>& z) {
  double m = z[0];
  for (double x : z) m = std::max(m, x);
  double s = 0;
  for (double x : z) s += std::exp(x - m);
  Vec out(static_cast<Eigen::Index>(z.size()));
  for (std::size_t i = 0; i < z.size(); ++i) out(static_cast<Eigen::Index>(i)) = std::exp(z[i] - m) / s;
  return out;
}

FusionParams random_fusion(Eigen::Index d, std::mt19937_64& rng, double tau = 0.2) {
  FusionParams p = FusionParams::zeros(static_cast<std::size_t>(d), tau);
  p.w1 = random_mat(d, 1, rng).col(0);
  p.w2 = random_mat(d, d, rng);
  return p;
}

struct Fixture {
  TextGraph graph;
  FusionInputs inputs;
};

Fixture mock_fixture(TextGraph graph, std::size_t vocab) {
  Fixture f{std::move(graph), {}};
  Gateway gw(std::make_shared<MockBackend>(MockPolicy{}));
  const auto sets = augment_all(f.graph, gw, CategorySet(synthetic_category_names(2)), {}).sets;
  f.inputs = featurize_sets(sets, vocab, 13);
  return f;
}

Fixture mock_fixture(const SyntheticSpec& spec, std::size_t vocab) {
  return mock_fixture(make_synthetic(spec), vocab);
}

}  // namespace

TEST_CASE("identical experts get uniform attention") {
  std::mt19937_64 rng(1);
  const auto p = random_fusion(5, rng);
  const Mat row = random_mat(1, 5, rng);
  const Mat experts = row.replicate(4, 1);
  const Mat ctx = random_mat(1, 5, rng).replicate(4, 1);
  CHECK((fuse(p, experts, ctx).attention.array() - 0.25).abs().maxCoeff() <= 1e-12);
}

TEST_CASE("zero weights give uniform attention and the mean vector") {
  std::mt19937_64 rng(2);
  const auto p = FusionParams::zeros(6);
  const Mat experts = random_mat(4, 6, rng);
  const Mat ctx = random_mat(4, 6, rng);
  CHECK((attention_plain(p, experts).array() - 0.25).abs().maxCoeff() == 0.0);
  CHECK((attention_context(p, experts, ctx).array() - 0.25).abs().maxCoeff() == 0.0);
  const auto f = fuse(p, experts, ctx);
  CHECK((f.fused - experts.colwise().mean().transpose()).norm() <= 1e-12);
}

TEST_CASE("plain attention matches a scalar softmax") {
  auto p = FusionParams::zeros(1, 0.2);
  p.w1(0) = 1.0;
  Mat experts(4, 1);
  experts << 1, 2, 3, 4;
  const Vec want = softmax_oracle({1 / 0.2, 2 / 0.2, 3 / 0.2, 4 / 0.2});
  CHECK((attention_plain(p, experts) - want).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("context attention with identity W2 and shared context") {
  std::mt19937_64 rng(3);
  auto p = FusionParams::zeros(3, 0.5);
  p.w2 = Mat::Identity(3, 3);
  const Mat experts = random_mat(4, 3, rng);
  const Mat c = random_mat(1, 3, rng);
  std::vector<double> z;
  for (int i = 0; i < 4; ++i) z.push_back(c.row(0).dot(experts.row(i)) / 0.5);
  CHECK((attention_context(p, experts, c.replicate(4, 1)) - softmax_oracle(z)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("context attention matches a brute-force bilinear form") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_fusion(3, rng, 0.7);
    const Mat experts = random_mat(4, 3, rng);
    const Mat ctx = random_mat(4, 3, rng);
    std::vector<double> z, zc;
    for (int i = 0; i < 4; ++i) {
      double bil = 0, lin = 0;
      for (int a = 0; a < 3; ++a) {
        lin += p.w1(a) * experts(i, a);
        for (int b = 0; b < 3; ++b) bil += ctx(i, a) * p.w2(a, b) * experts(i, b);
      }
      zc.push_back(bil / 0.7);
      z.push_back((lin + bil) / 0.7);
    }
    CHECK((attention_context(p, experts, ctx) - softmax_oracle(zc)).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((fuse(p, experts, ctx).attention - softmax_oracle(z)).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("a dominant logit selects its expert") {
  std::mt19937_64 rng(5);
  auto p = FusionParams::zeros(4, 1.0);
  p.w1 << 1e3, 0, 0, 0;
  Mat experts = 0.01 * random_mat(4, 4, rng);
  experts(2, 0) = 1.0;
  const auto f = fuse(p, experts, Mat::Zero(4, 4));
  CHECK((f.fused - experts.row(2).transpose()).norm() <= 1e-6);
}

TEST_CASE("permuting experts permutes attention and keeps the fused vector") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = random_fusion(5, rng);
    const Mat experts = random_mat(4, 5, rng);
    const Mat ctx = random_mat(4, 5, rng);
    std::vector<int> perm{0, 1, 2, 3};
    std::shuffle(perm.begin(), perm.end(), rng);
    Mat pe(4, 5), pc(4, 5);
    for (int i = 0; i < 4; ++i) {
      pe.row(i) = experts.row(perm[i]);
      pc.row(i) = ctx.row(perm[i]);
    }
    const auto a = fuse(p, experts, ctx), b = fuse(p, pe, pc);
    for (int i = 0; i < 4; ++i) CHECK(std::abs(b.attention(i) - a.attention(perm[i])) <= 1e-9);
    CHECK((a.fused - b.fused).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("softmax and shape errors") {
  Vec bad(2);
  bad << 1.0, std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(stable_softmax(bad), NumericError);
  Vec big(3);
  big << 1e308, 1e308, -1e308;
  CHECK(stable_softmax(big).sum() == doctest::Approx(1.0));
  const auto p = FusionParams::zeros(3);
  CHECK_THROWS_AS(attention_plain(p, Mat::Zero(4, 2)), UsageError);
  CHECK_THROWS_AS(attention_context(p, Mat::Zero(4, 3), Mat::Zero(3, 3)), UsageError);
  auto q = p;
  q.tau = 0;
  CHECK_THROWS_AS(q.validate(), ValidationError);
}

TEST_CASE("link targets") {
  std::mt19937_64 rng(7);
  const auto a = testing::random_graph(12, 0.3, rng);
  const auto samples = sample_link_targets(a, 3, 5);
  std::vector<std::size_t> pos(12, 0), neg(12, 0);
  for (const auto& s : samples) {
    CHECK(s.node != s.target);
    CHECK(a.has_edge(s.node, s.target) == (s.label == 1.0));
    (s.label == 1.0 ? pos : neg)[s.node]++;
  }
  for (NodeId v = 0; v < 12; ++v) {
    CHECK(pos[v] == a.degree(v));
    CHECK(neg[v] == 3 * std::max<std::size_t>(1, a.degree(v)));
  }
  CHECK(samples == sample_link_targets(a, 3, 5));
}

TEST_CASE("edgeless graph has only negative terms and exact gradients") {
  SyntheticSpec spec;
  spec.nodes_per_block = 3;
  const auto base = make_synthetic(spec);
  auto fx = mock_fixture(TextGraph(CsrAdjacency::from_edges(base.num_nodes(), std::vector<Edge>{}),
                                   base.texts(), base.labels(), base.splits()),
                         24);
  const auto samples = sample_link_targets(fx.graph.adjacency(), 2, 1);
  for (const auto& s : samples) CHECK(s.label == 0.0);

  std::mt19937_64 rng(8);
  auto enc = HashingEncoderParams::random(24, 5, 13, 3);
  auto fusion = random_fusion(5, rng, 0.5);
  const Mat targets = random_mat(static_cast<Eigen::Index>(fx.graph.num_nodes()), 5, rng);
  FusionGrads g;
  fusion_loss(fx.inputs, samples, targets, enc, fusion, &g);
  auto f = [&] { return fusion_loss(fx.inputs, samples, targets, enc, fusion, nullptr); };
  CHECK(rel_error(g.projection, numeric_grad(enc.projection, f)) <= 1e-4);
  CHECK(rel_error(g.w1, numeric_grad(fusion.w1, f)) <= 1e-4);
  CHECK(rel_error(g.w2, numeric_grad(fusion.w2, f)) <= 1e-4);
}

TEST_CASE("fusion gradients on a connected graph") {
  SyntheticSpec spec;
  spec.nodes_per_block = 4;
  spec.intra_p = 0.8;
  spec.inter_p = 0.1;
  spec.seed = 3;
  auto fx = mock_fixture(spec, 32);
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 3; ++trial) {
    auto enc = HashingEncoderParams::random(32, 4, 13, trial);
    auto fusion = random_fusion(4, rng, 0.3);
    const Mat targets = random_mat(8, 4, rng);
    const auto samples = sample_link_targets(fx.graph.adjacency(), 2, trial);
    FusionGrads g;
    fusion_loss(fx.inputs, samples, targets, enc, fusion, &g);
    auto f = [&] { return fusion_loss(fx.inputs, samples, targets, enc, fusion, nullptr); };
    CHECK(rel_error(g.projection, numeric_grad(enc.projection, f)) <= 1e-4);
    CHECK(rel_error(g.w1, numeric_grad(fusion.w1, f)) <= 1e-4);
    CHECK(rel_error(g.w2, numeric_grad(fusion.w2, f)) <= 1e-4);
  }
}

TEST_CASE("training decreases the loss and separates the cliques") {
  SyntheticSpec spec;
  spec.nodes_per_block = 10;
  spec.intra_p = 1.0;
  spec.inter_p = 0.0;
  spec.noise = 0.2;
  spec.seed = 5;
  auto fx = mock_fixture(spec, 512);
  auto enc = HashingEncoderParams::random(512, 16, 13, 1);
  auto fusion = FusionParams::zeros(16);
  const Mat targets = encode_all(enc, fx.graph.texts());

  FusionTrainConfig cfg;
  const auto slow = train_fusion(fx.graph, fx.inputs, enc, fusion, cfg);
  REQUIRE(slow.loss_trace.size() == 6);
  for (std::size_t e = 1; e < slow.loss_trace.size(); ++e) CHECK(slow.loss_trace[e] < slow.loss_trace[e - 1]);

  enc = HashingEncoderParams::random(512, 16, 13, 1);
  fusion = FusionParams::zeros(16);
  cfg.lr = 1.0;
  cfg.epochs = 300;
  const auto fast = train_fusion(fx.graph, fx.inputs, enc, fusion, cfg);
  CHECK(fast.loss_trace.back() < fast.loss_trace.front());
  const auto bank = build_bank(fx.inputs, enc, fusion);
  double intra = 0, inter = 0, n_intra = 0, n_inter = 0;
  for (NodeId v = 0; v < fx.graph.num_nodes(); ++v)
    for (NodeId u = 0; u < fx.graph.num_nodes(); ++u) {
      if (u == v) continue;
      const double s = 1.0 / (1.0 + std::exp(-bank.fused.row(v).dot(targets.row(u))));
      if (*fx.graph.labels()[u] == *fx.graph.labels()[v]) {
        intra += s;
        ++n_intra;
      } else {
        inter += s;
        ++n_inter;
      }
    }
  CHECK(intra / n_intra > inter / n_inter);
  for (Eigen::Index v = 0; v < bank.attention.rows(); ++v)
    CHECK(bank.attention.row(v).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("single expert features are that expert's projection") {
  SyntheticSpec spec;
  spec.nodes_per_block = 3;
  auto fx = mock_fixture(spec, 64);
  const auto enc = HashingEncoderParams::random(64, 6, 13, 2);
  const auto bank = build_bank(fx.inputs, enc, FusionParams::zeros(6));
  for (auto k : kAllExperts) {
    const Mat single = single_expert_features(fx.inputs, enc, k);
    for (std::size_t v = 0; v < fx.inputs.num_nodes(); ++v)
      CHECK((single.row(static_cast<Eigen::Index>(v)) - bank.expert_vecs[v].row(static_cast<Eigen::Index>(k))).norm() == 0.0);
  }
}
