#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "gaug/edge_modifier.hpp"
#include "gaug/eval_probe.hpp"
#include "gaug/ssl_objectives.hpp"
#include "gaug/text_encoder.hpp"
#include "support.hpp"

using namespace gaug;

namespace {

constexpr SslMethod kMethods[] = {SslMethod::kGraphCl, SslMethod::kGbt, SslMethod::kBgrl};

Mat unit_rows(const Mat& z) {
  Mat u = z;
  for (Eigen::Index i = 0; i < z.rows(); ++i) u.row(i) /= z.row(i).norm();
  return u;
}

// Direct NT-Xent: one term per anchor in each view.
double info_nce_oracle(const Mat& z1, const Mat& z2, double tau) {
  const Mat u = unit_rows(z1), v = unit_rows(z2);
  const auto n = u.rows();
  double total = 0;
  for (int side = 0; side < 2; ++side) {
    const Mat& a = side ? v : u;
    const Mat& b = side ? u : v;
    for (Eigen::Index i = 0; i < n; ++i) {
      double denom = 0;
      for (Eigen::Index k = 0; k < n; ++k) {
        denom += std::exp(a.row(i).dot(b.row(k)) / tau);
        if (k != i) denom += std::exp(a.row(i).dot(a.row(k)) / tau);
      }
      total -= std::log(std::exp(a.row(i).dot(b.row(i)) / tau) / denom);
    }
  }
  return total / (2.0 * static_cast<double>(n));
}

Mat standardized(const Mat& z) {
  const double n = static_cast<double>(z.rows());
  Mat out(z.rows(), z.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const double mean = z.col(j).sum() / n;
    double var = 0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) var += (z(i, j) - mean) * (z(i, j) - mean);
    const double sd = std::sqrt(var / n);
    for (Eigen::Index i = 0; i < z.rows(); ++i) out(i, j) = (z(i, j) - mean) / (sd + 1e-9);
  }
  return out;
}

double barlow_oracle(const Mat& z1, const Mat& z2, double lambda) {
  const Mat a = standardized(z1), b = standardized(z2);
  const double n = static_cast<double>(z1.rows());
  double loss = 0;
  for (Eigen::Index i = 0; i < a.cols(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      double c = 0;
      for (Eigen::Index r = 0; r < a.rows(); ++r) c += a(r, i) * b(r, j);
      c /= n;
      loss += i == j ? (1 - c) * (1 - c) : lambda * c * c;
    }
  return loss;
}

Mat permute_rows(const Mat& z, const std::vector<int>& perm) {
  Mat out(z.rows(), z.cols());
  for (std::size_t i = 0; i < perm.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = z.row(perm[i]);
  return out;
}

TextGraph fixture_graph(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.nodes_per_block = 60;
  spec.intra_p = 0.1;
  spec.inter_p = 0.02;
  spec.noise = 0.9;
  spec.train_frac = 0.05;
  spec.seed = seed;
  return make_synthetic(spec);
}

CsrAdjacency mask_like(const CsrAdjacency& a, std::uint64_t seed) {
  return mask_random_edges(a, a.num_edges() / 5, seed);
}

Mat fixture_features(const TextGraph& g) {
  return encode_all(HashingEncoderParams::random(4096, 64, 1, 2), g.texts());
}

}  // namespace

TEST_CASE("info_nce two-node closed form") {
  const Mat z = Mat::Identity(2, 2);
  const double want = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0 + 1.0));
  CHECK(info_nce_loss(z, z, 1.0).loss == doctest::Approx(want).epsilon(1e-12));
  CHECK_THROWS_AS(info_nce_loss(Mat::Ones(1, 3), Mat::Ones(1, 3), 1.0), UsageError);
  CHECK_THROWS_AS(info_nce_loss(z, z, 0.0), UsageError);
}

TEST_CASE("info_nce matches a direct oracle and its symmetries") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const Mat z1 = testing::random_mat(7, 4, rng), z2 = testing::random_mat(7, 4, rng);
    const double l = info_nce_loss(z1, z2, 0.5).loss;
    CHECK(l == doctest::Approx(info_nce_oracle(z1, z2, 0.5)).epsilon(1e-10));
    CHECK(l >= 0.0);

    Eigen::VectorXd scale = testing::random_mat(7, 1, rng).col(0).cwiseAbs().array() + 0.1;
    CHECK(info_nce_loss(scale.asDiagonal() * z1, z2, 0.5).loss == doctest::Approx(l).epsilon(1e-10));

    std::vector<int> perm(7);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    CHECK(info_nce_loss(permute_rows(z1, perm), permute_rows(z2, perm), 0.5).loss ==
          doctest::Approx(l).epsilon(1e-10));
  }
}

TEST_CASE("barlow twins matches a dense oracle") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const Mat z1 = testing::random_mat(8, 4, rng), z2 = testing::random_mat(8, 4, rng);
    const double l = barlow_twins_loss(z1, z2, 5e-3).loss;
    CHECK(std::abs(l - barlow_oracle(z1, z2, 5e-3)) <= 1e-9);
    CHECK(l >= 0.0);
  }
}

TEST_CASE("barlow twins on identical and column-shuffled views") {
  std::mt19937_64 rng(3);
  const Mat z = testing::random_mat(10, 5, rng);
  CHECK(barlow_twins_loss(z, z, 0.0).loss <= 1e-6);

  const std::vector<int> cols{2, 0, 1, 4, 3};
  Mat shuffled(z.rows(), z.cols());
  for (Eigen::Index j = 0; j < 5; ++j) shuffled.col(j) = z.col(cols[j]);
  const Mat a = standardized(z), b = standardized(shuffled);
  double diag = 0;
  for (Eigen::Index j = 0; j < 5; ++j) {
    const double c = a.col(j).dot(b.col(j)) / 10.0;
    diag += (1 - c) * (1 - c);
  }
  CHECK(barlow_twins_loss(z, shuffled, 0.0).loss == doctest::Approx(diag).epsilon(1e-10));
  CHECK(diag > 1.0);

  Mat constant = z;
  constant.col(1).setConstant(3.0);
  CHECK(std::isfinite(barlow_twins_loss(constant, z, 5e-3).loss));
}

TEST_CASE("bootstrap loss and ema") {
  std::mt19937_64 rng(4);
  const Mat z = testing::random_mat(6, 3, rng);
  CHECK(cosine_bootstrap_loss(z, z).loss <= 1e-12);
  CHECK(cosine_bootstrap_loss(z, -z).loss == doctest::Approx(4.0));
  CHECK(cosine_bootstrap_loss(z, z).g2.size() == 0);

  const auto online = EncoderParams::init(3, 4, 2, 1);
  auto target = EncoderParams::init(3, 4, 2, 2);
  const auto old = target;
  ema_update(target, online, 1.0);
  CHECK(target.w1 == old.w1);
  ema_update(target, online, 0.0);
  CHECK(target.w1 == online.w1);
  CHECK(target.w2 == online.w2);

  auto mid = old;
  ema_update(mid, online, 0.7);
  CHECK(mid.w1.rows() == old.w1.rows());
  const Mat lo = old.w1.cwiseMin(online.w1), hi = old.w1.cwiseMax(online.w1);
  CHECK(((mid.w1 - lo).array() >= -1e-15).all());
  CHECK(((hi - mid.w1).array() >= -1e-15).all());
  CHECK_THROWS_AS(ema_update(mid, online, 1.5), UsageError);
}

TEST_CASE("bgrl with identity predictor and matching target") {
  std::mt19937_64 rng(5);
  const auto a = testing::random_graph(8, 0.4, rng);
  const SpMat a_hat = normalized_adjacency(a);
  const Mat x = testing::random_mat(8, 5, rng);
  auto model = SslModel::init(SslMethod::kBgrl, 5, 6, 4, 1);
  model.head = Mlp::identity(4);
  const View v{&a_hat, &x};
  CHECK(ssl_loss(model, v, v, {}) <= 1e-6);
}

TEST_CASE("loss gradients match finite differences") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    Mat z1 = testing::random_mat(6, 4, rng), z2 = testing::random_mat(6, 4, rng);
    {
      const auto lg = info_nce_loss(z1, z2, 0.5);
      auto f = [&] { return info_nce_loss(z1, z2, 0.5).loss; };
      CHECK(testing::rel_error(lg.g1, testing::numeric_grad(z1, f)) <= 1e-4);
      CHECK(testing::rel_error(lg.g2, testing::numeric_grad(z2, f)) <= 1e-4);
    }
    {
      const auto lg = barlow_twins_loss(z1, z2, 0.1);
      auto f = [&] { return barlow_twins_loss(z1, z2, 0.1).loss; };
      CHECK(testing::rel_error(lg.g1, testing::numeric_grad(z1, f)) <= 1e-4);
      CHECK(testing::rel_error(lg.g2, testing::numeric_grad(z2, f)) <= 1e-4);
    }
    {
      const auto lg = cosine_bootstrap_loss(z1, z2);
      auto f = [&] { return cosine_bootstrap_loss(z1, z2).loss; };
      CHECK(testing::rel_error(lg.g1, testing::numeric_grad(z1, f)) <= 1e-4);
    }
  }
}

TEST_CASE("ssl step gradients reduce the loss for small steps") {
  std::mt19937_64 rng(7);
  const auto a = testing::random_graph(10, 0.3, rng);
  const SpMat a_hat = normalized_adjacency(a);
  const Mat x1 = testing::random_mat(10, 6, rng), x2 = testing::random_mat(10, 6, rng);
  const View v1{&a_hat, &x1}, v2{&a_hat, &x2};
  for (auto m : {SslMethod::kGraphCl, SslMethod::kGbt}) {
    auto model = SslModel::init(m, 6, 8, 4, 2);
    Adam opt({.lr = 1e-3});
    const double before = ssl_step(model, v1, v2, {}, opt);
    CHECK(ssl_loss(model, v1, v2, {}) < before);
  }
}

TEST_CASE("identical views give the exhaustive-negative value") {
  const auto g = fixture_graph(1);
  const Mat x = fixture_features(g);
  PretrainConfig cfg;
  cfg.method = SslMethod::kGraphCl;
  cfg.epochs = 1;
  cfg.hidden = 16;
  cfg.out_dim = 8;
  cfg.seed = 5;
  const auto adj = g.adjacency();
  const auto r = pretrain(adj, x, x, [&](std::size_t, std::uint64_t) { return adj; }, cfg);

  const auto init = SslModel::init(cfg.method, x.cols(), cfg.hidden, cfg.out_dim, cfg.seed);
  const Mat z = mlp_forward(init.head, encoder_forward(init.online, adj, x));
  REQUIRE(r.loss_trace.size() == 1);
  CHECK(r.loss_trace[0] == doctest::Approx(info_nce_oracle(z, z, cfg.info_nce_tau)).epsilon(1e-10));
}

TEST_CASE("pretraining is deterministic and validates inputs") {
  const auto g = fixture_graph(2);
  const Mat x = fixture_features(g);
  PretrainConfig cfg;
  cfg.epochs = 5;
  cfg.hidden = 16;
  cfg.out_dim = 8;
  const auto adj = g.adjacency();
  auto sampler = [&](std::size_t, std::uint64_t seed) { return mask_like(adj, seed); };
  for (auto m : kMethods) {
    cfg.method = m;
    CHECK(pretrain(adj, x, x, sampler, cfg).loss_trace == pretrain(adj, x, x, sampler, cfg).loss_trace);
  }
  CHECK_THROWS_AS(pretrain(adj, x, Mat::Zero(x.rows(), 3), sampler, cfg), ValidationError);
  cfg.ema_decay = 1.0;
  CHECK_THROWS_AS(pretrain(adj, x, x, sampler, cfg), ValidationError);
}

TEST_CASE("pretraining beats a random encoder under a linear probe") {
  constexpr int kSeeds = 5;
  for (auto m : kMethods) {
    double trained = 0, random = 0;
    for (int s = 0; s < kSeeds; ++s) {
      const auto g = fixture_graph(10 + s);
      const Mat x = fixture_features(g);
      const auto adj = g.adjacency();
      PretrainConfig cfg;
      cfg.method = m;
      cfg.epochs = 100;
      cfg.lr = 5e-3;
      cfg.hidden = 64;
      cfg.out_dim = 16;
      cfg.seed = s;
      auto sampler = [&](std::size_t, std::uint64_t seed) { return mask_like(adj, seed); };
      const auto r = pretrain(adj, x, x, sampler, cfg);
      const auto rand = SslModel::init(m, x.cols(), cfg.hidden, cfg.out_dim, s + 100);
      trained += linear_probe(encoder_forward(r.model.online, adj, x), g.labels(), g.splits(), {}).test_accuracy;
      random += linear_probe(encoder_forward(rand.online, adj, x), g.labels(), g.splits(), {}).test_accuracy;
    }
    INFO(method_name(m), " trained ", trained / kSeeds, " random ", random / kSeeds);
    CHECK(trained / kSeeds - random / kSeeds >= 0.10);
  }
}
