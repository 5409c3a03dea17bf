#include <doctest.h>

#include <algorithm>
#include <random>
#include <stdexcept>

#include "gaug/eval_probe.hpp"
#include "support.hpp"

using namespace gaug;

namespace {

struct Fixture {
  Mat emb;
  std::vector<std::optional<int>> labels;
  Splits splits;
};

// Two Gaussian blobs at +/- `sep` along the first axis.
Fixture blobs(std::size_t n, double sep, std::mt19937_64& rng) {
  Fixture f;
  f.emb = testing::random_mat(static_cast<Eigen::Index>(n), 5, rng, 0.5);
  std::vector<NodeId> order(n);
  for (NodeId v = 0; v < n; ++v) {
    const int y = v % 2;
    f.labels.push_back(y);
    f.emb(v, 0) += y ? sep : -sep;
    order[v] = v;
  }
  std::shuffle(order.begin(), order.end(), rng);
  const auto a = n / 5, b = 2 * n / 5;
  f.splits.train.assign(order.begin(), order.begin() + a);
  f.splits.val.assign(order.begin() + a, order.begin() + b);
  f.splits.test.assign(order.begin() + b, order.end());
  return f;
}

}  // namespace

TEST_CASE("separable embeddings are classified perfectly") {
  std::mt19937_64 rng(1);
  const auto f = blobs(200, 10.0, rng);
  const auto r = linear_probe(f.emb, f.labels, f.splits, {});
  CHECK(r.test_accuracy == 1.0);
  CHECK(r.val_accuracy == 1.0);
  CHECK(r.best_epoch >= 1);
}

TEST_CASE("shuffled labels give chance accuracy") {
  std::mt19937_64 rng(2);
  double total = 0;
  constexpr int kRuns = 5;
  for (int run = 0; run < kRuns; ++run) {
    auto f = blobs(300, 10.0, rng);
    std::shuffle(f.labels.begin(), f.labels.end(), rng);
    total += linear_probe(f.emb, f.labels, f.splits, {}).test_accuracy;
  }
  CHECK(std::abs(total / kRuns - 0.5) <= 0.15);
}

TEST_CASE("probe is deterministic and leaves embeddings untouched") {
  std::mt19937_64 rng(3);
  const auto f = blobs(100, 0.5, rng);
  const Mat copy = f.emb;
  const auto a = linear_probe(f.emb, f.labels, f.splits, {});
  const auto b = linear_probe(f.emb, f.labels, f.splits, {});
  CHECK(a.test_accuracy == b.test_accuracy);
  CHECK(a.best_epoch == b.best_epoch);
  CHECK(f.emb == copy);
}

TEST_CASE("probe input validation") {
  std::mt19937_64 rng(4);
  auto f = blobs(50, 1.0, rng);
  auto empty = f.splits;
  empty.val.clear();
  CHECK_THROWS_AS(linear_probe(f.emb, f.labels, empty, {}), ValidationError);
  auto unlabeled = f.labels;
  unlabeled[f.splits.train[0]].reset();
  CHECK_THROWS_AS(linear_probe(f.emb, unlabeled, f.splits, {}), ValidationError);
  CHECK_THROWS_AS(linear_probe(f.emb.topRows(10), f.labels, f.splits, {}), UsageError);
  f.emb(0, 0) = std::nan("");
  CHECK_THROWS_AS(linear_probe(f.emb, f.labels, f.splits, {}), NumericError);
}

TEST_CASE("summary statistics") {
  EvalReport same;
  same.accs = {0.7, 0.7, 0.7, 0.7, 0.7};
  summarize(same);
  CHECK(same.std == 0.0);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unit(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    EvalReport r;
    for (int i = 0; i < 5; ++i) r.accs.push_back(unit(rng));
    summarize(r);
    long double sum = 0;
    for (double a : r.accs) sum += a;
    const double mean = static_cast<double>(sum / 5);
    long double var = 0;
    for (double a : r.accs) var += (a - mean) * (a - mean);
    CHECK(std::abs(r.mean - mean) <= 1e-12);
    CHECK(std::abs(r.std - std::sqrt(static_cast<double>(var / 5))) <= 1e-12);
  }
}

TEST_CASE("evaluate_runs aggregates and records failures") {
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  auto run = [](std::uint64_t s) { return 0.5 + 0.01 * static_cast<double>(s); };
  const auto a = evaluate_runs(seeds, run, "abc");
  const auto b = evaluate_runs(seeds, run, "abc");
  CHECK(a.to_json() == b.to_json());
  CHECK(a.complete);
  CHECK(a.mean == doctest::Approx(0.53));

  const auto partial = evaluate_runs(seeds, [](std::uint64_t s) -> double {
    if (s == 3) throw std::runtime_error("boom");
    return 0.5;
  }, "abc");
  CHECK_FALSE(partial.complete);
  CHECK(partial.accs.size() == 4);
  REQUIRE(partial.failures.size() == 1);
  CHECK(partial.failures[0].find("seed 3") != std::string::npos);

  CHECK_THROWS_AS(evaluate_runs({}, run, "x"), ValidationError);
  CHECK_THROWS_AS(evaluate_runs({1, 1}, run, "x"), ValidationError);
}

TEST_CASE("report json round trip") {
  EvalReport r;
  r.accs = {0.1, 0.25, 1.0 / 3.0};
  summarize(r);
  r.fingerprint = "deadbeef";
  auto back = EvalReport::from_json(r.to_json());
  CHECK(back.accs == r.accs);
  CHECK(back.mean == r.mean);
  CHECK(back.std == r.std);
  CHECK(back.fingerprint == r.fingerprint);
  CHECK(back.complete);
  CHECK(r.to_json().find("complete") == std::string::npos);

  r.complete = false;
  r.failures = {"seed 1: x"};
  back = EvalReport::from_json(r.to_json());
  CHECK_FALSE(back.complete);
  CHECK(back.failures == r.failures);
  CHECK_THROWS_AS(EvalReport::from_json("{"), ParseError);
}
