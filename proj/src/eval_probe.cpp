#include "gaug/eval_probe.hpp"

#include <cmath>
#include <json.hpp>
#include <set>

#include "gaug/nn.hpp"

namespace gaug {

using nlohmann::json;

namespace {

Mat gather_rows(const Mat& x, const std::vector<NodeId>& rows) {
  Mat out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  return out;
}

double accuracy(const Mat& logits, const std::vector<int>& truth) {
  const auto pred = argmax_rows(logits);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += pred[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

}  // namespace

ProbeResult linear_probe(const Mat& embeddings, const std::vector<std::optional<int>>& labels,
                         const Splits& splits, const ProbeConfig& config) {
  if (static_cast<std::size_t>(embeddings.rows()) != labels.size())
    throw UsageError("embedding rows and labels differ in count");
  if (!embeddings.allFinite()) throw NumericError("probe embeddings contain non-finite values");
  const std::pair<const char*, const std::vector<NodeId>*> named[] = {
      {"train", &splits.train}, {"val", &splits.val}, {"test", &splits.test}};
  int classes = 0;
  std::vector<int> y[3];
  for (int s = 0; s < 3; ++s) {
    if (named[s].second->empty()) throw ValidationError(std::string(named[s].first) + " split is empty");
    for (NodeId v : *named[s].second) {
      if (v >= labels.size() || !labels[v])
        throw ValidationError("node " + std::to_string(v) + " in the " + named[s].first + " split has no label");
      y[s].push_back(*labels[v]);
      classes = std::max(classes, *labels[v] + 1);
    }
  }

  const RowVec mean = embeddings.colwise().mean();
  const Mat centered = embeddings.rowwise() - mean;
  RowVec scale = (centered.array().square().colwise().sum() / static_cast<double>(embeddings.rows())).sqrt().matrix();
  for (Eigen::Index j = 0; j < scale.size(); ++j)
    if (scale(j) < 1e-12) scale(j) = 1.0;
  Mat x = centered;
  for (Eigen::Index j = 0; j < x.cols(); ++j) x.col(j) /= scale(j);

  const Mat xs[3] = {gather_rows(x, splits.train), gather_rows(x, splits.val), gather_rows(x, splits.test)};
  Mat w = Mat::Zero(x.cols(), classes);
  RowVec b = RowVec::Zero(classes);
  Adam opt({.lr = config.lr});
  auto logits_of = [&](const Mat& rows) {
    Mat l = rows * w;
    l.rowwise() += b;
    return l;
  };

  ProbeResult best;
  double best_val = -1.0;
  double best_loss = 0.0;
  const auto every = std::max<std::size_t>(config.eval_every, 1);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    Mat dlogits;
    softmax_cross_entropy(logits_of(xs[0]), y[0], &dlogits);
    const Mat dw = xs[0].transpose() * dlogits + config.l2 * w;
    const RowVec db = dlogits.colwise().sum();
    opt.next_step();
    opt.update(0, w, dw);
    opt.update(1, b, db);
    if (epoch % every == 0 || epoch == config.epochs) {
      const Mat val_logits = logits_of(xs[1]);
      const double val = accuracy(val_logits, y[1]);
      const double val_loss = softmax_cross_entropy(val_logits, y[1], nullptr);
      if (val > best_val || (val == best_val && val_loss < best_loss)) {
        best_val = val;
        best_loss = val_loss;
        best.val_accuracy = val;
        best.test_accuracy = accuracy(logits_of(xs[2]), y[2]);
        best.best_epoch = epoch;
      }
    }
  }
  if (best_val < 0.0) {
    best.val_accuracy = accuracy(logits_of(xs[1]), y[1]);
    best.test_accuracy = accuracy(logits_of(xs[2]), y[2]);
  }
  return best;
}

std::string EvalReport::to_json() const {
  json j{{"accs", accs}, {"mean", mean}, {"std", std}, {"fingerprint", fingerprint}};
  if (!complete) {
    j["complete"] = false;
    j["failures"] = failures;
  }
  return j.dump(2) + "\n";
}

EvalReport EvalReport::from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    EvalReport r;
    r.accs = j.at("accs").get<std::vector<double>>();
    r.mean = j.at("mean").get<double>();
    r.std = j.at("std").get<double>();
    r.fingerprint = j.at("fingerprint").get<std::string>();
    r.complete = j.value("complete", true);
    if (j.contains("failures")) r.failures = j.at("failures").get<std::vector<std::string>>();
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("report: ") + e.what());
  }
}

void summarize(EvalReport& report) {
  if (report.accs.empty()) {
    report.mean = report.std = 0.0;
    return;
  }
  double sum = 0.0;
  for (double a : report.accs) sum += a;
  report.mean = sum / static_cast<double>(report.accs.size());
  double var = 0.0;
  for (double a : report.accs) var += (a - report.mean) * (a - report.mean);
  report.std = std::sqrt(var / static_cast<double>(report.accs.size()));
}

EvalReport evaluate_runs(const std::vector<std::uint64_t>& seeds,
                         const std::function<double(std::uint64_t)>& run_one,
                         const std::string& fingerprint) {
  if (seeds.empty()) throw ValidationError("evaluation needs at least one seed");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw ValidationError("evaluation seeds must be distinct");
  EvalReport report;
  report.fingerprint = fingerprint;
  for (auto seed : seeds) {
    try {
      report.accs.push_back(run_one(seed));
    } catch (const std::exception& e) {
      report.complete = false;
      report.failures.push_back("seed " + std::to_string(seed) + ": " + e.what());
    }
  }
  summarize(report);
  return report;
}

}  // namespace gaug
