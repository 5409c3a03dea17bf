#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gaug/common.hpp"
#include "gaug/tag_store.hpp"

namespace gaug {

struct ProbeConfig {
  double lr = 0.01;
  std::size_t epochs = 300;
  double l2 = 1e-4;
  std::size_t eval_every = 10;
};

struct ProbeResult {
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::size_t best_epoch = 0;
};

/// Multinomial logistic regression on standardized, frozen embeddings,
/// trained on the train split. The checkpoint with the best validation
/// accuracy (lower validation loss on ties) supplies the reported test accuracy.
ProbeResult linear_probe(const Mat& embeddings, const std::vector<std::optional<int>>& labels,
                         const Splits& splits, const ProbeConfig& config);

struct EvalReport {
  std::vector<double> accs;
  double mean = 0.0;
  double std = 0.0;  // population
  std::string fingerprint;
  bool complete = true;
  std::vector<std::string> failures;

  /// {"accs":[...],"mean":..,"std":..,"fingerprint":".."}, plus
  /// "complete" and "failures" when a run failed.
  std::string to_json() const;
  static EvalReport from_json(const std::string& text);
};

/// Fills mean and std from accs.
void summarize(EvalReport& report);

/// Runs `run_one` for every seed. A throwing run is recorded in `failures`
/// and marks the report incomplete.
EvalReport evaluate_runs(const std::vector<std::uint64_t>& seeds,
                         const std::function<double(std::uint64_t)>& run_one,
                         const std::string& fingerprint);

}  // namespace gaug
