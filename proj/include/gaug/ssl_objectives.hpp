#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gaug/gnn_encoder.hpp"
#include "gaug/nn.hpp"
#include "gaug/tag_store.hpp"

namespace gaug {

enum class SslMethod { kGraphCl, kGbt, kBgrl };

std::string_view method_name(SslMethod m);
/// Accepts "graphcl", "gbt", "bgrl".
std::optional<SslMethod> parse_method(std::string_view name);

struct LossGrad {
  double loss = 0.0;
  Mat g1;  // d loss / d first argument
  Mat g2;  // d loss / d second argument (empty when it is a stop-gradient)
};

/// Symmetric NT-Xent over L2-normalized rows. The positive of node i is its
/// row in the other view; every other row of both views is a negative.
LossGrad info_nce_loss(const Mat& z1, const Mat& z2, double tau);

/// Columns standardized with the population std (+1e-9), C = z1' z2 / N,
/// loss = sum_i (1 - C_ii)^2 + lambda sum_{i != j} C_ij^2.
LossGrad barlow_twins_loss(const Mat& z1, const Mat& z2, double lambda);

/// 2 - 2 mean_i cos(pred_i, target_i); target is not differentiated.
LossGrad cosine_bootstrap_loss(const Mat& pred, const Mat& target);

/// target <- decay * target + (1 - decay) * online
void ema_update(EncoderParams& target, const EncoderParams& online, double decay);

struct View {
  const SpMat* a_hat;
  const Mat* x;
};

/// Encoder plus head. The head is the projector (GraphCL, GBT) or the
/// predictor (BGRL); `target` is only used by BGRL.
struct SslModel {
  SslMethod method = SslMethod::kBgrl;
  EncoderParams online;
  Mlp head;
  EncoderParams target;

  static SslModel init(SslMethod method, Eigen::Index in_dim, Eigen::Index hidden,
                       Eigen::Index out_dim, std::uint64_t seed);
  NamedTensors to_tensors() const;
};

struct StepConfig {
  double info_nce_tau = 0.5;
  double bt_lambda = 5e-3;
  double ema_decay = 0.99;
};

/// One full-batch optimisation step. Returns the loss before the update.
double ssl_step(SslModel& model, const View& view1, const View& view2, const StepConfig& config,
                Adam& opt);

/// The loss of `model` on the two views, without updating anything.
double ssl_loss(const SslModel& model, const View& view1, const View& view2, const StepConfig& config);

struct PretrainConfig {
  SslMethod method = SslMethod::kBgrl;
  std::size_t epochs = 100;
  double lr = 1e-3;
  double weight_decay = 0.0;
  double info_nce_tau = 0.5;
  double bt_lambda = 5e-3;
  double ema_decay = 0.99;
  Eigen::Index hidden = 256;
  Eigen::Index out_dim = 128;
  std::uint64_t seed = 0;

  void validate() const;
  StepConfig step() const { return {info_nce_tau, bt_lambda, ema_decay}; }
};

/// Produces the second view's adjacency for an epoch.
using AdjacencySampler = std::function<CsrAdjacency(std::size_t epoch, std::uint64_t epoch_seed)>;

struct PretrainResult {
  SslModel model;
  std::vector<double> loss_trace;
};

/// View 1 is (adjacency, x1) every epoch; view 2 is (sampler(epoch, seed_e),
/// x2) with seed_e derived from the master seed and the epoch.
PretrainResult pretrain(const CsrAdjacency& adjacency, const Mat& x1, const Mat& x2,
                        const AdjacencySampler& sampler, const PretrainConfig& config);

}  // namespace gaug
