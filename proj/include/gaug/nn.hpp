#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "gaug/common.hpp"

namespace gaug {

using RowVec = Eigen::RowVectorXd;

/// Glorot-uniform weights.
Mat glorot(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);

Mat relu(const Mat& x);

/// Two-layer perceptron with a ReLU in between.
struct Mlp {
  Mat w1;
  RowVec b1;
  Mat w2;
  RowVec b2;

  static Mlp init(Eigen::Index in, Eigen::Index hidden, Eigen::Index out, std::mt19937_64& rng);
  static Mlp identity(Eigen::Index dim);
};

struct MlpCache {
  Mat x;
  Mat pre;
  Mat h;
};

struct MlpGrads {
  Mat w1;
  RowVec b1;
  Mat w2;
  RowVec b2;
  Mat x;
};

Mat mlp_forward(const Mlp& mlp, const Mat& x, MlpCache* cache = nullptr);
MlpGrads mlp_backward(const Mlp& mlp, const MlpCache& cache, const Mat& upstream);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Adam with per-slot moment buffers. Call next_step() once per iteration,
/// then update() for every tensor in a fixed slot order.
class Adam {
 public:
  explicit Adam(AdamConfig config) : config_(config) {}

  void next_step() { ++t_; }
  void update(std::size_t slot, double* param, const double* grad, std::size_t size);

  template <class P, class G>
  void update(std::size_t slot, P& param, const G& grad) {
    update(slot, param.data(), grad.data(), static_cast<std::size_t>(param.size()));
  }

 private:
  AdamConfig config_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Softmax cross-entropy for integer targets; gradient w.r.t. logits is
/// averaged over the rows.
double softmax_cross_entropy(const Mat& logits, const std::vector<int>& targets, Mat* grad);

std::vector<int> argmax_rows(const Mat& x);

}  // namespace gaug
