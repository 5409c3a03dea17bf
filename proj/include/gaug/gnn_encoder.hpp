#pragma once

#include <cstdint>
#include <string>

#include "gaug/io.hpp"
#include "gaug/nn.hpp"
#include "gaug/tag_store.hpp"

namespace gaug {

/// D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I.
SpMat normalized_adjacency(const CsrAdjacency& adjacency);

struct EncoderParams {
  Mat w1;  // F x H
  RowVec b1;
  Mat w2;  // H x d
  RowVec b2;

  /// Glorot weights, zero biases.
  static EncoderParams init(Eigen::Index in_dim, Eigen::Index hidden, Eigen::Index out_dim,
                            std::uint64_t seed);
  static EncoderParams zeros_like(const EncoderParams& other);

  Eigen::Index in_dim() const { return w1.rows(); }
  Eigen::Index hidden() const { return w1.cols(); }
  Eigen::Index out_dim() const { return w2.cols(); }

  /// Throws ValidationError on inconsistent shapes or non-finite entries.
  void validate(Eigen::Index in_dim) const;

  NamedTensors to_tensors(const std::string& prefix) const;
  static EncoderParams from_tensors(const NamedTensors& tensors, const std::string& prefix);
};

struct EncoderCache {
  SpMat a_hat;
  Mat ax;
  Mat pre1;
  Mat h1;
  Mat ah1;
};

struct EncoderGrads {
  Mat w1;
  RowVec b1;
  Mat w2;
  RowVec b2;
  Mat x;  // w.r.t. input features
};

/// A_hat relu(A_hat X W1 + b1) W2 + b2, where `a_hat` comes from
/// normalized_adjacency().
Mat encoder_forward(const EncoderParams& params, const SpMat& a_hat, const Mat& features,
                    EncoderCache* cache = nullptr);
Mat encoder_forward(const EncoderParams& params, const CsrAdjacency& adjacency, const Mat& features);

EncoderGrads encoder_backward(const EncoderParams& params, const EncoderCache& cache,
                              const Mat& upstream);

/// Applies one Adam step to all encoder tensors, using slots [first, first+4).
void adam_update(Adam& opt, std::size_t first_slot, EncoderParams& params, const EncoderGrads& grads);

struct SupervisedConfig {
  double lr = 0.01;
  std::size_t epochs = 200;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;
};

struct SupervisedResult {
  EncoderParams params;
  Mat head_w;  // d x C
  RowVec head_b;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::vector<double> loss_trace;
};

/// Trains encoder and a linear head with cross-entropy on the train split.
/// Reports accuracies of the final parameters.
SupervisedResult train_supervised(const TextGraph& graph, const Mat& features,
                                  const EncoderParams& init, const SupervisedConfig& config);

}  // namespace gaug
