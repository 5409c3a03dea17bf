#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "gaug/common.hpp"
#include "gaug/prompt_experts.hpp"
#include "gaug/tag_store.hpp"
#include "gaug/text_encoder.hpp"

namespace gaug {

struct FusionParams {
  Vec w1;       // plain attention weights, length D
  Mat w2;       // context bilinear form, D x D
  double tau = 0.2;

  static FusionParams zeros(std::size_t dim, double tau = 0.2);
  void validate() const;
};

/// Max-subtracted softmax; throws NumericError on non-finite logits.
Vec stable_softmax(const Vec& logits);

/// Softmax over w1·x_i / tau. `experts` holds one expert vector per row.
Vec attention_plain(const FusionParams& params, const Mat& experts);

/// Softmax over ctx_i · W2 · x_i / tau.
Vec attention_context(const FusionParams& params, const Mat& experts, const Mat& contexts);

/// (w1·x_i + ctx_i · W2 · x_i) / tau
Vec combined_logits(const FusionParams& params, const Mat& experts, const Mat& contexts);

struct FusedFeature {
  Vec fused;
  Vec attention;
};

/// Attention over the combined logits and the attention-weighted expert sum.
FusedFeature fuse(const FusionParams& params, const Mat& experts, const Mat& contexts);

/// Featurized expert texts and context prompts of every node.
struct FusionInputs {
  std::vector<std::array<SparseVec, kNumExperts>> experts;
  std::vector<std::array<SparseVec, kNumExperts>> contexts;

  std::size_t num_nodes() const { return experts.size(); }
};

FusionInputs featurize_sets(std::span<const AugmentedTextSet> sets, std::size_t vocab_dim,
                            std::uint64_t hash_seed);

struct ExpertFeatureBank {
  std::vector<Mat> expert_vecs;  // per node, 4 x D
  std::vector<Mat> ctx_vecs;     // per node, 4 x D
  Mat fused;                     // N x D
  Mat attention;                 // N x 4
};

ExpertFeatureBank build_bank(const FusionInputs& inputs, const HashingEncoderParams& encoder,
                             const FusionParams& fusion);

/// Features of a single expert's text for every node (N x D).
Mat single_expert_features(const FusionInputs& inputs, const HashingEncoderParams& encoder,
                           ExpertKind kind);

struct LinkSample {
  NodeId node = 0;
  NodeId target = 0;
  double label = 0.0;

  bool operator==(const LinkSample&) const = default;
};

/// Neighbors as positives and `negatives` uniform non-neighbors per positive
/// (per node when it has no neighbors).
std::vector<LinkSample> sample_link_targets(const CsrAdjacency& adjacency, std::size_t negatives,
                                            std::uint64_t seed);

struct FusionGrads {
  Mat projection;
  Vec w1;
  Mat w2;
};

/// Mean binary cross-entropy of sigmoid(fused_v · target_u) over `samples`.
/// Fills `grads` when non-null.
double fusion_loss(const FusionInputs& inputs, std::span<const LinkSample> samples,
                   const Mat& targets, const HashingEncoderParams& encoder,
                   const FusionParams& fusion, FusionGrads* grads);

struct FusionTrainConfig {
  double lr = 6e-5;
  std::size_t epochs = 5;
  std::size_t batch = 32;
  std::size_t negatives = 5;
  std::uint64_t seed = 0;
};

struct FusionTrainResult {
  /// Full-objective loss before training (index 0) and after each epoch.
  std::vector<double> loss_trace;
};

/// Link-reconstruction training of the projection and fusion weights with
/// plain minibatch gradient descent. Reconstruction targets are the raw-text
/// encodings under the initial projection and stay fixed.
FusionTrainResult train_fusion(const TextGraph& graph, const FusionInputs& inputs,
                               HashingEncoderParams& encoder, FusionParams& fusion,
                               const FusionTrainConfig& config);

}  // namespace gaug
