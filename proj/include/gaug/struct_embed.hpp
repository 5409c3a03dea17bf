#pragma once

#include <cstdint>
#include <vector>

#include "gaug/common.hpp"
#include "gaug/tag_store.hpp"

namespace gaug {

struct WalkConfig {
  std::size_t walks_per_node = 10;
  std::size_t walk_length = 40;
  std::size_t window = 5;
  std::size_t dim = 64;
  std::size_t negatives = 5;
  std::size_t epochs = 3;
  double lr = 0.025;
  std::uint64_t seed = 0;

  void validate() const;
};

struct StructEmbedding {
  Mat vectors;  // N x dim
};

using Walk = std::vector<NodeId>;

/// `walks_per_node` uniform random walks from every non-isolated node. Each
/// walk has `walk_length` nodes including its start. Only the adjacency is
/// read, never texts or labels.
std::vector<Walk> random_walks(const CsrAdjacency& adjacency, const WalkConfig& config);

struct SkipgramResult {
  StructEmbedding embedding;
  std::vector<double> loss_trace;  // mean loss per epoch
};

/// Skip-gram with negative sampling from the unigram^0.75 distribution.
/// Rows start as N(0, 0.01^2); nodes absent from the walks keep that value.
SkipgramResult train_skipgram(const std::vector<Walk>& walks, std::size_t num_nodes,
                              const WalkConfig& config);

/// Cosine similarity; 0 when either row is zero. Throws UsageError on
/// out-of-range ids.
double pairwise_similarity(const StructEmbedding& emb, NodeId v, NodeId u);

}  // namespace gaug
