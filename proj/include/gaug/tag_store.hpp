#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gaug/common.hpp"

namespace gaug {

using Edge = std::pair<NodeId, NodeId>;

/// Undirected, unweighted adjacency in CSR form. Rows are sorted, there are
/// no self loops, and every edge is stored in both directions.
class CsrAdjacency {
 public:
  CsrAdjacency() : offsets_{0} {}

  /// Symmetrizes `edges`, dropping self loops and duplicates. Endpoints must
  /// be below `num_nodes`.
  static CsrAdjacency from_edges(std::size_t num_nodes, std::span<const Edge> edges);

  std::size_t num_nodes() const { return offsets_.size() - 1; }
  /// Number of undirected edges.
  std::size_t num_edges() const { return indices_.size() / 2; }

  std::span<const NodeId> neighbors(NodeId v) const {
    return {indices_.data() + offsets_[v], indices_.data() + offsets_[v + 1]};
  }
  std::size_t degree(NodeId v) const { return offsets_[v + 1] - offsets_[v]; }
  bool has_edge(NodeId u, NodeId v) const;

  /// Each undirected edge once, as (u, v) with u < v, in row order.
  std::vector<Edge> edge_list() const;

  const std::vector<std::size_t>& offsets() const { return offsets_; }
  const std::vector<NodeId>& indices() const { return indices_; }

  bool operator==(const CsrAdjacency&) const = default;

 private:
  std::vector<std::size_t> offsets_;
  std::vector<NodeId> indices_;
};

enum class Split { kTrain, kVal, kTest };

struct Splits {
  std::vector<NodeId> train;
  std::vector<NodeId> val;
  std::vector<NodeId> test;

  bool operator==(const Splits&) const = default;
};

/// Immutable text-attributed graph.
class TextGraph {
 public:
  TextGraph() = default;
  /// Validates all invariants; throws ValidationError.
  TextGraph(CsrAdjacency adjacency, std::vector<std::string> texts,
            std::vector<std::optional<int>> labels, Splits splits);

  std::size_t num_nodes() const { return texts_.size(); }
  const CsrAdjacency& adjacency() const { return adjacency_; }
  const std::vector<std::string>& texts() const { return texts_; }
  const std::string& text(NodeId v) const { return texts_.at(v); }
  const std::vector<std::optional<int>>& labels() const { return labels_; }
  const Splits& splits() const { return splits_; }

  bool has_labels() const;
  /// 1 + max label, or 0 when unlabeled.
  int num_classes() const;

  bool operator==(const TextGraph&) const = default;

 private:
  CsrAdjacency adjacency_;
  std::vector<std::string> texts_;
  std::vector<std::optional<int>> labels_;
  Splits splits_;
};

TextGraph load_graph(const std::filesystem::path& nodes_path,
                     const std::filesystem::path& edges_path);
void save_graph(const TextGraph& graph, const std::filesystem::path& nodes_path,
                const std::filesystem::path& edges_path);

/// Stochastic block model with per-block vocabulary pools.
struct SyntheticSpec {
  std::size_t num_blocks = 2;
  std::size_t nodes_per_block = 20;
  double intra_p = 0.3;
  double inter_p = 0.02;
  std::size_t words_per_block = 50;
  std::size_t text_length = 8;
  double noise = 0.1;
  double train_frac = 0.2;
  double val_frac = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Category names used for synthetic block `b`; pool words of block `b` are
/// the name followed by a decimal index.
std::string synthetic_category_name(std::size_t block);
std::vector<std::string> synthetic_category_names(std::size_t num_blocks);

TextGraph make_synthetic(const SyntheticSpec& spec);

/// Throws UsageError when `v` is out of range.
std::size_t degree(const TextGraph& graph, NodeId v);

}  // namespace gaug
