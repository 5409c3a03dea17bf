#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gaug/llm_gateway.hpp"
#include "gaug/prompt_experts.hpp"
#include "gaug/struct_embed.hpp"
#include "gaug/tag_store.hpp"

namespace gaug {

struct EdgeCandidates {
  std::vector<NodeId> spurious;  // observed neighbors, least similar first
  std::vector<NodeId> missing;   // non-neighbors, most similar first
};

/// Ranks by cosine similarity of structural embeddings; ties go to the
/// smaller node id.
EdgeCandidates candidates(const CsrAdjacency& adjacency, const StructEmbedding& emb, NodeId v,
                          std::size_t k);

struct EdgeActionSet {
  NodeId id = 0;
  /// (neighbor, a_del) where 1 means delete the edge.
  std::vector<std::pair<NodeId, std::uint8_t>> spurious;
  /// (non-neighbor, a_add) where 1 means add the edge.
  std::vector<std::pair<NodeId, std::uint8_t>> missing;

  /// a_del || a_add
  std::vector<std::uint8_t> action_sequence() const;
  /// Throws ValidationError when an invariant is broken.
  void validate(const CsrAdjacency& adjacency, std::size_t k) const;

  bool operator==(const EdgeActionSet&) const = default;
};

/// Asks whether the main node should connect to each candidate, one query for
/// the whole list.
LlmRequest build_edge_prompt(const TextGraph& graph, NodeId v, std::span<const NodeId> candidates,
                             const PromptOptions& options, int attempt = 0);

/// The first bracketed list of 0/1 values in `reply`, if it has exactly
/// `expected` entries.
std::optional<std::vector<std::uint8_t>> parse_binary_list(std::string_view reply,
                                                           std::size_t expected);

struct AdjudicateOptions {
  PromptOptions prompt;
  int parse_retries = 2;
  std::size_t max_in_flight = 4;
};

/// One query per non-empty candidate list. Unusable replies (after retries)
/// fall back to keeping every edge and adding none; each fallback appends a
/// message to `warnings` when given.
EdgeActionSet adjudicate(Gateway& gateway, const TextGraph& graph, NodeId v,
                         const EdgeCandidates& cands, const AdjudicateOptions& options,
                         std::vector<std::string>* warnings = nullptr);

struct ActionBuildResult {
  std::vector<EdgeActionSet> actions;
  std::vector<std::string> warnings;
};

ActionBuildResult build_all_actions(const TextGraph& graph, const StructEmbedding& emb,
                                    Gateway& gateway, std::size_t k,
                                    const AdjudicateOptions& options);

/// Starts from `adjacency` and applies each action whose bit is 1 with
/// probability `accept_rate`, symmetrically.
CsrAdjacency sample_augmented_adjacency(const CsrAdjacency& adjacency,
                                        std::span<const EdgeActionSet> actions,
                                        double accept_rate, std::uint64_t seed);

/// Number of actions whose bit is 1.
std::size_t count_active_actions(std::span<const EdgeActionSet> actions);

/// Removes `count` uniformly chosen edges (all of them when fewer exist).
CsrAdjacency mask_random_edges(const CsrAdjacency& adjacency, std::size_t count, std::uint64_t seed);

void save_actions(const std::filesystem::path& path, std::span<const EdgeActionSet> actions);
std::vector<EdgeActionSet> load_actions(const std::filesystem::path& path);

}  // namespace gaug
