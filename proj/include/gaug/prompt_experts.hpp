#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gaug/llm_gateway.hpp"
#include "gaug/tag_store.hpp"

namespace gaug {

enum class ExpertKind { kRaw = 0, kSas = 1, kIdr = 2, kSar = 3 };

inline constexpr std::size_t kNumExperts = 4;
inline constexpr std::array<ExpertKind, kNumExperts> kAllExperts = {
    ExpertKind::kRaw, ExpertKind::kSas, ExpertKind::kIdr, ExpertKind::kSar};

/// "raw", "sas", "idr" or "sar".
std::string_view expert_name(ExpertKind kind);
ExpertKind parse_expert(std::string_view name);

class CategorySet {
 public:
  /// Throws ValidationError on an empty list or duplicate names.
  explicit CategorySet(std::vector<std::string> names);
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
};

struct AugmentedTextSet {
  NodeId id = 0;
  std::array<std::string, kNumExperts> texts;
  std::array<std::string, kNumExperts> context_prompts;

  const std::string& text(ExpertKind k) const { return texts[static_cast<std::size_t>(k)]; }
  const std::string& context(ExpertKind k) const { return context_prompts[static_cast<std::size_t>(k)]; }

  bool operator==(const AugmentedTextSet&) const = default;
};

struct PromptOptions {
  std::string model_name = "mock";
  double temperature = 0.0;
  int max_tokens = 512;
};

/// Up to `k` distinct neighbors of `v`, uniform without replacement.
std::vector<NodeId> sample_neighbors(const TextGraph& graph, NodeId v, std::size_t k,
                                     std::uint64_t seed);

/// Prompt for one LLM expert; RAW is not an LLM expert (UsageError).
LlmRequest build_prompt(ExpertKind kind, const TextGraph& graph, NodeId v,
                        std::span<const NodeId> neighbors, const CategorySet& categories,
                        const PromptOptions& options = {});

struct DegreeThresholds {
  std::size_t head = 0;
  std::size_t tail = 0;
};

/// Nearest-rank degree percentiles (defaults: 80th for head, 20th for tail).
DegreeThresholds degree_thresholds(const TextGraph& graph, double head_quantile = 0.8,
                                   double tail_quantile = 0.2);

/// Expert description plus degree statistics of `v`.
std::string build_context_prompt(ExpertKind kind, const TextGraph& graph, NodeId v,
                                 std::size_t head_thresh, std::size_t tail_thresh);

struct AugmentOptions {
  std::size_t neighbors_k = 10;
  std::uint64_t seed = 0;
  std::size_t max_in_flight = 4;
  PromptOptions prompt;
};

struct AugmentResult {
  std::vector<AugmentedTextSet> sets;
  std::vector<std::string> warnings;
};

/// Queries the three LLM experts for every node. A failed query falls back
/// to the raw text for that expert and adds a warning.
AugmentResult augment_all(const TextGraph& graph, Gateway& gateway, const CategorySet& categories,
                          const AugmentOptions& options);

void save_augmentations(const std::filesystem::path& path, std::span<const AugmentedTextSet> sets);
std::vector<AugmentedTextSet> load_augmentations(const std::filesystem::path& path);

}  // namespace gaug
