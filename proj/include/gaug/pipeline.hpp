#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gaug/edge_modifier.hpp"
#include "gaug/eval_probe.hpp"
#include "gaug/llm_gateway.hpp"
#include "gaug/moe_fusion.hpp"
#include "gaug/ssl_objectives.hpp"
#include "gaug/struct_embed.hpp"
#include "gaug/tag_store.hpp"

namespace gaug {

/// A JSON configuration document layered over built-in defaults.
class PipelineConfig {
 public:
  PipelineConfig();

  static const nlohmann::json& defaults();
  /// Throws ParseError / ValidationError.
  static PipelineConfig from_file(const std::filesystem::path& path);
  static PipelineConfig from_json(const nlohmann::json& doc);

  /// Overrides one field by dotted path. `value` is read as JSON when it
  /// parses, otherwise as a string. Object values are merged into the
  /// existing section. Unknown paths throw ValidationError.
  void set(const std::string& dotted_key, const std::string& value);
  void set_json(const std::string& dotted_key, const nlohmann::json& value);

  const nlohmann::json& doc() const { return doc_; }

 private:
  nlohmann::json doc_;
};

/// Which features feed the second view (and the probe), and how its edges
/// are produced.
enum class FeatureVariant { kFused, kRaw, kSas, kIdr, kSar, kShallow };
enum class EdgeVariant { kLlm, kRandomMask, kNone };

std::string_view feature_variant_name(FeatureVariant v);
std::optional<FeatureVariant> parse_feature_variant(std::string_view name);
std::string_view edge_variant_name(EdgeVariant v);
std::optional<EdgeVariant> parse_edge_variant(std::string_view name);

struct Settings {
  std::optional<std::filesystem::path> nodes_path, edges_path;
  SyntheticSpec synthetic;
  std::vector<std::string> categories;

  std::string llm_backend;  // "mock" or "http"
  MockPolicy mock;
  std::string base_url;
  std::string model;
  std::filesystem::path cache_dir;
  std::size_t max_in_flight = 4;
  double temperature = 0.0;
  int max_tokens = 512;
  int attempts = 3;
  int backoff_ms = 1000;

  std::size_t neighbors_k = 10;
  std::size_t vocab_dim = 4096;
  std::size_t embed_dim = 64;
  std::uint64_t hash_seed = 13;
  double fusion_tau = 0.2;
  FusionTrainConfig fusion;
  WalkConfig walk;
  std::size_t candidates_k = 10;
  double accept_rate = 0.5;
  PretrainConfig pretrain;
  FeatureVariant features = FeatureVariant::kFused;
  EdgeVariant edges = EdgeVariant::kLlm;
  ProbeConfig probe;
  std::vector<std::uint64_t> seeds;
  std::uint64_t seed = 0;
  std::filesystem::path out;

  /// Throws ValidationError naming the offending key.
  static Settings resolve(const PipelineConfig& config);
};

/// Everything the pretraining stage consumes.
struct Artifacts {
  TextGraph graph;
  Mat raw;      // raw text under the trained projection
  Mat shallow;  // raw text under the initial projection
  Mat fused;
  std::array<Mat, kNumExperts> experts;  // single-expert features, trained projection
  StructEmbedding structure;
  std::vector<EdgeActionSet> actions;
};

struct RunSpec {
  PretrainConfig pretrain;
  ProbeConfig probe;
  FeatureVariant features = FeatureVariant::kFused;
  EdgeVariant edges = EdgeVariant::kLlm;
  double accept_rate = 0.5;
};

/// Number of edges the random-mask view removes per epoch: the expected
/// number of accepted LLM actions.
std::size_t perturbation_budget(const Artifacts& artifacts, double accept_rate);

/// View features for a variant.
const Mat& view_features(const Artifacts& artifacts, FeatureVariant variant);

struct SeedRun {
  PretrainResult pretrain;
  Mat embeddings;
  ProbeResult probe;
};

/// Pretrains with `seed` and probes encoder(A, view-2 features).
SeedRun run_seed(const Artifacts& artifacts, const RunSpec& spec, std::uint64_t seed);

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config);
  /// Replaces the LLM backend built from the configuration.
  void set_backend(std::shared_ptr<LlmBackend> backend);

  const Settings& settings() const { return settings_; }
  const std::filesystem::path& out_dir() const { return settings_.out; }
  Gateway& gateway();
  const TextGraph& graph();

  // Stage commands. Each recomputes its outputs; cmd_all() skips stages
  // whose outputs exist and whose input fingerprints match.
  void cmd_synth();
  void cmd_augment();
  void cmd_fuse();
  void cmd_walk();
  void cmd_edges();
  void cmd_pretrain();
  EvalReport cmd_eval();
  EvalReport cmd_all();

  /// Loads the outputs of augment, fuse, walk and edges.
  Artifacts load_artifacts();

  /// Fingerprint of every result-relevant config field plus input data.
  std::string report_fingerprint();

  /// Stage names skipped by the last cmd_all().
  const std::vector<std::string>& skipped() const { return skipped_; }
  /// Uncached LLM queries issued by the last cmd_edges().
  std::size_t edge_queries() const { return edge_queries_; }

  using Logger = std::function<void(const std::string&)>;
  void set_logger(Logger logger) { logger_ = std::move(logger); }

 private:
  enum class Stage { kAugment, kFuse, kWalk, kEdges, kPretrain, kEval };

  std::filesystem::path path(const std::string& name) const { return settings_.out / name; }
  std::string graph_fingerprint();
  std::string stage_fingerprint(Stage stage, std::optional<std::uint64_t> seed = std::nullopt);
  std::vector<std::filesystem::path> stage_outputs(Stage stage, std::optional<std::uint64_t> seed = std::nullopt) const;
  bool fresh(Stage stage, std::optional<std::uint64_t> seed = std::nullopt);
  void mark(Stage stage, std::optional<std::uint64_t> seed = std::nullopt);
  void require(const std::filesystem::path& p, const char* producer) const;
  void pretrain_seed(std::uint64_t seed);
  void log(const std::string& line) const;

  PipelineConfig config_;
  Settings settings_;
  std::shared_ptr<LlmBackend> backend_;
  std::unique_ptr<Gateway> gateway_;
  std::optional<TextGraph> graph_;
  std::optional<std::string> graph_fp_;
  std::vector<std::string> skipped_;
  std::size_t edge_queries_ = 0;
  Logger logger_;
};

}  // namespace gaug
