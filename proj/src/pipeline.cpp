#include "gaug/pipeline.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>

#include "gaug/gnn_encoder.hpp"
#include "gaug/io.hpp"
#include "gaug/prompt_experts.hpp"
#include "gaug/text_encoder.hpp"

namespace gaug {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------- config

const json& PipelineConfig::defaults() {
  static const json d = json::parse(R"({
    "dataset": {"nodes": "", "edges": ""},
    "synthetic": {"blocks": 2, "nodes_per_block": 20, "intra_p": 0.3, "inter_p": 0.02,
                  "words_per_block": 50, "text_length": 8, "noise": 0.1,
                  "train_frac": 0.2, "val_frac": 0.2, "seed": 0},
    "categories": [],
    "llm": {"backend": "mock",
            "mock": {"mode": "auto", "seed": 0, "jaccard_threshold": 0.5},
            "base_url": "", "model": "", "cache_dir": "", "max_in_flight": 4,
            "temperature": 0.0, "max_tokens": 512, "attempts": 3, "backoff_ms": 1000},
    "prompt": {"neighbors_k": 10},
    "text_encoder": {"vocab_dim": 4096, "embed_dim": 64, "hash_seed": 13},
    "fusion": {"tau": 0.2, "lr": 6e-5, "epochs": 5, "batch": 32, "negatives": 5},
    "walk": {"walks_per_node": 10, "walk_length": 40, "window": 5, "dim": 64,
             "negatives": 5, "epochs": 3, "lr": 0.025},
    "edges": {"K": 10, "accept_rate": 0.5},
    "pretrain": {"method": "bgrl", "epochs": 100, "lr": 0.001, "weight_decay": 0.0,
                 "info_nce_tau": 0.5, "bt_lambda": 0.005, "ema_decay": 0.99,
                 "hidden": 256, "out_dim": 128, "features": "fused", "edges": "llm"},
    "probe": {"lr": 0.01, "epochs": 300, "l2": 1e-4, "eval_every": 10},
    "seeds": [0, 1, 2, 3, 4],
    "seed": 0,
    "out": "gaug_out"
  })");
  return d;
}

namespace {

std::vector<std::string> split_dotted(const std::string& key) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    parts.push_back(key.substr(start, dot - start));
    if (parts.back().empty()) throw ValidationError("malformed config key '" + key + "'");
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  return parts;
}

void check_known(const json& defaults, const json& user, const std::string& prefix) {
  if (!user.is_object()) throw ValidationError("config " + (prefix.empty() ? "root" : "'" + prefix + "'") + " must be an object");
  for (const auto& [key, value] : user.items()) {
    const auto full = prefix.empty() ? key : prefix + "." + key;
    if (!defaults.contains(key)) throw ValidationError("unknown config key '" + full + "'");
    if (defaults.at(key).is_object()) check_known(defaults.at(key), value, full);
  }
}

}  // namespace

PipelineConfig::PipelineConfig() : doc_(defaults()) {}

PipelineConfig PipelineConfig::from_json(const json& user) {
  check_known(defaults(), user, "");
  PipelineConfig c;
  c.doc_.merge_patch(user);
  return c;
}

PipelineConfig PipelineConfig::from_file(const fs::path& path) {
  if (!fs::exists(path)) throw ValidationError("config file not found: " + path.string());
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return from_json(doc);
}

void PipelineConfig::set_json(const std::string& dotted_key, const json& value) {
  const auto parts = split_dotted(dotted_key);
  const json* def = &defaults();
  json* node = &doc_;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (!def->is_object() || !def->contains(parts[i]))
      throw ValidationError("unknown config key '" + dotted_key + "'");
    def = &def->at(parts[i]);
    node = &(*node)[parts[i]];
  }
  if (def->is_object()) {
    check_known(*def, value, dotted_key);
    node->merge_patch(value);
  } else {
    *node = value;
  }
}

void PipelineConfig::set(const std::string& dotted_key, const std::string& value) {
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;
  }
  set_json(dotted_key, parsed);
}

// --------------------------------------------------------------- variants

std::string_view feature_variant_name(FeatureVariant v) {
  switch (v) {
    case FeatureVariant::kFused: return "fused";
    case FeatureVariant::kRaw: return "raw";
    case FeatureVariant::kSas: return "sas";
    case FeatureVariant::kIdr: return "idr";
    case FeatureVariant::kSar: return "sar";
    case FeatureVariant::kShallow: return "shallow";
  }
  return "?";
}

std::optional<FeatureVariant> parse_feature_variant(std::string_view name) {
  for (auto v : {FeatureVariant::kFused, FeatureVariant::kRaw, FeatureVariant::kSas, FeatureVariant::kIdr,
                 FeatureVariant::kSar, FeatureVariant::kShallow})
    if (feature_variant_name(v) == name) return v;
  return std::nullopt;
}

std::string_view edge_variant_name(EdgeVariant v) {
  switch (v) {
    case EdgeVariant::kLlm: return "llm";
    case EdgeVariant::kRandomMask: return "random_mask";
    case EdgeVariant::kNone: return "none";
  }
  return "?";
}

std::optional<EdgeVariant> parse_edge_variant(std::string_view name) {
  for (auto v : {EdgeVariant::kLlm, EdgeVariant::kRandomMask, EdgeVariant::kNone})
    if (edge_variant_name(v) == name) return v;
  return std::nullopt;
}

// --------------------------------------------------------------- settings

namespace {

class Reader {
 public:
  explicit Reader(const json& doc) : doc_(doc) {}

  const json& node(const std::string& key) const {
    const json* n = &doc_;
    for (const auto& part : split_dotted(key)) {
      if (!n->is_object() || !n->contains(part)) throw ValidationError("missing config key '" + key + "'");
      n = &n->at(part);
    }
    return *n;
  }

  template <class T>
  T get(const std::string& key) const {
    try {
      return node(key).get<T>();
    } catch (const json::exception&) {
      throw ValidationError("config key '" + key + "' has the wrong type (" + node(key).dump() + ")");
    }
  }

  std::size_t count(const std::string& key, std::int64_t min = 0) const {
    const auto& n = node(key);
    if (!n.is_number_integer() || n.get<std::int64_t>() < min)
      throw ValidationError("config key '" + key + "' must be an integer >= " + std::to_string(min));
    return static_cast<std::size_t>(n.get<std::int64_t>());
  }

  double real(const std::string& key) const {
    const auto& n = node(key);
    if (!n.is_number()) throw ValidationError("config key '" + key + "' must be a number");
    return n.get<double>();
  }

  double unit(const std::string& key) const {
    const double v = real(key);
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("config key '" + key + "' must lie in [0,1]");
    return v;
  }

  double positive(const std::string& key) const {
    const double v = real(key);
    if (!(v > 0.0)) throw ValidationError("config key '" + key + "' must be > 0");
    return v;
  }

  std::uint64_t seed(const std::string& key) const {
    const auto& n = node(key);
    if (!n.is_number_integer() || (!n.is_number_unsigned() && n.get<std::int64_t>() < 0))
      throw ValidationError("config key '" + key + "' must be a non-negative integer");
    return n.get<std::uint64_t>();
  }

 private:
  const json& doc_;
};

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

}  // namespace

Settings Settings::resolve(const PipelineConfig& config) {
  const Reader r(config.doc());
  Settings s;

  const auto nodes = r.get<std::string>("dataset.nodes");
  const auto edges = r.get<std::string>("dataset.edges");
  if (nodes.empty() != edges.empty())
    throw ValidationError("dataset.nodes and dataset.edges must be given together");
  if (!nodes.empty()) {
    s.nodes_path = nodes;
    s.edges_path = edges;
  }
  s.synthetic.num_blocks = r.count("synthetic.blocks", 1);
  s.synthetic.nodes_per_block = r.count("synthetic.nodes_per_block", 1);
  s.synthetic.intra_p = r.unit("synthetic.intra_p");
  s.synthetic.inter_p = r.unit("synthetic.inter_p");
  s.synthetic.words_per_block = r.count("synthetic.words_per_block", 1);
  s.synthetic.text_length = r.count("synthetic.text_length", 1);
  s.synthetic.noise = r.unit("synthetic.noise");
  s.synthetic.train_frac = r.unit("synthetic.train_frac");
  s.synthetic.val_frac = r.unit("synthetic.val_frac");
  s.synthetic.seed = r.seed("synthetic.seed");
  if (!s.nodes_path) s.synthetic.validate();

  s.categories = r.get<std::vector<std::string>>("categories");
  if (s.categories.empty()) {
    if (s.nodes_path) throw ValidationError("categories must be listed for a dataset");
    s.categories = synthetic_category_names(s.synthetic.num_blocks);
  }
  CategorySet{s.categories};

  s.llm_backend = r.get<std::string>("llm.backend");
  if (s.llm_backend != "mock" && s.llm_backend != "http")
    throw ValidationError("llm.backend must be 'mock' or 'http'");
  try {
    s.mock.mode = parse_mock_mode(r.get<std::string>("llm.mock.mode"));
  } catch (const Error& e) {
    throw ValidationError(std::string("llm.mock.mode: ") + e.what());
  }
  s.mock.seed = r.seed("llm.mock.seed");
  s.mock.jaccard_threshold = r.unit("llm.mock.jaccard_threshold");
  s.base_url = r.get<std::string>("llm.base_url");
  if (s.base_url.empty()) s.base_url = env_or("GAUG_LLM_BASE_URL", "");
  s.model = r.get<std::string>("llm.model");
  if (s.model.empty()) s.model = env_or("GAUG_LLM_MODEL", s.llm_backend == "mock" ? "mock" : "");
  if (s.llm_backend == "http") {
    if (s.base_url.empty()) throw ValidationError("llm.base_url (or GAUG_LLM_BASE_URL) is required for the http backend");
    if (s.model.empty()) throw ValidationError("llm.model (or GAUG_LLM_MODEL) is required for the http backend");
  }
  s.cache_dir = r.get<std::string>("llm.cache_dir");
  if (s.cache_dir.empty()) s.cache_dir = env_or("GAUG_LLM_CACHE_DIR", "");
  s.max_in_flight = r.count("llm.max_in_flight", 1);
  s.temperature = r.real("llm.temperature");
  if (!(s.temperature >= 0.0)) throw ValidationError("llm.temperature must be >= 0");
  s.max_tokens = static_cast<int>(r.count("llm.max_tokens", 1));
  s.attempts = static_cast<int>(r.count("llm.attempts", 1));
  s.backoff_ms = static_cast<int>(r.count("llm.backoff_ms", 0));

  s.neighbors_k = r.count("prompt.neighbors_k", 0);
  s.vocab_dim = r.count("text_encoder.vocab_dim", 1);
  s.embed_dim = r.count("text_encoder.embed_dim", 1);
  s.hash_seed = r.seed("text_encoder.hash_seed");

  s.fusion_tau = r.positive("fusion.tau");
  s.fusion.lr = r.real("fusion.lr");
  if (!(s.fusion.lr >= 0.0)) throw ValidationError("fusion.lr must be >= 0");
  s.fusion.epochs = r.count("fusion.epochs");
  s.fusion.batch = r.count("fusion.batch", 1);
  s.fusion.negatives = r.count("fusion.negatives", 1);

  s.walk.walks_per_node = r.count("walk.walks_per_node", 1);
  s.walk.walk_length = r.count("walk.walk_length", 1);
  s.walk.window = r.count("walk.window", 1);
  s.walk.dim = r.count("walk.dim", 1);
  s.walk.negatives = r.count("walk.negatives", 1);
  s.walk.epochs = r.count("walk.epochs");
  s.walk.lr = r.positive("walk.lr");

  s.candidates_k = r.count("edges.K", 1);
  s.accept_rate = r.unit("edges.accept_rate");

  const auto method = r.get<std::string>("pretrain.method");
  const auto m = parse_method(method);
  if (!m) throw ValidationError("pretrain.method must be graphcl, gbt or bgrl (got '" + method + "')");
  s.pretrain.method = *m;
  s.pretrain.epochs = r.count("pretrain.epochs", 1);
  s.pretrain.lr = r.real("pretrain.lr");
  s.pretrain.weight_decay = r.real("pretrain.weight_decay");
  s.pretrain.info_nce_tau = r.positive("pretrain.info_nce_tau");
  s.pretrain.bt_lambda = r.real("pretrain.bt_lambda");
  s.pretrain.ema_decay = r.unit("pretrain.ema_decay");
  s.pretrain.hidden = static_cast<Eigen::Index>(r.count("pretrain.hidden", 1));
  s.pretrain.out_dim = static_cast<Eigen::Index>(r.count("pretrain.out_dim", 1));
  s.pretrain.validate();
  const auto fv = r.get<std::string>("pretrain.features");
  if (auto v = parse_feature_variant(fv)) s.features = *v;
  else throw ValidationError("pretrain.features must be fused, raw, sas, idr, sar or shallow (got '" + fv + "')");
  const auto ev = r.get<std::string>("pretrain.edges");
  if (auto v = parse_edge_variant(ev)) s.edges = *v;
  else throw ValidationError("pretrain.edges must be llm, random_mask or none (got '" + ev + "')");

  s.probe.lr = r.positive("probe.lr");
  s.probe.epochs = r.count("probe.epochs", 1);
  s.probe.l2 = r.real("probe.l2");
  s.probe.eval_every = r.count("probe.eval_every", 1);

  const auto& seeds = r.node("seeds");
  if (!seeds.is_array() || seeds.empty()) throw ValidationError("seeds must be a non-empty list");
  for (const auto& v : seeds) {
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      throw ValidationError("seeds must be non-negative integers (got " + v.dump() + ")");
    s.seeds.push_back(v.get<std::uint64_t>());
  }
  if (std::set<std::uint64_t>(s.seeds.begin(), s.seeds.end()).size() != s.seeds.size())
    throw ValidationError("seeds must be distinct");
  s.seed = r.seed("seed");
  s.out = r.get<std::string>("out");
  if (s.out.empty()) throw ValidationError("out must not be empty");
  return s;
}

// ------------------------------------------------------------- seed runs

std::size_t perturbation_budget(const Artifacts& artifacts, double accept_rate) {
  return static_cast<std::size_t>(
      std::llround(accept_rate * static_cast<double>(count_active_actions(artifacts.actions))));
}

const Mat& view_features(const Artifacts& a, FeatureVariant variant) {
  switch (variant) {
    case FeatureVariant::kFused: return a.fused;
    case FeatureVariant::kRaw: return a.experts[static_cast<std::size_t>(ExpertKind::kRaw)];
    case FeatureVariant::kSas: return a.experts[static_cast<std::size_t>(ExpertKind::kSas)];
    case FeatureVariant::kIdr: return a.experts[static_cast<std::size_t>(ExpertKind::kIdr)];
    case FeatureVariant::kSar: return a.experts[static_cast<std::size_t>(ExpertKind::kSar)];
    case FeatureVariant::kShallow: return a.shallow;
  }
  throw UsageError("unknown feature variant");
}

namespace {

PretrainResult pretrain_views(const Artifacts& a, const RunSpec& spec, std::uint64_t seed) {
  const auto& adjacency = a.graph.adjacency();
  const Mat& x1 = spec.features == FeatureVariant::kShallow ? a.shallow : a.raw;
  const Mat& x2 = view_features(a, spec.features);
  AdjacencySampler sampler;
  switch (spec.edges) {
    case EdgeVariant::kLlm:
      sampler = [&a, &adjacency, rate = spec.accept_rate](std::size_t, std::uint64_t s) {
        return sample_augmented_adjacency(adjacency, a.actions, rate, s);
      };
      break;
    case EdgeVariant::kRandomMask:
      sampler = [&adjacency, budget = perturbation_budget(a, spec.accept_rate)](std::size_t, std::uint64_t s) {
        return mask_random_edges(adjacency, budget, s);
      };
      break;
    case EdgeVariant::kNone:
      sampler = [&adjacency](std::size_t, std::uint64_t) { return adjacency; };
      break;
  }
  auto config = spec.pretrain;
  config.seed = seed;
  return pretrain(adjacency, x1, x2, sampler, config);
}

ProbeResult probe_encoder(const Artifacts& a, const RunSpec& spec, const EncoderParams& encoder,
                          Mat* embeddings) {
  Mat emb = encoder_forward(encoder, a.graph.adjacency(), view_features(a, spec.features));
  auto result = linear_probe(emb, a.graph.labels(), a.graph.splits(), spec.probe);
  if (embeddings) *embeddings = std::move(emb);
  return result;
}

}  // namespace

SeedRun run_seed(const Artifacts& artifacts, const RunSpec& spec, std::uint64_t seed) {
  SeedRun run;
  run.pretrain = pretrain_views(artifacts, spec, seed);
  run.probe = probe_encoder(artifacts, spec, run.pretrain.model.online, &run.embeddings);
  return run;
}

// --------------------------------------------------------------- pipeline

namespace {

constexpr const char* kAugmentFile = "augment.jsonl";
constexpr const char* kFusedFile = "fused.bin";
constexpr const char* kRawFile = "raw.bin";
constexpr const char* kShallowFile = "shallow.bin";
constexpr const char* kFusionCkpt = "fusion_ckpt.bin";
constexpr const char* kFuseLoss = "fuse_loss.csv";
constexpr const char* kStructFile = "struct.bin";
constexpr const char* kWalkLoss = "walk_loss.csv";
constexpr const char* kActionsFile = "actions.jsonl";
constexpr const char* kReportFile = "report.json";

std::string expert_file(ExpertKind k) { return "expert_" + std::string(expert_name(k)) + ".bin"; }
std::string checkpoint_file(std::uint64_t s) { return "checkpoint_seed" + std::to_string(s) + ".bin"; }
std::string pretrain_loss_file(std::uint64_t s) { return "pretrain_loss_seed" + std::to_string(s) + ".csv"; }

void write_lines(const fs::path& p, const std::vector<std::string>& lines) {
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  write_file_atomic(p, text);
}

std::string hash_json(const json& j) { return sha256_hex(j.dump()); }

}  // namespace

Pipeline::Pipeline(PipelineConfig config)
    : config_(std::move(config)), settings_(Settings::resolve(config_)) {}

void Pipeline::set_backend(std::shared_ptr<LlmBackend> backend) {
  backend_ = std::move(backend);
  gateway_.reset();
}

Gateway& Pipeline::gateway() {
  if (!gateway_) {
    if (!backend_) {
      if (settings_.llm_backend == "mock") {
        backend_ = std::make_shared<MockBackend>(settings_.mock);
      } else {
        HttpEndpointConfig http;
        http.base_url = settings_.base_url;
        http.api_key = env_or("GAUG_LLM_API_KEY", "");
        backend_ = std::make_shared<HttpChatBackend>(http);
      }
    }
    GatewayOptions options;
    options.cache_dir = settings_.cache_dir;
    options.attempts = settings_.attempts;
    options.initial_backoff = std::chrono::milliseconds(settings_.backoff_ms);
    gateway_ = std::make_unique<Gateway>(backend_, options);
  }
  return *gateway_;
}

const TextGraph& Pipeline::graph() {
  if (!graph_) {
    if (settings_.nodes_path) {
      for (const auto& p : {*settings_.nodes_path, *settings_.edges_path})
        if (!fs::exists(p)) throw ValidationError("dataset file not found: " + p.string());
      graph_ = load_graph(*settings_.nodes_path, *settings_.edges_path);
    } else {
      graph_ = make_synthetic(settings_.synthetic);
    }
    if (!graph_->has_labels() && !settings_.nodes_path)
      throw ValidationError("synthetic graph has no labels");
  }
  return *graph_;
}

void Pipeline::log(const std::string& line) const {
  if (logger_) logger_(line);
}

void Pipeline::require(const fs::path& p, const char* producer) const {
  if (!fs::exists(p))
    throw UsageError("missing " + p.string() + "; run the '" + std::string(producer) + "' stage first");
}

std::string Pipeline::graph_fingerprint() {
  if (!graph_fp_) {
    if (settings_.nodes_path) {
      graph();
      graph_fp_ = hash_json({"dataset", sha256_file(*settings_.nodes_path), sha256_file(*settings_.edges_path)});
    } else {
      graph_fp_ = hash_json({"synthetic", config_.doc().at("synthetic")});
    }
  }
  return *graph_fp_;
}

std::string Pipeline::stage_fingerprint(Stage stage, std::optional<std::uint64_t> seed) {
  const auto& doc = config_.doc();
  json llm = doc.at("llm");
  llm.erase("cache_dir");
  llm.erase("max_in_flight");
  llm.erase("attempts");
  llm.erase("backoff_ms");
  llm["base_url"] = settings_.base_url;
  llm["model"] = settings_.model;
  auto file_hash = [&](const std::string& name) { return sha256_file(path(name)); };
  auto feature_hashes = [&] {
    json h = json::array({file_hash(kFusedFile), file_hash(kRawFile), file_hash(kShallowFile)});
    for (auto k : kAllExperts) h.push_back(file_hash(expert_file(k)));
    return h;
  };
  switch (stage) {
    case Stage::kAugment:
      return hash_json({"augment", graph_fingerprint(), settings_.categories, llm, doc.at("prompt"), settings_.seed});
    case Stage::kFuse:
      return hash_json({"fuse", graph_fingerprint(), file_hash(kAugmentFile), doc.at("text_encoder"),
                        doc.at("fusion"), settings_.seed});
    case Stage::kWalk:
      return hash_json({"walk", graph_fingerprint(), doc.at("walk"), settings_.seed});
    case Stage::kEdges:
      return hash_json({"edges", graph_fingerprint(), file_hash(kStructFile), llm, doc.at("edges").at("K")});
    case Stage::kPretrain:
      return hash_json({"pretrain", graph_fingerprint(), feature_hashes(), file_hash(kActionsFile),
                        doc.at("edges").at("accept_rate"), doc.at("pretrain"), *seed});
    case Stage::kEval: {
      json ckpts = json::array();
      for (auto s : settings_.seeds) ckpts.push_back(file_hash(checkpoint_file(s)));
      return hash_json({"eval", graph_fingerprint(), feature_hashes(), ckpts, doc.at("probe"),
                        doc.at("pretrain"), report_fingerprint()});
    }
  }
  throw UsageError("unknown stage");
}

std::vector<fs::path> Pipeline::stage_outputs(Stage stage, std::optional<std::uint64_t> seed) const {
  switch (stage) {
    case Stage::kAugment: return {path(kAugmentFile)};
    case Stage::kFuse: {
      std::vector<fs::path> out{path(kFusedFile), path(kRawFile), path(kShallowFile), path(kFusionCkpt),
                                path(kFuseLoss)};
      for (auto k : kAllExperts) out.push_back(path(expert_file(k)));
      return out;
    }
    case Stage::kWalk: return {path(kStructFile), path(kWalkLoss)};
    case Stage::kEdges: return {path(kActionsFile)};
    case Stage::kPretrain: return {path(checkpoint_file(*seed)), path(pretrain_loss_file(*seed))};
    case Stage::kEval: return {path(kReportFile)};
  }
  return {};
}

namespace {

std::string sidecar_name(int stage, std::optional<std::uint64_t> seed) {
  static const char* names[] = {"augment", "fuse", "walk", "edges", "pretrain", "eval"};
  std::string n = names[stage];
  if (seed) n += "_seed" + std::to_string(*seed);
  return "." + n + ".fp";
}

}  // namespace

bool Pipeline::fresh(Stage stage, std::optional<std::uint64_t> seed) {
  for (const auto& p : stage_outputs(stage, seed))
    if (!fs::exists(p)) return false;
  const auto sidecar = path(sidecar_name(static_cast<int>(stage), seed));
  if (!fs::exists(sidecar)) return false;
  return read_file(sidecar) == stage_fingerprint(stage, seed);
}

void Pipeline::mark(Stage stage, std::optional<std::uint64_t> seed) {
  write_file_atomic(path(sidecar_name(static_cast<int>(stage), seed)), stage_fingerprint(stage, seed));
}

void Pipeline::cmd_synth() {
  if (settings_.nodes_path) throw UsageError("synth generates a synthetic graph; unset dataset.nodes/edges");
  fs::create_directories(settings_.out);
  save_graph(graph(), path("nodes.jsonl"), path("edges.csv"));
  log("wrote " + std::to_string(graph().num_nodes()) + " nodes to " + path("nodes.jsonl").string());
}

void Pipeline::cmd_augment() {
  fs::create_directories(settings_.out);
  fs::remove(path(sidecar_name(static_cast<int>(Stage::kAugment), std::nullopt)));
  AugmentOptions options;
  options.neighbors_k = settings_.neighbors_k;
  options.seed = derive_seed(settings_.seed, 0xa1);
  options.max_in_flight = settings_.max_in_flight;
  options.prompt = {settings_.model, settings_.temperature, settings_.max_tokens};
  auto result = augment_all(graph(), gateway(), CategorySet(settings_.categories), options);
  save_augmentations(path(kAugmentFile), result.sets);
  write_lines(path("augment_warnings.log"), result.warnings);
  for (const auto& w : result.warnings) log("warning: " + w);
  log("augment: " + std::to_string(result.sets.size()) + " nodes");
}

void Pipeline::cmd_fuse() {
  require(path(kAugmentFile), "augment");
  fs::remove(path(sidecar_name(static_cast<int>(Stage::kFuse), std::nullopt)));
  const auto& g = graph();
  const auto sets = load_augmentations(path(kAugmentFile));
  if (sets.size() != g.num_nodes())
    throw ValidationError("augmentation store has " + std::to_string(sets.size()) + " entries for " +
                          std::to_string(g.num_nodes()) + " nodes");
  for (std::size_t i = 0; i < sets.size(); ++i)
    if (sets[i].id != i) throw ValidationError("augmentation store is not ordered by node id at line " + std::to_string(i + 1));

  const auto inputs = featurize_sets(sets, settings_.vocab_dim, settings_.hash_seed);
  auto encoder = HashingEncoderParams::random(settings_.vocab_dim, settings_.embed_dim, settings_.hash_seed,
                                              derive_seed(settings_.seed, 0xf1));
  const Mat shallow = single_expert_features(inputs, encoder, ExpertKind::kRaw);
  auto fusion = FusionParams::zeros(settings_.embed_dim, settings_.fusion_tau);
  auto train = settings_.fusion;
  train.seed = derive_seed(settings_.seed, 0xf2);
  const auto trained = train_fusion(g, inputs, encoder, fusion, train);
  const auto bank = build_bank(inputs, encoder, fusion);

  save_matrix(path(kFusedFile), kFusedMagic, bank.fused);
  save_matrix(path(kShallowFile), kFusedMagic, shallow);
  for (auto k : kAllExperts) {
    const Mat x = single_expert_features(inputs, encoder, k);
    save_matrix(path(expert_file(k)), kFusedMagic, x);
    if (k == ExpertKind::kRaw) save_matrix(path(kRawFile), kFusedMagic, x);
  }
  save_checkpoint(path(kFusionCkpt), {{"projection", encoder.projection},
                                      {"w1", Mat(fusion.w1.transpose())},
                                      {"w2", fusion.w2},
                                      {"attention", bank.attention}});
  save_loss_trace(path(kFuseLoss), trained.loss_trace);
  log("fuse: loss " + format_double(trained.loss_trace.front()) + " -> " + format_double(trained.loss_trace.back()));
}

void Pipeline::cmd_walk() {
  fs::create_directories(settings_.out);
  fs::remove(path(sidecar_name(static_cast<int>(Stage::kWalk), std::nullopt)));
  auto config = settings_.walk;
  config.seed = derive_seed(settings_.seed, 0xd1);
  const auto walks = random_walks(graph().adjacency(), config);
  // An edgeless graph has no walks; keep the initial vectors.
  if (walks.empty()) config.epochs = 0;
  const auto result = train_skipgram(walks, graph().num_nodes(), config);
  save_matrix(path(kStructFile), kStructMagic, result.embedding.vectors);
  save_loss_trace(path(kWalkLoss), result.loss_trace);
  log("walk: " + std::to_string(walks.size()) + " walks");
}

void Pipeline::cmd_edges() {
  require(path(kStructFile), "walk");
  fs::remove(path(sidecar_name(static_cast<int>(Stage::kEdges), std::nullopt)));
  const auto& g = graph();
  StructEmbedding emb{load_matrix(path(kStructFile), kStructMagic)};
  if (static_cast<std::size_t>(emb.vectors.rows()) != g.num_nodes())
    throw ValidationError("structural embedding has the wrong number of rows");
  AdjudicateOptions options;
  options.prompt = {settings_.model, settings_.temperature, settings_.max_tokens};
  options.max_in_flight = settings_.max_in_flight;
  auto& gw = gateway();
  gw.reset_counters();
  auto result = build_all_actions(g, emb, gw, settings_.candidates_k, options);
  edge_queries_ = gw.uncached_calls();
  for (const auto& set : result.actions) set.validate(g.adjacency(), settings_.candidates_k);
  save_actions(path(kActionsFile), result.actions);
  write_lines(path("edges_warnings.log"), result.warnings);
  for (const auto& w : result.warnings) log("warning: " + w);
  log("edges: " + std::to_string(count_active_actions(result.actions)) + " active actions, " +
      std::to_string(edge_queries_) + " uncached LLM queries");
}

Artifacts Pipeline::load_artifacts() {
  for (const char* f : {kFusedFile, kRawFile, kShallowFile}) require(path(f), "fuse");
  require(path(kStructFile), "walk");
  require(path(kActionsFile), "edges");
  Artifacts a;
  a.graph = graph();
  a.fused = load_matrix(path(kFusedFile), kFusedMagic);
  a.raw = load_matrix(path(kRawFile), kFusedMagic);
  a.shallow = load_matrix(path(kShallowFile), kFusedMagic);
  for (auto k : kAllExperts) {
    require(path(expert_file(k)), "fuse");
    a.experts[static_cast<std::size_t>(k)] = load_matrix(path(expert_file(k)), kFusedMagic);
  }
  a.structure.vectors = load_matrix(path(kStructFile), kStructMagic);
  a.actions = load_actions(path(kActionsFile));
  const auto n = static_cast<Eigen::Index>(a.graph.num_nodes());
  for (const Mat* m : {&a.fused, &a.raw, &a.shallow})
    if (m->rows() != n) throw ValidationError("feature file row count does not match the graph");
  if (a.actions.size() != a.graph.num_nodes()) throw ValidationError("actions file does not cover every node");
  for (const auto& set : a.actions) set.validate(a.graph.adjacency(), settings_.candidates_k);
  return a;
}

namespace {

RunSpec spec_from(const Settings& s) {
  RunSpec spec;
  spec.pretrain = s.pretrain;
  spec.probe = s.probe;
  spec.features = s.features;
  spec.edges = s.edges;
  spec.accept_rate = s.accept_rate;
  return spec;
}

}  // namespace

void Pipeline::pretrain_seed(std::uint64_t seed) {
  fs::remove(path(sidecar_name(static_cast<int>(Stage::kPretrain), seed)));
  const auto artifacts = load_artifacts();
  const auto result = pretrain_views(artifacts, spec_from(settings_), seed);
  save_checkpoint(path(checkpoint_file(seed)), result.model.to_tensors());
  save_loss_trace(path(pretrain_loss_file(seed)), result.loss_trace);
  log("pretrain seed " + std::to_string(seed) + ": loss " + format_double(result.loss_trace.front()) + " -> " +
      format_double(result.loss_trace.back()));
}

void Pipeline::cmd_pretrain() {
  for (auto s : settings_.seeds) pretrain_seed(s);
}

EvalReport Pipeline::cmd_eval() {
  for (auto s : settings_.seeds) require(path(checkpoint_file(s)), "pretrain");
  fs::remove(path(sidecar_name(static_cast<int>(Stage::kEval), std::nullopt)));
  const auto artifacts = load_artifacts();
  const auto spec = spec_from(settings_);
  auto report = evaluate_runs(
      settings_.seeds,
      [&](std::uint64_t seed) {
        const auto encoder = EncoderParams::from_tensors(load_checkpoint(path(checkpoint_file(seed))), "encoder.");
        return probe_encoder(artifacts, spec, encoder, nullptr).test_accuracy;
      },
      report_fingerprint());
  write_file_atomic(path(kReportFile), report.to_json());
  log("eval: mean " + format_double(report.mean) + " std " + format_double(report.std));
  return report;
}

EvalReport Pipeline::cmd_all() {
  skipped_.clear();
  fs::create_directories(settings_.out);
  auto stage = [&](Stage st, const char* name, auto&& run) {
    if (fresh(st)) {
      skipped_.push_back(name);
      log(std::string(name) + ": up to date");
      return;
    }
    run();
    mark(st);
  };
  stage(Stage::kAugment, "augment", [&] { cmd_augment(); });
  stage(Stage::kFuse, "fuse", [&] { cmd_fuse(); });
  stage(Stage::kWalk, "walk", [&] { cmd_walk(); });
  stage(Stage::kEdges, "edges", [&] { cmd_edges(); });
  for (auto s : settings_.seeds) {
    const auto name = "pretrain_seed" + std::to_string(s);
    if (fresh(Stage::kPretrain, s)) {
      skipped_.push_back(name);
      log(name + ": up to date");
      continue;
    }
    pretrain_seed(s);
    mark(Stage::kPretrain, s);
  }
  if (fresh(Stage::kEval)) {
    skipped_.push_back("eval");
    log("eval: up to date");
    return EvalReport::from_json(read_file(path(kReportFile)));
  }
  auto report = cmd_eval();
  mark(Stage::kEval);
  return report;
}

std::string Pipeline::report_fingerprint() {
  json doc = config_.doc();
  doc.erase("out");
  doc["llm"].erase("cache_dir");
  doc["llm"]["base_url"] = settings_.base_url;
  doc["llm"]["model"] = settings_.model;
  return hash_json({"report", doc, graph_fingerprint()});
}

}  // namespace gaug
