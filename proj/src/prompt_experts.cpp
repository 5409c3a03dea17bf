#include "gaug/prompt_experts.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <random>
#include <set>

#include "gaug/io.hpp"
#include "gaug/text.hpp"

namespace gaug {

using nlohmann::json;

std::string_view expert_name(ExpertKind kind) {
  switch (kind) {
    case ExpertKind::kRaw: return "raw";
    case ExpertKind::kSas: return "sas";
    case ExpertKind::kIdr: return "idr";
    case ExpertKind::kSar: return "sar";
  }
  return "raw";
}

ExpertKind parse_expert(std::string_view name) {
  for (auto k : kAllExperts)
    if (expert_name(k) == name) return k;
  throw ValidationError("unknown expert '" + std::string(name) + "'");
}

CategorySet::CategorySet(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.empty()) throw ValidationError("category list must be non-empty");
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty() || n.find_first_of(",[]\n") != std::string::npos)
      throw ValidationError("invalid category name '" + n + "'");
    if (!seen.insert(n).second) throw ValidationError("duplicate category '" + n + "'");
  }
}

std::vector<NodeId> sample_neighbors(const TextGraph& graph, NodeId v, std::size_t k,
                                     std::uint64_t seed) {
  if (k < 1) throw UsageError("neighbor sample size must be >= 1");
  auto nbrs = graph.adjacency().neighbors(v);
  std::vector<NodeId> pool(nbrs.begin(), nbrs.end());
  if (pool.size() <= k) return pool;
  std::mt19937_64 rng(derive_seed(seed, v));
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  return pool;
}

namespace {

constexpr std::string_view kSasSystem =
    "You are a helpful assistant that summarizes the text of a node in a graph using the texts of "
    "its linked nodes.";
constexpr std::string_view kIdrSystem =
    "You are a helpful assistant that categorizes the text of a node in a graph and explains the "
    "decision.";
constexpr std::string_view kSarSystem =
    "You are a helpful assistant that categorizes a node in a graph from its own text and the texts "
    "of its linked nodes, and explains the decision.";

std::string category_list(const CategorySet& categories) {
  std::string out = "[";
  for (std::size_t i = 0; i < categories.names().size(); ++i) {
    if (i) out += ", ";
    out += categories.names()[i];
  }
  return out + "]";
}

std::string input_block(const TextGraph& graph, NodeId v, std::span<const NodeId> neighbors,
                        bool with_neighbors) {
  std::string out = "Input:\nMain node: " + single_line(graph.text(v)) + "\n";
  if (!with_neighbors) return out;
  if (neighbors.empty()) {
    out += "Linked nodes: none available (no neighbors available).\n";
    return out;
  }
  for (std::size_t i = 0; i < neighbors.size(); ++i)
    out += "Linked node " + std::to_string(i + 1) + ": " + single_line(graph.text(neighbors[i])) + "\n";
  return out;
}

}  // namespace

LlmRequest build_prompt(ExpertKind kind, const TextGraph& graph, NodeId v,
                        std::span<const NodeId> neighbors, const CategorySet& categories,
                        const PromptOptions& options) {
  if (v >= graph.num_nodes()) throw UsageError("node " + std::to_string(v) + " out of range");
  LlmRequest req;
  req.temperature = options.temperature;
  req.max_tokens = options.max_tokens;
  req.model_name = options.model_name;
  switch (kind) {
    case ExpertKind::kRaw:
      throw UsageError("the raw expert does not query the LLM");
    case ExpertKind::kSas:
      req.system_prompt = kSasSystem;
      req.user_prompt =
          input_block(graph, v, neighbors, true) +
          "\nInstruction:\nUsing the provided text of the main node and, if available, the texts of "
          "its linked nodes, provide a concise summary of the main node's key content.\n"
          "\nRespond in this format:\nThe main node can be summarized as: [Concise Summary] due to "
          "[evidence from the texts].";
      break;
    case ExpertKind::kIdr:
      req.system_prompt = kIdrSystem;
      req.user_prompt =
          input_block(graph, v, neighbors, false) +
          "\nInstruction:\nUsing the provided text of the main node, categorize the main node into "
          "one of the following categories: " +
          category_list(categories) +
          ". Please provide your reasoning.\n"
          "\nRespond in this format:\nThe node belongs to the [Category] category due to [evidence "
          "from the text].";
      break;
    case ExpertKind::kSar:
      req.system_prompt = kSarSystem;
      req.user_prompt =
          input_block(graph, v, neighbors, true) +
          "\nInstruction:\nUsing the provided text of the main node and, if available, the texts of "
          "its linked nodes, categorize the main node into one of the following categories: " +
          category_list(categories) +
          ". Please provide your reasoning.\n"
          "\nRespond in this format:\nThe node belongs to the [Category] category due to [evidence "
          "from the texts].";
      break;
  }
  return req;
}

DegreeThresholds degree_thresholds(const TextGraph& graph, double head_quantile,
                                   double tail_quantile) {
  const auto n = graph.num_nodes();
  if (n == 0) return {};
  std::vector<std::size_t> deg(n);
  for (NodeId v = 0; v < n; ++v) deg[v] = graph.adjacency().degree(v);
  std::sort(deg.begin(), deg.end());
  auto rank = [&](double q) {
    const auto r = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
    return deg[std::clamp<std::size_t>(r, 1, n) - 1];
  };
  return {rank(head_quantile), rank(tail_quantile)};
}

std::string build_context_prompt(ExpertKind kind, const TextGraph& graph, NodeId v,
                                 std::size_t head_thresh, std::size_t tail_thresh) {
  const auto d = std::to_string(degree(graph, v));
  const auto head = std::to_string(head_thresh);
  const auto tail = std::to_string(tail_thresh);
  switch (kind) {
    case ExpertKind::kRaw:
      return "This is the original text of this node. The degree of this node is " + d + ".";
    case ExpertKind::kIdr:
      return "This is the explanation for classification based on the original text of this node. "
             "The degree of this node is " + d + ". We consider nodes with degree more than " + head +
             " as head nodes. Head nodes have rich structure information in their connections with "
             "neighbor nodes.";
    case ExpertKind::kSar:
      return "This is the explanation for classification based on the original text with the "
             "understanding of its neighboring nodes. The degree of this node is " + d +
             ". We consider nodes with degree less than " + tail +
             " as tail nodes. Tail nodes have sparse structure information in their connections "
             "with neighbor nodes.";
    case ExpertKind::kSas:
      return "This is the summarization of the original text with the understanding of its "
             "neighboring nodes. The degree of this node is " + d + ". We consider degree less than " +
             head + " and more than " + tail + " as mid nodes.";
  }
  return {};
}

AugmentResult augment_all(const TextGraph& graph, Gateway& gateway, const CategorySet& categories,
                          const AugmentOptions& options) {
  const auto n = graph.num_nodes();
  constexpr std::array<ExpertKind, 3> kLlmExperts = {ExpertKind::kSas, ExpertKind::kIdr,
                                                     ExpertKind::kSar};
  std::vector<LlmRequest> requests;
  requests.reserve(n * kLlmExperts.size());
  for (NodeId v = 0; v < n; ++v) {
    const auto nbrs = sample_neighbors(graph, v, options.neighbors_k, options.seed);
    for (auto kind : kLlmExperts)
      requests.push_back(build_prompt(kind, graph, v, nbrs, categories, options.prompt));
  }
  auto replies = gateway.complete_batch(requests, options.max_in_flight);

  const auto thresholds = degree_thresholds(graph);
  AugmentResult result;
  result.sets.resize(n);
  for (NodeId v = 0; v < n; ++v) {
    auto& set = result.sets[v];
    set.id = v;
    for (auto kind : kAllExperts)
      set.context_prompts[static_cast<std::size_t>(kind)] =
          build_context_prompt(kind, graph, v, thresholds.head, thresholds.tail);
    set.texts[static_cast<std::size_t>(ExpertKind::kRaw)] = graph.text(v);
    for (std::size_t e = 0; e < kLlmExperts.size(); ++e) {
      auto& item = replies[v * kLlmExperts.size() + e];
      auto& slot = set.texts[static_cast<std::size_t>(kLlmExperts[e])];
      if (item.ok()) {
        slot = std::move(item.response->text);
        continue;
      }
      slot = graph.text(v);
      std::string why = "unknown error";
      try {
        std::rethrow_exception(item.error);
      } catch (const std::exception& ex) {
        why = ex.what();
      } catch (...) {
      }
      result.warnings.push_back("node " + std::to_string(v) + " expert " +
                                std::string(expert_name(kLlmExperts[e])) +
                                ": falling back to raw text (" + why + ")");
    }
  }
  return result;
}

void save_augmentations(const std::filesystem::path& path, std::span<const AugmentedTextSet> sets) {
  std::string out;
  for (const auto& s : sets) {
    json obj;
    obj["id"] = s.id;
    json ctx;
    for (auto k : kAllExperts) {
      obj[std::string(expert_name(k))] = s.text(k);
      ctx[std::string(expert_name(k))] = s.context(k);
    }
    obj["ctx"] = std::move(ctx);
    out += obj.dump() + "\n";
  }
  write_file_atomic(path, out);
}

std::vector<AugmentedTextSet> load_augmentations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open augmentation store " + path.string());
  std::vector<AugmentedTextSet> sets;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto obj = json::parse(line);
      AugmentedTextSet s;
      s.id = obj.at("id").get<NodeId>();
      for (auto k : kAllExperts) {
        const auto name = std::string(expert_name(k));
        s.texts[static_cast<std::size_t>(k)] = obj.at(name).get<std::string>();
        s.context_prompts[static_cast<std::size_t>(k)] = obj.at("ctx").at(name).get<std::string>();
      }
      if (s.id != sets.size())
        throw ValidationError(path.filename().string() + ":" + std::to_string(lineno) +
                              ": ids must be contiguous from 0");
      sets.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw ParseError(path.filename().string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return sets;
}

}  // namespace gaug
