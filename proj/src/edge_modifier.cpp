#include "gaug/edge_modifier.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <random>
#include <set>

#include "gaug/io.hpp"
#include "gaug/text.hpp"

namespace gaug {

using nlohmann::json;

EdgeCandidates candidates(const CsrAdjacency& adjacency, const StructEmbedding& emb, NodeId v,
                          std::size_t k) {
  if (k < 1) throw UsageError("candidate count k must be >= 1");
  const auto n = adjacency.num_nodes();
  if (v >= n) throw UsageError("node " + std::to_string(v) + " out of range");

  std::vector<std::pair<double, NodeId>> linked, unlinked;
  for (NodeId u = 0; u < n; ++u) {
    if (u == v) continue;
    (adjacency.has_edge(v, u) ? linked : unlinked).emplace_back(pairwise_similarity(emb, v, u), u);
  }
  auto take = [k](auto& pool, auto cmp) {
    const auto m = std::min(k, pool.size());
    std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(m), pool.end(), cmp);
    std::vector<NodeId> out;
    for (std::size_t i = 0; i < m; ++i) out.push_back(pool[i].second);
    return out;
  };
  EdgeCandidates c;
  c.spurious = take(linked, [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first < b.first : a.second < b.second;
  });
  c.missing = take(unlinked, [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  return c;
}

std::vector<std::uint8_t> EdgeActionSet::action_sequence() const {
  std::vector<std::uint8_t> seq;
  for (const auto& [_, bit] : spurious) seq.push_back(bit);
  for (const auto& [_, bit] : missing) seq.push_back(bit);
  return seq;
}

void EdgeActionSet::validate(const CsrAdjacency& adjacency, std::size_t k) const {
  const auto where = "action set of node " + std::to_string(id) + ": ";
  if (id >= adjacency.num_nodes()) throw ValidationError(where + "node out of range");
  if (spurious.size() > k || missing.size() > k) throw ValidationError(where + "more than K candidates");
  std::set<NodeId> seen;
  for (const auto& [u, bit] : spurious) {
    if (bit > 1) throw ValidationError(where + "non-binary deletion bit");
    if (!adjacency.has_edge(id, u)) throw ValidationError(where + std::to_string(u) + " is not a neighbor");
    if (!seen.insert(u).second) throw ValidationError(where + "duplicate candidate " + std::to_string(u));
  }
  for (const auto& [u, bit] : missing) {
    if (bit > 1) throw ValidationError(where + "non-binary addition bit");
    if (u == id || u >= adjacency.num_nodes() || adjacency.has_edge(id, u))
      throw ValidationError(where + std::to_string(u) + " is not a valid non-neighbor");
    if (!seen.insert(u).second) throw ValidationError(where + "candidate sets overlap at " + std::to_string(u));
  }
}

LlmRequest build_edge_prompt(const TextGraph& graph, NodeId v, std::span<const NodeId> cands,
                             const PromptOptions& options, int attempt) {
  LlmRequest req;
  req.model_name = options.model_name;
  req.temperature = options.temperature;
  req.max_tokens = options.max_tokens;
  req.system_prompt =
      "You are a helpful assistant that decides whether nodes of a text-attributed graph should be "
      "connected based on their texts.";
  std::string user = "Input:\nMain node: " + single_line(graph.text(v)) + "\n";
  for (std::size_t i = 0; i < cands.size(); ++i)
    user += "Candidate " + std::to_string(i + 1) + ": " + single_line(graph.text(cands[i])) + "\n";
  user +=
      "\nInstruction:\nAnalyze the text of the main node alongside the list of candidate node texts. "
      "Identify which candidates are closely related to the main node and should be connected to it. "
      "Return a binary list where '1' denotes that the candidate should be connected to the main "
      "node and '0' suggests otherwise, and the length of the list should match the number of "
      "candidates, which is " +
      std::to_string(cands.size()) +
      ".\n\nExpected Output:\n[1,0,1,....,0] (A list of 1s and 0s corresponding to each candidate)";
  if (attempt > 0) {
    std::string zeros = "0";
    for (std::size_t i = 1; i < cands.size(); ++i) zeros += ",0";
    user += "\n\nReminder (attempt " + std::to_string(attempt + 1) + "): reply with exactly " +
            std::to_string(cands.size()) + " values, for example [" +
            zeros + "].";
  }
  req.user_prompt = std::move(user);
  return req;
}

std::optional<std::vector<std::uint8_t>> parse_binary_list(std::string_view reply,
                                                           std::size_t expected) {
  std::size_t pos = 0;
  while ((pos = reply.find('[', pos)) != std::string_view::npos) {
    const auto close = reply.find(']', pos);
    if (close == std::string_view::npos) return std::nullopt;
    const auto body = reply.substr(pos + 1, close - pos - 1);
    std::vector<std::uint8_t> bits;
    bool ok = true;
    bool need_value = true;
    for (char c : body) {
      if (c == ' ' || c == '\t' || c == '\'' || c == '"') continue;
      if (c == '0' || c == '1') {
        if (!need_value) {
          ok = false;
          break;
        }
        bits.push_back(static_cast<std::uint8_t>(c - '0'));
        need_value = false;
      } else if (c == ',' && !need_value) {
        need_value = true;
      } else {
        ok = false;
        break;
      }
    }
    if (ok && !bits.empty() && !need_value)
      return bits.size() == expected ? std::optional(bits) : std::nullopt;
    pos = close + 1;
  }
  return std::nullopt;
}

namespace {

// Connection verdicts for one candidate list, or nullopt after all retries.
// `first` supplies the outcome of attempt 0 when it was already issued.
std::optional<std::vector<std::uint8_t>> query_list(Gateway& gateway, const TextGraph& graph,
                                                    NodeId v, std::span<const NodeId> cands,
                                                    const AdjudicateOptions& options,
                                                    const BatchItem* first,
                                                    std::string& last_problem) {
  for (int attempt = 0; attempt <= options.parse_retries; ++attempt) {
    std::string reply;
    try {
      if (attempt == 0 && first) {
        if (!first->ok()) std::rethrow_exception(first->error);
        reply = first->response->text;
      } else {
        reply = gateway.complete(build_edge_prompt(graph, v, cands, options.prompt, attempt)).text;
      }
    } catch (const std::exception& e) {
      last_problem = e.what();
      continue;
    }
    if (auto bits = parse_binary_list(reply, cands.size())) return bits;
    last_problem = "unusable reply '" + reply.substr(0, 80) + "'";
  }
  return std::nullopt;
}

EdgeActionSet assemble(NodeId v, const EdgeCandidates& cands,
                       const std::optional<std::vector<std::uint8_t>>& del_verdicts,
                       const std::optional<std::vector<std::uint8_t>>& add_verdicts) {
  EdgeActionSet set;
  set.id = v;
  for (std::size_t i = 0; i < cands.spurious.size(); ++i)
    // The LLM answers "should be connected"; deletion is its complement.
    set.spurious.emplace_back(cands.spurious[i], del_verdicts ? 1 - (*del_verdicts)[i] : 0);
  for (std::size_t i = 0; i < cands.missing.size(); ++i)
    set.missing.emplace_back(cands.missing[i], add_verdicts ? (*add_verdicts)[i] : 0);
  return set;
}

std::string fallback_warning(NodeId v, std::string_view which, const std::string& problem) {
  return "node " + std::to_string(v) + " " + std::string(which) +
         " list: conservative fallback (" + problem + ")";
}

}  // namespace

EdgeActionSet adjudicate(Gateway& gateway, const TextGraph& graph, NodeId v,
                         const EdgeCandidates& cands, const AdjudicateOptions& options,
                         std::vector<std::string>* warnings) {
  std::optional<std::vector<std::uint8_t>> del, add;
  std::string problem;
  if (!cands.spurious.empty()) {
    del = query_list(gateway, graph, v, cands.spurious, options, nullptr, problem);
    if (!del && warnings) warnings->push_back(fallback_warning(v, "deletion", problem));
  }
  if (!cands.missing.empty()) {
    add = query_list(gateway, graph, v, cands.missing, options, nullptr, problem);
    if (!add && warnings) warnings->push_back(fallback_warning(v, "addition", problem));
  }
  return assemble(v, cands, del, add);
}

ActionBuildResult build_all_actions(const TextGraph& graph, const StructEmbedding& emb,
                                    Gateway& gateway, std::size_t k,
                                    const AdjudicateOptions& options) {
  const auto n = graph.num_nodes();
  std::vector<EdgeCandidates> cands(n);
  struct Slot {
    NodeId node;
    bool deletion;
  };
  std::vector<Slot> slots;
  std::vector<LlmRequest> requests;
  for (NodeId v = 0; v < n; ++v) {
    cands[v] = candidates(graph.adjacency(), emb, v, k);
    if (!cands[v].spurious.empty()) {
      slots.push_back({v, true});
      requests.push_back(build_edge_prompt(graph, v, cands[v].spurious, options.prompt));
    }
    if (!cands[v].missing.empty()) {
      slots.push_back({v, false});
      requests.push_back(build_edge_prompt(graph, v, cands[v].missing, options.prompt));
    }
  }
  auto replies = gateway.complete_batch(requests, options.max_in_flight);

  std::vector<std::optional<std::vector<std::uint8_t>>> del(n), add(n);
  ActionBuildResult result;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto [v, deletion] = slots[i];
    const auto& list = deletion ? cands[v].spurious : cands[v].missing;
    std::string problem;
    auto verdict = query_list(gateway, graph, v, list, options, &replies[i], problem);
    if (!verdict) result.warnings.push_back(fallback_warning(v, deletion ? "deletion" : "addition", problem));
    (deletion ? del : add)[v] = std::move(verdict);
  }
  result.actions.reserve(n);
  for (NodeId v = 0; v < n; ++v) result.actions.push_back(assemble(v, cands[v], del[v], add[v]));
  return result;
}

CsrAdjacency sample_augmented_adjacency(const CsrAdjacency& adjacency,
                                        std::span<const EdgeActionSet> actions,
                                        double accept_rate, std::uint64_t seed) {
  if (!(accept_rate >= 0.0 && accept_rate <= 1.0))
    throw UsageError("accept_rate must lie in [0,1]");
  std::mt19937_64 rng(seed);
  auto accept = [&] { return unit_from_bits(rng()) < accept_rate; };
  auto key = [](NodeId a, NodeId b) { return a < b ? Edge{a, b} : Edge{b, a}; };

  std::set<Edge> removed;
  std::vector<Edge> added;
  for (const auto& set : actions) {
    for (const auto& [u, bit] : set.spurious)
      if (bit && accept()) removed.insert(key(set.id, u));
    for (const auto& [u, bit] : set.missing)
      if (bit && accept()) added.push_back(key(set.id, u));
  }
  std::vector<Edge> edges;
  for (const auto& e : adjacency.edge_list())
    if (!removed.count(e)) edges.push_back(e);
  edges.insert(edges.end(), added.begin(), added.end());
  return CsrAdjacency::from_edges(adjacency.num_nodes(), edges);
}

std::size_t count_active_actions(std::span<const EdgeActionSet> actions) {
  std::size_t count = 0;
  for (const auto& s : actions)
    for (auto bit : s.action_sequence()) count += bit;
  return count;
}

CsrAdjacency mask_random_edges(const CsrAdjacency& adjacency, std::size_t count, std::uint64_t seed) {
  auto edges = adjacency.edge_list();
  std::mt19937_64 rng(seed);
  const auto drop = std::min(count, edges.size());
  for (std::size_t i = 0; i < drop; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, edges.size() - 1);
    std::swap(edges[i], edges[pick(rng)]);
  }
  edges.erase(edges.begin(), edges.begin() + static_cast<std::ptrdiff_t>(drop));
  return CsrAdjacency::from_edges(adjacency.num_nodes(), edges);
}

void save_actions(const std::filesystem::path& path, std::span<const EdgeActionSet> actions) {
  std::string out;
  for (const auto& s : actions) {
    json spu = json::array(), mis = json::array();
    for (const auto& [u, bit] : s.spurious) spu.push_back({u, bit});
    for (const auto& [u, bit] : s.missing) mis.push_back({u, bit});
    out += json{{"id", s.id}, {"spu", spu}, {"mis", mis}}.dump() + "\n";
  }
  write_file_atomic(path, out);
}

std::vector<EdgeActionSet> load_actions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open actions file " + path.string());
  std::vector<EdgeActionSet> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto obj = json::parse(line);
      EdgeActionSet s;
      s.id = obj.at("id").get<NodeId>();
      for (const auto& p : obj.at("spu")) s.spurious.emplace_back(p.at(0).get<NodeId>(), p.at(1).get<std::uint8_t>());
      for (const auto& p : obj.at("mis")) s.missing.emplace_back(p.at(0).get<NodeId>(), p.at(1).get<std::uint8_t>());
      out.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw ParseError(path.filename().string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace gaug
