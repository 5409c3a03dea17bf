#include "gaug/llm_gateway.hpp"

#include <httplib.h>

#include <algorithm>
#include <cstdlib>
#include <map>
#include <thread>

#include "gaug/io.hpp"
#include "gaug/text.hpp"

namespace gaug {

using nlohmann::json;

void LlmRequest::validate() const {
  if (system_prompt.empty() || user_prompt.empty())
    throw UsageError("LLM request prompts must be non-empty");
  if (max_tokens < 1) throw UsageError("LLM request max_tokens must be >= 1");
  if (!(temperature >= 0.0)) throw UsageError("LLM request temperature must be >= 0");
}

std::string LlmRequest::cache_key() const {
  const json fields = json::array(
      {model_name, system_prompt, user_prompt, format_double(temperature), max_tokens});
  return sha256_hex(fields.dump());
}

MockMode parse_mock_mode(std::string_view name) {
  if (name == "summarize_overlap") return MockMode::kSummarizeOverlap;
  if (name == "classify_by_wordpool") return MockMode::kClassifyByWordpool;
  if (name == "adjudicate_by_jaccard") return MockMode::kAdjudicateByJaccard;
  if (name == "auto") return MockMode::kAuto;
  throw ValidationError("unknown mock mode '" + std::string(name) + "'");
}

std::string_view mock_mode_name(MockMode mode) {
  switch (mode) {
    case MockMode::kSummarizeOverlap: return "summarize_overlap";
    case MockMode::kClassifyByWordpool: return "classify_by_wordpool";
    case MockMode::kAdjudicateByJaccard: return "adjudicate_by_jaccard";
    case MockMode::kAuto: return "auto";
  }
  return "auto";
}

void MockPolicy::validate() const {
  if (!(jaccard_threshold >= 0.0 && jaccard_threshold <= 1.0))
    throw ValidationError("mock jaccard_threshold must lie in [0,1]");
}

namespace {

struct ParsedPrompt {
  std::optional<std::string> main;
  std::vector<std::string> linked;
  std::vector<std::string> candidates;
  std::vector<std::string> categories;
};

// Text after "<label> <digits>: " when `line` starts with that pattern.
std::optional<std::string> numbered_field(std::string_view line, std::string_view label) {
  if (line.substr(0, label.size()) != label) return std::nullopt;
  auto rest = line.substr(label.size());
  std::size_t i = 0;
  while (i < rest.size() && rest[i] >= '0' && rest[i] <= '9') ++i;
  if (i == 0 || rest.substr(i, 2) != ": ") return std::nullopt;
  return std::string(rest.substr(i + 2));
}

ParsedPrompt parse_prompt(std::string_view prompt) {
  ParsedPrompt p;
  std::size_t start = 0;
  while (start <= prompt.size()) {
    auto end = prompt.find('\n', start);
    if (end == std::string_view::npos) end = prompt.size();
    auto line = prompt.substr(start, end - start);
    if (line.substr(0, 11) == "Main node: ") {
      p.main = std::string(line.substr(11));
    } else if (auto t = numbered_field(line, "Linked node ")) {
      p.linked.push_back(*t);
    } else if (auto c = numbered_field(line, "Candidate ")) {
      p.candidates.push_back(*c);
    } else if (auto pos = line.find("categories: ["); pos != std::string_view::npos && p.categories.empty()) {
      auto body = line.substr(pos + 13);
      body = body.substr(0, body.find(']'));
      std::size_t s = 0;
      while (s <= body.size()) {
        auto e = body.find(',', s);
        if (e == std::string_view::npos) e = body.size();
        auto item = body.substr(s, e - s);
        while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
        while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
        if (!item.empty()) p.categories.emplace_back(item);
        s = e + 1;
      }
    }
    start = end + 1;
  }
  return p;
}

std::uint64_t prompt_hash(std::uint64_t seed, const LlmRequest& r) {
  const auto hex = sha256_hex(std::to_string(seed) + "\n" + r.system_prompt + "\n" + r.user_prompt);
  return std::stoull(hex.substr(0, 16), nullptr, 16);
}

std::string lower(std::string s) {
  for (auto& c : s)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return s;
}

// A token belongs to a category pool when it is the category name followed
// by a non-empty run of digits.
bool in_pool(const std::string& token, const std::string& category) {
  if (token.size() <= category.size() || token.compare(0, category.size(), category) != 0)
    return false;
  return std::all_of(token.begin() + static_cast<std::ptrdiff_t>(category.size()), token.end(),
                     [](char c) { return c >= '0' && c <= '9'; });
}

std::string reply_summarize(const ParsedPrompt& p) {
  const auto anchor = tokenize(p.main.value_or(""));
  std::vector<std::string> order;
  std::map<std::string, double> score;
  for (const auto& t : anchor) {
    if (!score.count(t)) order.push_back(t);
    score[t] = 1.0;
  }
  for (const auto& text : p.linked) {
    auto toks = tokenize(text);
    std::sort(toks.begin(), toks.end());
    toks.erase(std::unique(toks.begin(), toks.end()), toks.end());
    for (const auto& t : toks) {
      if (!score.count(t)) order.push_back(t);
      score[t] += 1.0;
    }
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](const auto& a, const auto& b) { return score[a] > score[b]; });
  std::size_t keep = 1;
  {
    auto uniq = anchor;
    std::sort(uniq.begin(), uniq.end());
    keep = std::max<std::size_t>(1, std::unique(uniq.begin(), uniq.end()) - uniq.begin());
  }
  keep = std::min({keep, order.size(), std::size_t{64}});
  std::string out = "The main node can be summarized as:";
  for (std::size_t i = 0; i < keep; ++i) out += " " + order[i];
  out += p.linked.empty() ? " due to its own text." : " due to overlap with its linked nodes.";
  return out;
}

std::string reply_classify(const MockPolicy& policy, const LlmRequest& r, const ParsedPrompt& p) {
  if (p.categories.empty()) return "The node cannot be categorized because no categories were given.";
  std::vector<std::string> cats;
  for (const auto& c : p.categories) cats.push_back(lower(c));
  std::vector<double> count(cats.size(), 0.0);
  std::vector<std::vector<std::string>> evidence(cats.size());
  auto tally = [&](const std::string& text, double weight) {
    for (const auto& t : tokenize(text))
      for (std::size_t c = 0; c < cats.size(); ++c)
        if (in_pool(t, cats[c])) {
          count[c] += weight;
          if (weight == 1.0 && std::find(evidence[c].begin(), evidence[c].end(), t) == evidence[c].end())
            evidence[c].push_back(t);
        }
  };
  tally(p.main.value_or(""), 1.0);
  for (const auto& text : p.linked) tally(text, 0.5);

  const double best = *std::max_element(count.begin(), count.end());
  std::vector<std::size_t> tied;
  for (std::size_t c = 0; c < cats.size(); ++c)
    if (count[c] == best) tied.push_back(c);
  const auto pick = tied[prompt_hash(policy.seed, r) % tied.size()];

  std::string out = "The node belongs to the " + p.categories[pick] + " category due to";
  if (evidence[pick].empty()) {
    out += " its overall context.";
  } else {
    out += " evidence:";
    for (const auto& t : evidence[pick]) out += " " + t;
    out += ".";
  }
  return out;
}

std::string reply_adjudicate(const MockPolicy& policy, const ParsedPrompt& p) {
  const auto main = p.main.value_or("");
  std::string out = "[";
  for (std::size_t i = 0; i < p.candidates.size(); ++i) {
    if (i) out += ",";
    out += token_jaccard(main, p.candidates[i]) >= policy.jaccard_threshold ? "1" : "0";
  }
  return out + "]";
}

}  // namespace

std::string mock_reply(const MockPolicy& policy, const LlmRequest& request) {
  const auto p = parse_prompt(request.user_prompt);
  MockMode mode = policy.mode;
  if (mode == MockMode::kAuto) {
    if (!p.candidates.empty() || request.user_prompt.find("Return a binary list") != std::string::npos)
      mode = MockMode::kAdjudicateByJaccard;
    else if (!p.categories.empty())
      mode = MockMode::kClassifyByWordpool;
    else
      mode = MockMode::kSummarizeOverlap;
  }
  switch (mode) {
    case MockMode::kSummarizeOverlap: return reply_summarize(p);
    case MockMode::kClassifyByWordpool: return reply_classify(policy, request, p);
    case MockMode::kAdjudicateByJaccard: return reply_adjudicate(policy, p);
    case MockMode::kAuto: break;
  }
  return reply_summarize(p);
}

MockBackend::MockBackend(MockPolicy policy, std::chrono::milliseconds delay)
    : policy_(policy), delay_(delay) {
  policy_.validate();
}

std::string MockBackend::complete(const LlmRequest& request) {
  calls_.fetch_add(1);
  const auto now = in_flight_.fetch_add(1) + 1;
  auto peak = peak_.load();
  while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
  }
  if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
  auto text = mock_reply(policy_, request);
  in_flight_.fetch_sub(1);
  return text;
}

HttpEndpointConfig HttpEndpointConfig::from_env() {
  HttpEndpointConfig c;
  if (const char* v = std::getenv("GAUG_LLM_BASE_URL")) c.base_url = v;
  if (const char* v = std::getenv("GAUG_LLM_API_KEY")) c.api_key = v;
  return c;
}

HttpEndpoint::HttpEndpoint(HttpEndpointConfig config) : config_(std::move(config)) {
  const auto& url = config_.base_url;
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ValidationError("base_url must include a scheme: '" + url + "'");
  const auto path = url.find('/', scheme + 3);
  host_ = url.substr(0, path);
  prefix_ = path == std::string::npos ? "" : url.substr(path);
  while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
}

json HttpEndpoint::post_json(const std::string& path, const json& body) const {
  httplib::Client client(host_);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  client.set_write_timeout(config_.timeout);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
  auto res = client.Post(prefix_ + path, headers, body.dump(), "application/json");
  if (!res) throw TransportError("request to " + host_ + prefix_ + path + " failed: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300) throw StatusError(res->status, res->body);
  try {
    return json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw LlmError(std::string("malformed JSON reply: ") + e.what());
  }
}

json HttpChatBackend::request_body(const LlmRequest& request) {
  return json{{"model", request.model_name},
              {"messages", json::array({{{"role", "system"}, {"content", request.system_prompt}},
                                        {{"role", "user"}, {"content", request.user_prompt}}})},
              {"temperature", request.temperature},
              {"max_tokens", request.max_tokens}};
}

std::string HttpChatBackend::parse_reply(const json& reply) {
  try {
    const auto& content = reply.at("choices").at(0).at("message").at("content");
    if (!content.is_string()) throw LlmError("choices[0].message.content is not a string");
    return content.get<std::string>();
  } catch (const json::exception& e) {
    throw LlmError(std::string("unexpected chat completion shape: ") + e.what());
  }
}

std::string HttpChatBackend::complete(const LlmRequest& request) {
  return parse_reply(endpoint_.post_json("/v1/chat/completions", request_body(request)));
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  if (!dir_.empty()) std::filesystem::create_directories(dir_);
}

std::filesystem::path ResponseCache::path_for(const std::string& key) const {
  return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<std::string> ResponseCache::get(const std::string& key) const {
  if (dir_.empty()) {
    std::lock_guard lock(mu_);
    auto it = memory_.find(key);
    if (it == memory_.end()) return std::nullopt;
    return it->second;
  }
  const auto path = path_for(key);
  if (!std::filesystem::exists(path)) return std::nullopt;
  try {
    return json::parse(read_file(path)).at("text").get<std::string>();
  } catch (const std::exception&) {
    return std::nullopt;  // corrupt entry: treat as a miss
  }
}

void ResponseCache::put(const std::string& key, const std::string& text) {
  if (dir_.empty()) {
    std::lock_guard lock(mu_);
    memory_[key] = text;
    return;
  }
  write_file_atomic(path_for(key), json{{"text", text}}.dump());
}

GatewayOptions GatewayOptions::from_env() {
  GatewayOptions o;
  if (const char* v = std::getenv("GAUG_LLM_CACHE_DIR")) o.cache_dir = v;
  return o;
}

Gateway::Gateway(std::shared_ptr<LlmBackend> backend, GatewayOptions options)
    : backend_(std::move(backend)), options_(std::move(options)), cache_(options_.cache_dir) {
  if (!backend_) throw UsageError("gateway requires a backend");
  if (options_.attempts < 1) throw UsageError("gateway attempts must be >= 1");
}

void Gateway::reset_counters() {
  uncached_ = 0;
  total_ = 0;
}

LlmResponse Gateway::complete(const LlmRequest& request) {
  request.validate();
  total_.fetch_add(1);
  const auto start = std::chrono::steady_clock::now();
  const auto key = request.cache_key();
  auto elapsed = [&] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start)
        .count();
  };
  if (auto hit = cache_.get(key)) return LlmResponse{std::move(*hit), true, elapsed()};

  uncached_.fetch_add(1);
  auto backoff = options_.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    try {
      auto text = backend_->complete(request);
      cache_.put(key, text);
      return LlmResponse{std::move(text), false, elapsed()};
    } catch (const TransportError& e) {
      if (attempt >= options_.attempts)
        throw LlmError("LLM transport failed after " + std::to_string(attempt) + " attempts: " + e.what());
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
}

std::vector<BatchItem> Gateway::complete_batch(const std::vector<LlmRequest>& requests,
                                               std::size_t max_in_flight) {
  if (max_in_flight < 1) throw UsageError("max_in_flight must be >= 1");
  std::vector<BatchItem> out(requests.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (auto i = next.fetch_add(1); i < requests.size(); i = next.fetch_add(1)) {
      try {
        out[i].response = complete(requests[i]);
      } catch (...) {
        out[i].error = std::current_exception();
      }
    }
  };
  const auto threads = std::min(max_in_flight, requests.size());
  if (threads <= 1) {
    worker();
    return out;
  }
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  return out;
}

}  // namespace gaug
