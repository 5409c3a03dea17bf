#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "gaug/common.hpp"

namespace gaug {

struct LlmRequest {
  std::string system_prompt;
  std::string user_prompt;
  double temperature = 0.0;
  int max_tokens = 512;
  std::string model_name;

  void validate() const;
  /// SHA-256 over an unambiguous encoding of every field.
  std::string cache_key() const;
};

struct LlmResponse {
  std::string text;
  bool cached = false;
  std::int64_t latency_ms = 0;
};

class LlmError : public Error {
 public:
  using Error::Error;
};

/// Connection-level failure; retried by the gateway.
class TransportError : public LlmError {
 public:
  using LlmError::LlmError;
};

/// Non-2xx HTTP reply; never retried.
class StatusError : public LlmError {
 public:
  StatusError(int status, std::string body)
      : LlmError("HTTP status " + std::to_string(status) + ": " + body),
        status_(status),
        body_(std::move(body)) {}
  int status() const { return status_; }
  const std::string& body() const { return body_; }

 private:
  int status_;
  std::string body_;
};

class LlmBackend {
 public:
  virtual ~LlmBackend() = default;
  /// Must be safe to call concurrently.
  virtual std::string complete(const LlmRequest& request) = 0;
};

enum class MockMode { kSummarizeOverlap, kClassifyByWordpool, kAdjudicateByJaccard, kAuto };

MockMode parse_mock_mode(std::string_view name);
std::string_view mock_mode_name(MockMode mode);

struct MockPolicy {
  MockMode mode = MockMode::kAuto;
  std::uint64_t seed = 0;
  double jaccard_threshold = 0.5;

  void validate() const;
};

/// The deterministic reply of the mock backend. Reads the line-oriented
/// prompt layout produced by the prompt builders ("Main node:",
/// "Linked node i:", "Candidate i:", "categories: [...]").
std::string mock_reply(const MockPolicy& policy, const LlmRequest& request);

/// Reentrant mock with call and concurrency instrumentation.
class MockBackend : public LlmBackend {
 public:
  explicit MockBackend(MockPolicy policy, std::chrono::milliseconds delay = {});

  std::string complete(const LlmRequest& request) override;

  std::size_t calls() const { return calls_.load(); }
  std::size_t peak_in_flight() const { return peak_.load(); }
  const MockPolicy& policy() const { return policy_; }

 private:
  MockPolicy policy_;
  std::chrono::milliseconds delay_;
  std::atomic<std::size_t> calls_{0};
  std::atomic<std::size_t> in_flight_{0};
  std::atomic<std::size_t> peak_{0};
};

struct HttpEndpointConfig {
  std::string base_url;  // scheme://host[:port][/prefix]
  std::string api_key;
  std::chrono::seconds timeout{120};

  /// GAUG_LLM_BASE_URL and GAUG_LLM_API_KEY.
  static HttpEndpointConfig from_env();
};

/// JSON-over-HTTP POST with status and transport error mapping.
class HttpEndpoint {
 public:
  explicit HttpEndpoint(HttpEndpointConfig config);
  nlohmann::json post_json(const std::string& path, const nlohmann::json& body) const;
  const HttpEndpointConfig& config() const { return config_; }

 private:
  HttpEndpointConfig config_;
  std::string host_;
  std::string prefix_;
};

/// OpenAI-compatible chat completions backend.
class HttpChatBackend : public LlmBackend {
 public:
  explicit HttpChatBackend(HttpEndpointConfig config) : endpoint_(std::move(config)) {}
  std::string complete(const LlmRequest& request) override;

  static nlohmann::json request_body(const LlmRequest& request);
  /// Extracts choices[0].message.content; throws LlmError when absent.
  static std::string parse_reply(const nlohmann::json& reply);

 private:
  HttpEndpoint endpoint_;
};

/// Content-addressed text cache. Disk-backed when `dir` is non-empty,
/// otherwise in memory. Writes are atomic (temp file then rename).
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir = {});

  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, const std::string& text);
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path path_for(const std::string& key) const;

  std::filesystem::path dir_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::string> memory_;
};

struct GatewayOptions {
  std::filesystem::path cache_dir;  // empty: in-memory cache
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};

  /// cache_dir from GAUG_LLM_CACHE_DIR when set.
  static GatewayOptions from_env();
};

struct BatchItem {
  std::optional<LlmResponse> response;
  std::exception_ptr error;

  bool ok() const { return response.has_value(); }
};

class Gateway {
 public:
  Gateway(std::shared_ptr<LlmBackend> backend, GatewayOptions options = {});

  /// Throws UsageError on an invalid request, StatusError on non-2xx, and
  /// LlmError once transport retries are exhausted.
  LlmResponse complete(const LlmRequest& request);

  /// Responses in input order; failures are reported positionally.
  std::vector<BatchItem> complete_batch(const std::vector<LlmRequest>& requests,
                                        std::size_t max_in_flight);

  std::size_t uncached_calls() const { return uncached_.load(); }
  std::size_t total_calls() const { return total_.load(); }
  void reset_counters();

 private:
  std::shared_ptr<LlmBackend> backend_;
  GatewayOptions options_;
  ResponseCache cache_;
  std::atomic<std::size_t> uncached_{0};
  std::atomic<std::size_t> total_{0};
};

}  // namespace gaug
