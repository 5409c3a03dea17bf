#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gaug/common.hpp"
#include "gaug/llm_gateway.hpp"

namespace gaug {

/// Sorted (bucket, value) pairs.
using SparseVec = std::vector<std::pair<std::uint32_t, double>>;

/// Lowercased unigram + bigram counts hashed into `vocab_dim` buckets and
/// L2-normalized. Empty text gives the zero vector.
SparseVec featurize(std::string_view text, std::size_t vocab_dim, std::uint64_t hash_seed);

struct HashingEncoderParams {
  std::size_t vocab_dim = 4096;
  std::size_t embed_dim = 64;
  std::uint64_t hash_seed = 13;
  Mat projection;  // vocab_dim x embed_dim

  /// Gaussian projection with entry std 1/sqrt(embed_dim).
  static HashingEncoderParams random(std::size_t vocab_dim, std::size_t embed_dim,
                                     std::uint64_t hash_seed, std::uint64_t init_seed);
  void validate() const;
};

/// projectionᵀ · x
Vec project(const Mat& projection, const SparseVec& x);

Vec encode(const HashingEncoderParams& params, std::string_view text);

/// One row per text.
Mat encode_all(const HashingEncoderParams& params, std::span<const std::string> texts);

struct RemoteEmbeddingConfig {
  HttpEndpointConfig endpoint;
  std::string model;
  std::filesystem::path cache_dir;  // empty: in-memory cache
};

/// Client for an OpenAI-compatible /v1/embeddings endpoint with a
/// content-addressed cache per text.
class RemoteEmbedder {
 public:
  explicit RemoteEmbedder(RemoteEmbeddingConfig config);

  /// One vector per input text, in order.
  std::vector<Vec> encode(std::span<const std::string> texts);
  std::size_t network_calls() const { return network_calls_.load(); }

 private:
  RemoteEmbeddingConfig config_;
  HttpEndpoint endpoint_;
  ResponseCache cache_;
  std::atomic<std::size_t> network_calls_{0};
};

}  // namespace gaug
