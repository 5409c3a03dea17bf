#include "gaug/text_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <json.hpp>
#include <random>

#include "gaug/io.hpp"
#include "gaug/text.hpp"

namespace gaug {

using nlohmann::json;

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

SparseVec featurize(std::string_view text, std::size_t vocab_dim, std::uint64_t hash_seed) {
  if (vocab_dim == 0) throw UsageError("vocab_dim must be >= 1");
  const auto tokens = tokenize(text);
  std::map<std::uint32_t, double> counts;
  auto add = [&](std::string_view gram) {
    const auto h = mix_seed(fnv1a(gram) ^ hash_seed);
    counts[static_cast<std::uint32_t>(h % vocab_dim)] += 1.0;
  };
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    add(tokens[i]);
    if (i + 1 < tokens.size()) add(tokens[i] + " " + tokens[i + 1]);
  }
  double norm2 = 0.0;
  for (const auto& [_, c] : counts) norm2 += c * c;
  SparseVec out;
  out.reserve(counts.size());
  const double inv = norm2 > 0 ? 1.0 / std::sqrt(norm2) : 0.0;
  for (const auto& [idx, c] : counts) out.emplace_back(idx, c * inv);
  return out;
}

HashingEncoderParams HashingEncoderParams::random(std::size_t vocab_dim, std::size_t embed_dim,
                                                  std::uint64_t hash_seed, std::uint64_t init_seed) {
  HashingEncoderParams p;
  p.vocab_dim = vocab_dim;
  p.embed_dim = embed_dim;
  p.hash_seed = hash_seed;
  p.projection.resize(static_cast<Eigen::Index>(vocab_dim), static_cast<Eigen::Index>(embed_dim));
  std::mt19937_64 rng(init_seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(embed_dim)));
  for (Eigen::Index i = 0; i < p.projection.size(); ++i) p.projection.data()[i] = normal(rng);
  p.validate();
  return p;
}

void HashingEncoderParams::validate() const {
  if (vocab_dim < 1 || embed_dim < 1) throw ValidationError("encoder dims must be >= 1");
  if (projection.rows() != static_cast<Eigen::Index>(vocab_dim) ||
      projection.cols() != static_cast<Eigen::Index>(embed_dim))
    throw ValidationError("projection shape does not match encoder dims");
  if (!projection.allFinite()) throw NumericError("projection has non-finite entries");
}

Vec project(const Mat& projection, const SparseVec& x) {
  Vec out = Vec::Zero(projection.cols());
  for (const auto& [idx, val] : x) out += val * projection.row(idx).transpose();
  return out;
}

Vec encode(const HashingEncoderParams& params, std::string_view text) {
  return project(params.projection, featurize(text, params.vocab_dim, params.hash_seed));
}

Mat encode_all(const HashingEncoderParams& params, std::span<const std::string> texts) {
  Mat out(static_cast<Eigen::Index>(texts.size()), static_cast<Eigen::Index>(params.embed_dim));
  for (std::size_t i = 0; i < texts.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = encode(params, texts[i]).transpose();
  return out;
}

RemoteEmbedder::RemoteEmbedder(RemoteEmbeddingConfig config)
    : config_(std::move(config)), endpoint_(config_.endpoint), cache_(config_.cache_dir) {}

std::vector<Vec> RemoteEmbedder::encode(std::span<const std::string> texts) {
  auto key_of = [&](const std::string& t) {
    return sha256_hex(json::array({"embedding", config_.model, t}).dump());
  };
  auto to_vec = [](const json& arr) {
    Vec v(static_cast<Eigen::Index>(arr.size()));
    for (std::size_t i = 0; i < arr.size(); ++i) v(static_cast<Eigen::Index>(i)) = arr[i].get<double>();
    return v;
  };

  std::vector<Vec> out(texts.size());
  std::vector<std::string> pending;
  std::map<std::string, std::vector<std::size_t>> where;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (auto hit = cache_.get(key_of(texts[i]))) {
      out[i] = to_vec(json::parse(*hit));
      continue;
    }
    auto& slots = where[texts[i]];
    if (slots.empty()) pending.push_back(texts[i]);
    slots.push_back(i);
  }
  if (pending.empty()) return out;

  network_calls_.fetch_add(1);
  const auto reply = endpoint_.post_json("/v1/embeddings", json{{"model", config_.model}, {"input", pending}});
  try {
    const auto& data = reply.at("data");
    if (data.size() != pending.size())
      throw LlmError("embedding service returned " + std::to_string(data.size()) + " vectors for " +
                     std::to_string(pending.size()) + " inputs");
    for (std::size_t j = 0; j < pending.size(); ++j) {
      const auto& emb = data.at(j).at("embedding");
      cache_.put(key_of(pending[j]), emb.dump());
      const Vec v = to_vec(emb);
      for (auto i : where[pending[j]]) out[i] = v;
    }
  } catch (const json::exception& e) {
    throw LlmError(std::string("unexpected embedding reply shape: ") + e.what());
  }
  return out;
}

}  // namespace gaug
