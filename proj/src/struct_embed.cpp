#include "gaug/struct_embed.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace gaug {

void WalkConfig::validate() const {
  if (walks_per_node < 1 || walk_length < 1 || window < 1 || dim < 1 || negatives < 1)
    throw ValidationError("walk config counts must be >= 1");
  if (!(lr > 0.0)) throw ValidationError("walk config lr must be > 0");
}

std::vector<Walk> random_walks(const CsrAdjacency& adjacency, const WalkConfig& config) {
  config.validate();
  std::vector<Walk> walks;
  for (NodeId start = 0; start < adjacency.num_nodes(); ++start) {
    if (adjacency.degree(start) == 0) continue;
    // One stream per start node so walks do not depend on iteration order.
    std::mt19937_64 rng(derive_seed(config.seed, start));
    for (std::size_t w = 0; w < config.walks_per_node; ++w) {
      Walk walk{start};
      walk.reserve(config.walk_length);
      while (walk.size() < config.walk_length) {
        auto nbrs = adjacency.neighbors(walk.back());
        std::uniform_int_distribution<std::size_t> pick(0, nbrs.size() - 1);
        walk.push_back(nbrs[pick(rng)]);
      }
      walks.push_back(std::move(walk));
    }
  }
  return walks;
}

namespace {

double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

SkipgramResult train_skipgram(const std::vector<Walk>& walks, std::size_t num_nodes,
                              const WalkConfig& config) {
  config.validate();
  const auto n = static_cast<Eigen::Index>(num_nodes);
  const auto d = static_cast<Eigen::Index>(config.dim);
  std::mt19937_64 rng(derive_seed(config.seed, 0x5eed));
  std::normal_distribution<double> init(0.0, 0.01);
  SkipgramResult result;
  Mat& in = result.embedding.vectors;
  in.resize(n, d);
  for (Eigen::Index i = 0; i < in.size(); ++i) in.data()[i] = init(rng);
  if (config.epochs == 0) return result;
  if (walks.empty()) throw UsageError("skip-gram training needs at least one walk");

  std::vector<double> freq(num_nodes, 0.0);
  for (const auto& w : walks)
    for (NodeId v : w) {
      if (v >= num_nodes) throw UsageError("walk visits node outside the graph");
      freq[v] += 1.0;
    }
  for (auto& f : freq) f = std::pow(f, 0.75);
  std::discrete_distribution<NodeId> noise(freq.begin(), freq.end());

  Mat out = Mat::Zero(n, d);
  std::size_t total_pairs = 0;
  for (const auto& w : walks) total_pairs += w.size();
  total_pairs *= config.epochs;
  std::size_t seen = 0;

  Vec grad_in(d);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double epoch_loss = 0.0;
    std::size_t epoch_pairs = 0;
    for (const auto& walk : walks) {
      for (std::size_t pos = 0; pos < walk.size(); ++pos, ++seen) {
        const double lr = std::max(config.lr * 1e-4,
                                   config.lr * (1.0 - static_cast<double>(seen) / static_cast<double>(total_pairs)));
        const NodeId center = walk[pos];
        const auto lo = pos >= config.window ? pos - config.window : 0;
        const auto hi = std::min(walk.size() - 1, pos + config.window);
        for (std::size_t c = lo; c <= hi; ++c) {
          if (c == pos) continue;
          const NodeId context = walk[c];
          grad_in.setZero();
          auto update = [&](NodeId target, double label) {
            const double score = in.row(center).dot(out.row(target));
            const double p = sigmoid(score);
            epoch_loss -= label > 0 ? std::log(std::max(p, 1e-12)) : std::log(std::max(1.0 - p, 1e-12));
            const double g = (label - p) * lr;
            grad_in += g * out.row(target).transpose();
            out.row(target) += g * in.row(center);
          };
          update(context, 1.0);
          for (std::size_t k = 0; k < config.negatives; ++k) {
            const NodeId neg = noise(rng);
            if (neg == context) continue;
            update(neg, 0.0);
          }
          in.row(center) += grad_in.transpose();
          ++epoch_pairs;
        }
      }
    }
    result.loss_trace.push_back(epoch_pairs ? epoch_loss / static_cast<double>(epoch_pairs) : 0.0);
  }
  return result;
}

double pairwise_similarity(const StructEmbedding& emb, NodeId v, NodeId u) {
  const auto n = static_cast<NodeId>(emb.vectors.rows());
  if (v >= n || u >= n) throw UsageError("node id out of range for embedding");
  const double nv = emb.vectors.row(v).norm();
  const double nu = emb.vectors.row(u).norm();
  if (nv == 0.0 || nu == 0.0) return 0.0;
  return std::clamp(emb.vectors.row(v).dot(emb.vectors.row(u)) / (nv * nu), -1.0, 1.0);
}

}  // namespace gaug
