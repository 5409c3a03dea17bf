#include "gaug/moe_fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

namespace gaug {

FusionParams FusionParams::zeros(std::size_t dim, double tau) {
  FusionParams p;
  p.w1 = Vec::Zero(static_cast<Eigen::Index>(dim));
  p.w2 = Mat::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  p.tau = tau;
  return p;
}

void FusionParams::validate() const {
  if (!(tau > 0.0)) throw ValidationError("attention temperature must be > 0");
  if (w2.rows() != w1.size() || w2.cols() != w1.size())
    throw ValidationError("fusion weights have inconsistent shapes");
  if (!w1.allFinite() || !w2.allFinite()) throw NumericError("fusion weights are not finite");
}

Vec stable_softmax(const Vec& logits) {
  if (!logits.allFinite()) throw NumericError("attention logits are not finite");
  const double m = logits.maxCoeff();
  Vec e = (logits.array() - m).exp();
  return e / e.sum();
}

namespace {

void check_shapes(const FusionParams& params, const Mat& experts, const Mat* contexts) {
  if (experts.cols() != params.w1.size())
    throw UsageError("expert vectors have dimension " + std::to_string(experts.cols()) +
                     ", fusion expects " + std::to_string(params.w1.size()));
  if (contexts && (contexts->rows() != experts.rows() || contexts->cols() != experts.cols()))
    throw UsageError("context vectors must match expert vectors in shape");
  if (!experts.allFinite() || (contexts && !contexts->allFinite()))
    throw NumericError("attention inputs are not finite");
}

Vec context_terms(const FusionParams& params, const Mat& experts, const Mat& contexts) {
  // Row i: ctx_i · W2 · x_i
  return ((contexts * params.w2).array() * experts.array()).rowwise().sum();
}

}  // namespace

Vec attention_plain(const FusionParams& params, const Mat& experts) {
  check_shapes(params, experts, nullptr);
  return stable_softmax(experts * params.w1 / params.tau);
}

Vec attention_context(const FusionParams& params, const Mat& experts, const Mat& contexts) {
  check_shapes(params, experts, &contexts);
  return stable_softmax(context_terms(params, experts, contexts) / params.tau);
}

Vec combined_logits(const FusionParams& params, const Mat& experts, const Mat& contexts) {
  check_shapes(params, experts, &contexts);
  return (experts * params.w1 + context_terms(params, experts, contexts)) / params.tau;
}

FusedFeature fuse(const FusionParams& params, const Mat& experts, const Mat& contexts) {
  FusedFeature out;
  out.attention = stable_softmax(combined_logits(params, experts, contexts));
  out.fused = experts.transpose() * out.attention;
  return out;
}

FusionInputs featurize_sets(std::span<const AugmentedTextSet> sets, std::size_t vocab_dim,
                            std::uint64_t hash_seed) {
  FusionInputs in;
  in.experts.resize(sets.size());
  in.contexts.resize(sets.size());
  for (std::size_t v = 0; v < sets.size(); ++v)
    for (std::size_t k = 0; k < kNumExperts; ++k) {
      in.experts[v][k] = featurize(sets[v].texts[k], vocab_dim, hash_seed);
      in.contexts[v][k] = featurize(sets[v].context_prompts[k], vocab_dim, hash_seed);
    }
  return in;
}

namespace {

Mat project_rows(const Mat& projection, const std::array<SparseVec, kNumExperts>& xs) {
  Mat out(static_cast<Eigen::Index>(kNumExperts), projection.cols());
  for (std::size_t k = 0; k < kNumExperts; ++k)
    out.row(static_cast<Eigen::Index>(k)) = project(projection, xs[k]).transpose();
  return out;
}

}  // namespace

ExpertFeatureBank build_bank(const FusionInputs& inputs, const HashingEncoderParams& encoder,
                             const FusionParams& fusion) {
  fusion.validate();
  const auto n = static_cast<Eigen::Index>(inputs.num_nodes());
  const auto d = static_cast<Eigen::Index>(encoder.embed_dim);
  ExpertFeatureBank bank;
  bank.fused.resize(n, d);
  bank.attention.resize(n, static_cast<Eigen::Index>(kNumExperts));
  for (Eigen::Index v = 0; v < n; ++v) {
    bank.expert_vecs.push_back(project_rows(encoder.projection, inputs.experts[v]));
    bank.ctx_vecs.push_back(project_rows(encoder.projection, inputs.contexts[v]));
    const auto f = fuse(fusion, bank.expert_vecs.back(), bank.ctx_vecs.back());
    bank.fused.row(v) = f.fused.transpose();
    bank.attention.row(v) = f.attention.transpose();
  }
  return bank;
}

Mat single_expert_features(const FusionInputs& inputs, const HashingEncoderParams& encoder,
                           ExpertKind kind) {
  Mat out(static_cast<Eigen::Index>(inputs.num_nodes()), static_cast<Eigen::Index>(encoder.embed_dim));
  for (std::size_t v = 0; v < inputs.num_nodes(); ++v)
    out.row(static_cast<Eigen::Index>(v)) =
        project(encoder.projection, inputs.experts[v][static_cast<std::size_t>(kind)]).transpose();
  return out;
}

std::vector<LinkSample> sample_link_targets(const CsrAdjacency& adjacency, std::size_t negatives,
                                            std::uint64_t seed) {
  const auto n = adjacency.num_nodes();
  std::mt19937_64 rng(seed);
  std::vector<LinkSample> out;
  for (NodeId v = 0; v < n; ++v) {
    for (NodeId u : adjacency.neighbors(v)) out.push_back({v, u, 1.0});
    const auto non_neighbors = n - 1 - adjacency.degree(v);
    if (non_neighbors == 0 || n < 2) continue;
    const auto draws = negatives * std::max<std::size_t>(1, adjacency.degree(v));
    std::uniform_int_distribution<NodeId> pick(0, static_cast<NodeId>(n - 1));
    for (std::size_t i = 0; i < draws; ++i) {
      NodeId u;
      do {
        u = pick(rng);
      } while (u == v || adjacency.has_edge(v, u));
      out.push_back({v, u, 0.0});
    }
  }
  return out;
}

namespace {

double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }
double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

struct NodeForward {
  Mat experts;
  Mat contexts;
  Vec attention;
  Vec fused;
};

NodeForward forward_node(const FusionInputs& inputs, NodeId v, const HashingEncoderParams& encoder,
                         const FusionParams& fusion) {
  NodeForward f;
  f.experts = project_rows(encoder.projection, inputs.experts[v]);
  f.contexts = project_rows(encoder.projection, inputs.contexts[v]);
  auto fused = fuse(fusion, f.experts, f.contexts);
  f.attention = std::move(fused.attention);
  f.fused = std::move(fused.fused);
  return f;
}

}  // namespace

double fusion_loss(const FusionInputs& inputs, std::span<const LinkSample> samples,
                   const Mat& targets, const HashingEncoderParams& encoder,
                   const FusionParams& fusion, FusionGrads* grads) {
  if (samples.empty()) {
    if (grads) {
      grads->projection = Mat::Zero(encoder.projection.rows(), encoder.projection.cols());
      grads->w1 = Vec::Zero(fusion.w1.size());
      grads->w2 = Mat::Zero(fusion.w2.rows(), fusion.w2.cols());
    }
    return 0.0;
  }
  std::unordered_map<NodeId, NodeForward> fwd;
  std::unordered_map<NodeId, Vec> grad_fused;
  std::vector<NodeId> order;
  for (const auto& s : samples)
    if (!fwd.count(s.node)) {
      fwd.emplace(s.node, forward_node(inputs, s.node, encoder, fusion));
      order.push_back(s.node);
    }

  const double scale = 1.0 / static_cast<double>(samples.size());
  double loss = 0.0;
  for (const auto& s : samples) {
    const auto& f = fwd.at(s.node);
    const double logit = f.fused.dot(targets.row(s.target));
    loss -= s.label * log_sigmoid(logit) + (1.0 - s.label) * log_sigmoid(-logit);
    if (grads) {
      auto [it, inserted] = grad_fused.try_emplace(s.node, Vec::Zero(f.fused.size()));
      it->second += (sigmoid(logit) - s.label) * scale * targets.row(s.target).transpose();
    }
  }
  loss *= scale;
  if (!grads) return loss;

  grads->projection = Mat::Zero(encoder.projection.rows(), encoder.projection.cols());
  grads->w1 = Vec::Zero(fusion.w1.size());
  grads->w2 = Mat::Zero(fusion.w2.rows(), fusion.w2.cols());
  const double inv_tau = 1.0 / fusion.tau;
  for (NodeId v : order) {
    const auto& f = fwd.at(v);
    const Vec& g = grad_fused.at(v);
    const Vec g_alpha = f.experts * g;
    const Vec g_logit = f.attention.array() * (g_alpha.array() - f.attention.dot(g_alpha));
    for (std::size_t k = 0; k < kNumExperts; ++k) {
      const auto i = static_cast<Eigen::Index>(k);
      const double gl = g_logit(i) * inv_tau;
      const Vec x = f.experts.row(i).transpose();
      const Vec c = f.contexts.row(i).transpose();
      const Vec d_expert = f.attention(i) * g + gl * (fusion.w1 + fusion.w2.transpose() * c);
      const Vec d_ctx = gl * (fusion.w2 * x);
      grads->w1 += gl * x;
      grads->w2 += gl * c * x.transpose();
      for (const auto& [j, val] : inputs.experts[v][k]) grads->projection.row(j) += val * d_expert.transpose();
      for (const auto& [j, val] : inputs.contexts[v][k]) grads->projection.row(j) += val * d_ctx.transpose();
    }
  }
  return loss;
}

FusionTrainResult train_fusion(const TextGraph& graph, const FusionInputs& inputs,
                               HashingEncoderParams& encoder, FusionParams& fusion,
                               const FusionTrainConfig& config) {
  encoder.validate();
  fusion.validate();
  if (inputs.num_nodes() != graph.num_nodes())
    throw UsageError("fusion inputs cover " + std::to_string(inputs.num_nodes()) +
                     " nodes, graph has " + std::to_string(graph.num_nodes()));
  if (config.batch < 1) throw UsageError("fusion batch must be >= 1");

  Mat targets(static_cast<Eigen::Index>(graph.num_nodes()), static_cast<Eigen::Index>(encoder.embed_dim));
  for (std::size_t v = 0; v < graph.num_nodes(); ++v)
    targets.row(static_cast<Eigen::Index>(v)) =
        project(encoder.projection, inputs.experts[v][static_cast<std::size_t>(ExpertKind::kRaw)])
            .transpose();

  const auto samples = sample_link_targets(graph.adjacency(), config.negatives, derive_seed(config.seed, 1));
  std::vector<std::vector<LinkSample>> by_node(graph.num_nodes());
  for (const auto& s : samples) by_node[s.node].push_back(s);

  FusionTrainResult result;
  auto record = [&](std::size_t epoch) {
    const double loss = fusion_loss(inputs, samples, targets, encoder, fusion, nullptr);
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << "fusion training diverged at epoch " << epoch << " (loss " << loss << ", lr "
          << config.lr << ", trace";
      for (double l : result.loss_trace) msg << " " << l;
      msg << ")";
      throw NumericError(msg.str());
    }
    result.loss_trace.push_back(loss);
  };
  record(0);

  std::vector<NodeId> order(graph.num_nodes());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(config.seed, 2));
  FusionGrads grads;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      std::vector<LinkSample> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + config.batch); ++i)
        batch.insert(batch.end(), by_node[order[i]].begin(), by_node[order[i]].end());
      if (batch.empty()) continue;
      fusion_loss(inputs, batch, targets, encoder, fusion, &grads);
      encoder.projection -= config.lr * grads.projection;
      fusion.w1 -= config.lr * grads.w1;
      fusion.w2 -= config.lr * grads.w2;
    }
    record(epoch);
  }
  return result;
}

}  // namespace gaug
