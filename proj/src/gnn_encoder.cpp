#include "gaug/gnn_encoder.hpp"

#include <cmath>
#include <random>

namespace gaug {

SpMat normalized_adjacency(const CsrAdjacency& adjacency) {
  const auto n = adjacency.num_nodes();
  std::vector<double> inv_sqrt(n);
  for (NodeId v = 0; v < n; ++v) inv_sqrt[v] = 1.0 / std::sqrt(static_cast<double>(adjacency.degree(v) + 1));
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(adjacency.indices().size() + n);
  for (NodeId v = 0; v < n; ++v) {
    trips.emplace_back(v, v, inv_sqrt[v] * inv_sqrt[v]);
    for (NodeId u : adjacency.neighbors(v)) trips.emplace_back(v, u, inv_sqrt[v] * inv_sqrt[u]);
  }
  SpMat a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  a.setFromTriplets(trips.begin(), trips.end());
  return a;
}

EncoderParams EncoderParams::init(Eigen::Index in_dim, Eigen::Index hidden, Eigen::Index out_dim,
                                  std::uint64_t seed) {
  if (in_dim < 1 || hidden < 1 || out_dim < 1) throw UsageError("encoder dimensions must be >= 1");
  std::mt19937_64 rng(seed);
  EncoderParams p;
  p.w1 = glorot(in_dim, hidden, rng);
  p.b1 = RowVec::Zero(hidden);
  p.w2 = glorot(hidden, out_dim, rng);
  p.b2 = RowVec::Zero(out_dim);
  return p;
}

EncoderParams EncoderParams::zeros_like(const EncoderParams& other) {
  EncoderParams p;
  p.w1 = Mat::Zero(other.w1.rows(), other.w1.cols());
  p.b1 = RowVec::Zero(other.b1.size());
  p.w2 = Mat::Zero(other.w2.rows(), other.w2.cols());
  p.b2 = RowVec::Zero(other.b2.size());
  return p;
}

void EncoderParams::validate(Eigen::Index expected_in) const {
  if (w1.rows() != expected_in)
    throw ValidationError("encoder expects " + std::to_string(w1.rows()) + " input features, got " +
                          std::to_string(expected_in));
  if (b1.size() != w1.cols() || w2.rows() != w1.cols() || b2.size() != w2.cols())
    throw ValidationError("encoder parameter shapes are inconsistent");
  if (!w1.allFinite() || !b1.allFinite() || !w2.allFinite() || !b2.allFinite())
    throw ValidationError("encoder parameters contain non-finite values");
}

NamedTensors EncoderParams::to_tensors(const std::string& prefix) const {
  return {{prefix + "w1", w1}, {prefix + "b1", Mat(b1)}, {prefix + "w2", w2}, {prefix + "b2", Mat(b2)}};
}

EncoderParams EncoderParams::from_tensors(const NamedTensors& tensors, const std::string& prefix) {
  auto find = [&](const std::string& name) -> const Mat& {
    for (const auto& [k, m] : tensors)
      if (k == prefix + name) return m;
    throw ValidationError("checkpoint lacks tensor " + prefix + name);
  };
  EncoderParams p;
  p.w1 = find("w1");
  p.b1 = find("b1").row(0);
  p.w2 = find("w2");
  p.b2 = find("b2").row(0);
  p.validate(p.w1.rows());
  return p;
}

Mat encoder_forward(const EncoderParams& params, const SpMat& a_hat, const Mat& features,
                    EncoderCache* cache) {
  if (a_hat.rows() != features.rows())
    throw UsageError("adjacency has " + std::to_string(a_hat.rows()) + " nodes but features have " +
                     std::to_string(features.rows()) + " rows");
  if (features.cols() != params.in_dim())
    throw UsageError("encoder expects " + std::to_string(params.in_dim()) + " input features, got " +
                     std::to_string(features.cols()));
  Mat ax = a_hat * features;
  Mat pre1 = ax * params.w1;
  pre1.rowwise() += params.b1;
  Mat h1 = relu(pre1);
  Mat ah1 = a_hat * h1;
  Mat out = ah1 * params.w2;
  out.rowwise() += params.b2;
  if (cache) {
    cache->a_hat = a_hat;
    cache->ax = std::move(ax);
    cache->pre1 = std::move(pre1);
    cache->h1 = std::move(h1);
    cache->ah1 = std::move(ah1);
  }
  return out;
}

Mat encoder_forward(const EncoderParams& params, const CsrAdjacency& adjacency, const Mat& features) {
  return encoder_forward(params, normalized_adjacency(adjacency), features);
}

EncoderGrads encoder_backward(const EncoderParams& params, const EncoderCache& cache,
                              const Mat& upstream) {
  if (upstream.rows() != cache.ah1.rows() || upstream.cols() != params.out_dim())
    throw UsageError("upstream gradient shape does not match encoder output");
  EncoderGrads g;
  g.w2 = cache.ah1.transpose() * upstream;
  g.b2 = upstream.colwise().sum();
  // A_hat is symmetric, so its transpose is itself.
  Mat dh1 = cache.a_hat * (upstream * params.w2.transpose());
  Mat dpre1 = dh1.cwiseProduct((cache.pre1.array() > 0.0).cast<double>().matrix());
  g.w1 = cache.ax.transpose() * dpre1;
  g.b1 = dpre1.colwise().sum();
  g.x = cache.a_hat * (dpre1 * params.w1.transpose());
  return g;
}

void adam_update(Adam& opt, std::size_t first_slot, EncoderParams& params, const EncoderGrads& grads) {
  opt.update(first_slot, params.w1, grads.w1);
  opt.update(first_slot + 1, params.b1, grads.b1);
  opt.update(first_slot + 2, params.w2, grads.w2);
  opt.update(first_slot + 3, params.b2, grads.b2);
}

namespace {

double accuracy_on(const Mat& logits, const std::vector<NodeId>& nodes, const TextGraph& graph) {
  if (nodes.empty()) return 0.0;
  std::size_t hit = 0;
  for (NodeId v : nodes) {
    Eigen::Index best = 0;
    logits.row(v).maxCoeff(&best);
    hit += static_cast<int>(best) == *graph.labels()[v];
  }
  return static_cast<double>(hit) / static_cast<double>(nodes.size());
}

}  // namespace

SupervisedResult train_supervised(const TextGraph& graph, const Mat& features,
                                  const EncoderParams& init, const SupervisedConfig& config) {
  if (!graph.has_labels()) throw ValidationError("supervised training needs labels");
  const auto& train = graph.splits().train;
  if (train.empty()) throw ValidationError("supervised training needs a non-empty train split");
  for (const auto* split : {&graph.splits().train, &graph.splits().val, &graph.splits().test})
    for (NodeId v : *split)
      if (!graph.labels()[v]) throw ValidationError("split node " + std::to_string(v) + " is unlabeled");
  init.validate(features.cols());

  const int classes = graph.num_classes();
  std::mt19937_64 rng(config.seed);
  SupervisedResult r;
  r.params = init;
  r.head_w = glorot(init.out_dim(), classes, rng);
  r.head_b = RowVec::Zero(classes);

  const SpMat a_hat = normalized_adjacency(graph.adjacency());
  std::vector<int> targets;
  for (NodeId v : train) targets.push_back(*graph.labels()[v]);
  Adam opt({.lr = config.lr, .weight_decay = config.weight_decay});

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    EncoderCache cache;
    const Mat h = encoder_forward(r.params, a_hat, features, &cache);
    Mat h_train(static_cast<Eigen::Index>(train.size()), h.cols());
    for (std::size_t i = 0; i < train.size(); ++i) h_train.row(static_cast<Eigen::Index>(i)) = h.row(train[i]);
    Mat logits = h_train * r.head_w;
    logits.rowwise() += r.head_b;
    Mat dlogits;
    const double loss = softmax_cross_entropy(logits, targets, &dlogits);
    if (!std::isfinite(loss)) throw NumericError("supervised loss became non-finite at epoch " + std::to_string(epoch));
    r.loss_trace.push_back(loss);

    const Mat dhead_w = h_train.transpose() * dlogits;
    const RowVec dhead_b = dlogits.colwise().sum();
    const Mat dh_train = dlogits * r.head_w.transpose();
    Mat dh = Mat::Zero(h.rows(), h.cols());
    for (std::size_t i = 0; i < train.size(); ++i) dh.row(train[i]) += dh_train.row(static_cast<Eigen::Index>(i));
    const auto grads = encoder_backward(r.params, cache, dh);

    opt.next_step();
    adam_update(opt, 0, r.params, grads);
    opt.update(4, r.head_w, dhead_w);
    opt.update(5, r.head_b, dhead_b);
  }

  Mat logits = encoder_forward(r.params, a_hat, features) * r.head_w;
  logits.rowwise() += r.head_b;
  r.val_accuracy = accuracy_on(logits, graph.splits().val, graph);
  r.test_accuracy = accuracy_on(logits, graph.splits().test, graph);
  return r;
}

}  // namespace gaug
