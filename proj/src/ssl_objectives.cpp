#include "gaug/ssl_objectives.hpp"

#include <cmath>
#include <sstream>

namespace gaug {

std::string_view method_name(SslMethod m) {
  switch (m) {
    case SslMethod::kGraphCl: return "graphcl";
    case SslMethod::kGbt: return "gbt";
    case SslMethod::kBgrl: return "bgrl";
  }
  return "?";
}

std::optional<SslMethod> parse_method(std::string_view name) {
  for (auto m : {SslMethod::kGraphCl, SslMethod::kGbt, SslMethod::kBgrl})
    if (method_name(m) == name) return m;
  return std::nullopt;
}

namespace {

constexpr double kNormFloor = 1e-12;

void check_pair(const Mat& z1, const Mat& z2, const char* what) {
  if (z1.rows() != z2.rows() || z1.cols() != z2.cols())
    throw UsageError(std::string(what) + ": view shapes differ");
  if (z1.rows() < 2) throw UsageError(std::string(what) + " needs at least 2 nodes");
}

Mat normalize_rows(const Mat& z, Vec& norms) {
  norms = z.rowwise().norm().cwiseMax(kNormFloor);
  Mat u = z;
  for (Eigen::Index i = 0; i < z.rows(); ++i) u.row(i) /= norms(i);
  return u;
}

Mat normalize_rows_backward(const Mat& u, const Vec& norms, const Mat& du) {
  Mat dz(u.rows(), u.cols());
  for (Eigen::Index i = 0; i < u.rows(); ++i)
    dz.row(i) = (du.row(i) - u.row(i) * u.row(i).dot(du.row(i))) / norms(i);
  return dz;
}

// For each anchor row i: logits are cross(i, :) and intra(i, k != i); the
// positive is cross(i, i). Fills softmax weights and returns the summed loss.
double nt_xent_side(const Mat& cross, const Mat& intra, Mat& p_cross, Mat& p_intra) {
  const auto n = cross.rows();
  p_cross.resize(n, n);
  p_intra.resize(n, n);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double mx = cross.row(i).maxCoeff();
    for (Eigen::Index k = 0; k < n; ++k)
      if (k != i) mx = std::max(mx, intra(i, k));
    double z = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      p_cross(i, k) = std::exp(cross(i, k) - mx);
      p_intra(i, k) = k == i ? 0.0 : std::exp(intra(i, k) - mx);
      z += p_cross(i, k) + p_intra(i, k);
    }
    p_cross.row(i) /= z;
    p_intra.row(i) /= z;
    total += std::log(z) + mx - cross(i, i);
  }
  return total;
}

struct Standardized {
  Mat y;
  RowVec centered_std;  // population std
  Mat centered;
};

Standardized standardize(const Mat& z) {
  Standardized s;
  const double n = static_cast<double>(z.rows());
  s.centered = z.rowwise() - z.colwise().mean();
  s.centered_std = (s.centered.array().square().colwise().sum() / n).sqrt().matrix();
  s.y = s.centered;
  for (Eigen::Index j = 0; j < z.cols(); ++j) s.y.col(j) /= s.centered_std(j) + 1e-9;
  return s;
}

Mat standardize_backward(const Standardized& s, const Mat& dy) {
  const double n = static_cast<double>(dy.rows());
  Mat dx(dy.rows(), dy.cols());
  for (Eigen::Index j = 0; j < dy.cols(); ++j) {
    const double sigma = s.centered_std(j);
    const double denom = sigma + 1e-9;
    const auto c = s.centered.col(j);
    const auto g = dy.col(j);
    dx.col(j) = (g.array() - g.mean()).matrix() / denom;
    if (sigma > 0.0) dx.col(j) -= c * (g.dot(c) / (denom * denom * n * sigma));
  }
  return dx;
}

}  // namespace

LossGrad info_nce_loss(const Mat& z1, const Mat& z2, double tau) {
  check_pair(z1, z2, "InfoNCE");
  if (!(tau > 0.0)) throw UsageError("InfoNCE temperature must be > 0");
  const auto n = z1.rows();
  Vec n1, n2;
  const Mat u = normalize_rows(z1, n1);
  const Mat v = normalize_rows(z2, n2);
  const Mat s_uv = u * v.transpose() / tau;
  const Mat s_uu = u * u.transpose() / tau;
  const Mat s_vv = v * v.transpose() / tau;

  Mat p_uv, p_uu, q_vu, q_vv;
  const double l1 = nt_xent_side(s_uv, s_uu, p_uv, p_uu);
  const double l2 = nt_xent_side(s_uv.transpose(), s_vv, q_vu, q_vv);
  const double scale = 1.0 / (2.0 * static_cast<double>(n));

  LossGrad r;
  r.loss = (l1 + l2) * scale;
  const Mat eye = Mat::Identity(n, n);
  const Mat g_uv = (p_uv - eye + (q_vu - eye).transpose()) * scale;
  const Mat g_uu = p_uu * scale;
  const Mat g_vv = q_vv * scale;
  const Mat du = (g_uv * v + (g_uu + g_uu.transpose()) * u) / tau;
  const Mat dv = (g_uv.transpose() * u + (g_vv + g_vv.transpose()) * v) / tau;
  r.g1 = normalize_rows_backward(u, n1, du);
  r.g2 = normalize_rows_backward(v, n2, dv);
  return r;
}

LossGrad barlow_twins_loss(const Mat& z1, const Mat& z2, double lambda) {
  check_pair(z1, z2, "Barlow Twins");
  const double n = static_cast<double>(z1.rows());
  const auto s1 = standardize(z1);
  const auto s2 = standardize(z2);
  const Mat c = s1.y.transpose() * s2.y / n;
  Mat g(c.rows(), c.cols());
  LossGrad r;
  for (Eigen::Index i = 0; i < c.rows(); ++i)
    for (Eigen::Index j = 0; j < c.cols(); ++j) {
      if (i == j) {
        r.loss += (1.0 - c(i, i)) * (1.0 - c(i, i));
        g(i, j) = -2.0 * (1.0 - c(i, i));
      } else {
        r.loss += lambda * c(i, j) * c(i, j);
        g(i, j) = 2.0 * lambda * c(i, j);
      }
    }
  r.g1 = standardize_backward(s1, s2.y * g.transpose() / n);
  r.g2 = standardize_backward(s2, s1.y * g / n);
  return r;
}

LossGrad cosine_bootstrap_loss(const Mat& pred, const Mat& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw UsageError("bootstrap loss: prediction and target shapes differ");
  if (pred.rows() == 0) throw UsageError("bootstrap loss over zero rows");
  const double n = static_cast<double>(pred.rows());
  Vec np, nt;
  const Mat p = normalize_rows(pred, np);
  const Mat t = normalize_rows(target, nt);
  const Vec cos = (p.array() * t.array()).rowwise().sum().matrix();
  LossGrad r;
  r.loss = 2.0 - 2.0 * cos.mean();
  r.g1 = normalize_rows_backward(p, np, t * (-2.0 / n));
  return r;
}

void ema_update(EncoderParams& target, const EncoderParams& online, double decay) {
  if (!(decay >= 0.0 && decay <= 1.0)) throw UsageError("ema decay must lie in [0,1]");
  target.w1 = decay * target.w1 + (1.0 - decay) * online.w1;
  target.b1 = decay * target.b1 + (1.0 - decay) * online.b1;
  target.w2 = decay * target.w2 + (1.0 - decay) * online.w2;
  target.b2 = decay * target.b2 + (1.0 - decay) * online.b2;
}

SslModel SslModel::init(SslMethod method, Eigen::Index in_dim, Eigen::Index hidden,
                        Eigen::Index out_dim, std::uint64_t seed) {
  SslModel m;
  m.method = method;
  m.online = EncoderParams::init(in_dim, hidden, out_dim, derive_seed(seed, 1));
  std::mt19937_64 rng(derive_seed(seed, 2));
  const auto head_hidden = method == SslMethod::kBgrl ? out_dim : 2 * out_dim;
  m.head = Mlp::init(out_dim, head_hidden, out_dim, rng);
  if (method == SslMethod::kBgrl) m.target = m.online;
  return m;
}

NamedTensors SslModel::to_tensors() const {
  auto t = online.to_tensors("encoder.");
  const std::string h = method == SslMethod::kBgrl ? "predictor." : "projector.";
  t.emplace_back(h + "w1", head.w1);
  t.emplace_back(h + "b1", Mat(head.b1));
  t.emplace_back(h + "w2", head.w2);
  t.emplace_back(h + "b2", Mat(head.b2));
  if (method == SslMethod::kBgrl)
    for (auto& e : target.to_tensors("target.")) t.push_back(std::move(e));
  return t;
}

namespace {

struct Forward {
  EncoderCache enc1, enc2;
  MlpCache head1, head2;
  Mat out1, out2;  // head outputs
  Mat t1, t2;      // BGRL target embeddings
};

Forward run_forward(const SslModel& model, const View& view1, const View& view2) {
  Forward f;
  const Mat z1 = encoder_forward(model.online, *view1.a_hat, *view1.x, &f.enc1);
  const Mat z2 = encoder_forward(model.online, *view2.a_hat, *view2.x, &f.enc2);
  f.out1 = mlp_forward(model.head, z1, &f.head1);
  f.out2 = mlp_forward(model.head, z2, &f.head2);
  if (model.method == SslMethod::kBgrl) {
    f.t1 = encoder_forward(model.target, *view1.a_hat, *view1.x);
    f.t2 = encoder_forward(model.target, *view2.a_hat, *view2.x);
  }
  return f;
}

// Loss plus gradients w.r.t. the two head outputs.
LossGrad head_loss(const SslModel& model, const Forward& f, const StepConfig& config) {
  switch (model.method) {
    case SslMethod::kGraphCl: return info_nce_loss(f.out1, f.out2, config.info_nce_tau);
    case SslMethod::kGbt: return barlow_twins_loss(f.out1, f.out2, config.bt_lambda);
    case SslMethod::kBgrl: {
      auto a = cosine_bootstrap_loss(f.out1, f.t2);
      auto b = cosine_bootstrap_loss(f.out2, f.t1);
      return {0.5 * (a.loss + b.loss), 0.5 * a.g1, 0.5 * b.g1};
    }
  }
  throw UsageError("unknown method");
}

}  // namespace

double ssl_loss(const SslModel& model, const View& view1, const View& view2, const StepConfig& config) {
  return head_loss(model, run_forward(model, view1, view2), config).loss;
}

double ssl_step(SslModel& model, const View& view1, const View& view2, const StepConfig& config,
                Adam& opt) {
  const Forward f = run_forward(model, view1, view2);
  const LossGrad lg = head_loss(model, f, config);
  if (!std::isfinite(lg.loss)) return lg.loss;

  const auto h1 = mlp_backward(model.head, f.head1, lg.g1);
  const auto h2 = mlp_backward(model.head, f.head2, lg.g2);
  auto e1 = encoder_backward(model.online, f.enc1, h1.x);
  const auto e2 = encoder_backward(model.online, f.enc2, h2.x);
  e1.w1 += e2.w1;
  e1.b1 += e2.b1;
  e1.w2 += e2.w2;
  e1.b2 += e2.b2;

  opt.next_step();
  adam_update(opt, 0, model.online, e1);
  opt.update(4, model.head.w1, Mat(h1.w1 + h2.w1));
  opt.update(5, model.head.b1, RowVec(h1.b1 + h2.b1));
  opt.update(6, model.head.w2, Mat(h1.w2 + h2.w2));
  opt.update(7, model.head.b2, RowVec(h1.b2 + h2.b2));
  if (model.method == SslMethod::kBgrl) ema_update(model.target, model.online, config.ema_decay);
  return lg.loss;
}

void PretrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("pretrain.epochs must be >= 1");
  if (!(lr >= 0.0)) throw ValidationError("pretrain.lr must be >= 0");
  if (!(info_nce_tau > 0.0)) throw ValidationError("pretrain.info_nce_tau must be > 0");
  if (!(bt_lambda >= 0.0)) throw ValidationError("pretrain.bt_lambda must be >= 0");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw ValidationError("pretrain.ema_decay must lie in [0,1)");
  if (hidden < 1 || out_dim < 1) throw ValidationError("encoder dimensions must be >= 1");
}

PretrainResult pretrain(const CsrAdjacency& adjacency, const Mat& x1, const Mat& x2,
                        const AdjacencySampler& sampler, const PretrainConfig& config) {
  config.validate();
  const auto n = static_cast<Eigen::Index>(adjacency.num_nodes());
  if (x1.rows() != n || x2.rows() != n) throw ValidationError("feature rows must equal the node count");
  if (x1.cols() != x2.cols())
    throw ValidationError("both views must have the same feature dimension (" + std::to_string(x1.cols()) +
                          " vs " + std::to_string(x2.cols()) + ")");

  PretrainResult r;
  r.model = SslModel::init(config.method, x1.cols(), config.hidden, config.out_dim, config.seed);
  Adam opt({.lr = config.lr, .weight_decay = config.weight_decay});
  const SpMat a1 = normalized_adjacency(adjacency);
  const View view1{&a1, &x1};

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto view2_adj = sampler(epoch, derive_seed(config.seed, 0x100000 + epoch));
    if (view2_adj.num_nodes() != adjacency.num_nodes())
      throw UsageError("sampled view has the wrong node count");
    const SpMat a2 = normalized_adjacency(view2_adj);
    const double loss = ssl_step(r.model, view1, View{&a2, &x2}, config.step(), opt);
    r.loss_trace.push_back(loss);
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << method_name(config.method) << " loss became non-finite at epoch " << epoch << "; trace:";
      for (double l : r.loss_trace) msg << ' ' << l;
      throw NumericError(msg.str());
    }
  }
  return r;
}

}  // namespace gaug
