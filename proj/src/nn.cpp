#include "gaug/nn.hpp"

#include <cmath>

namespace gaug {

Mat glorot(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Mat w(rows, cols);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
  return w;
}

Mat relu(const Mat& x) { return x.cwiseMax(0.0); }

Mlp Mlp::init(Eigen::Index in, Eigen::Index hidden, Eigen::Index out, std::mt19937_64& rng) {
  Mlp m;
  m.w1 = glorot(in, hidden, rng);
  m.b1 = RowVec::Zero(hidden);
  m.w2 = glorot(hidden, out, rng);
  m.b2 = RowVec::Zero(out);
  return m;
}

Mlp Mlp::identity(Eigen::Index dim) {
  // relu(x) - relu(-x) = x
  Mlp m;
  m.w1 = Mat::Zero(dim, 2 * dim);
  m.w1.leftCols(dim).setIdentity();
  m.w1.rightCols(dim) = -Mat::Identity(dim, dim);
  m.b1 = RowVec::Zero(2 * dim);
  m.w2 = Mat::Zero(2 * dim, dim);
  m.w2.topRows(dim).setIdentity();
  m.w2.bottomRows(dim) = -Mat::Identity(dim, dim);
  m.b2 = RowVec::Zero(dim);
  return m;
}

Mat mlp_forward(const Mlp& mlp, const Mat& x, MlpCache* cache) {
  if (x.cols() != mlp.w1.rows())
    throw UsageError("mlp input has " + std::to_string(x.cols()) + " columns, expected " +
                     std::to_string(mlp.w1.rows()));
  Mat pre = x * mlp.w1;
  pre.rowwise() += mlp.b1;
  Mat h = relu(pre);
  Mat out = h * mlp.w2;
  out.rowwise() += mlp.b2;
  if (cache) {
    cache->x = x;
    cache->pre = std::move(pre);
    cache->h = std::move(h);
  }
  return out;
}

MlpGrads mlp_backward(const Mlp& mlp, const MlpCache& cache, const Mat& upstream) {
  MlpGrads g;
  g.w2 = cache.h.transpose() * upstream;
  g.b2 = upstream.colwise().sum();
  Mat dh = upstream * mlp.w2.transpose();
  Mat dpre = dh.cwiseProduct((cache.pre.array() > 0.0).cast<double>().matrix());
  g.w1 = cache.x.transpose() * dpre;
  g.b1 = dpre.colwise().sum();
  g.x = dpre * mlp.w1.transpose();
  return g;
}

void Adam::update(std::size_t slot, double* param, const double* grad, std::size_t size) {
  if (t_ == 0) throw UsageError("Adam::next_step must precede update");
  if (slot >= m_.size()) {
    m_.resize(slot + 1);
    v_.resize(slot + 1);
  }
  auto& m = m_[slot];
  auto& v = v_[slot];
  if (m.empty()) {
    m.assign(size, 0.0);
    v.assign(size, 0.0);
  } else if (m.size() != size) {
    throw UsageError("Adam slot " + std::to_string(slot) + " changed size");
  }
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < size; ++i) {
    const double g = grad[i] + config_.weight_decay * param[i];
    m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
    v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
    param[i] -= config_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
  }
}

double softmax_cross_entropy(const Mat& logits, const std::vector<int>& targets, Mat* grad) {
  const auto n = logits.rows();
  if (static_cast<std::size_t>(n) != targets.size()) throw UsageError("target count mismatch");
  if (n == 0) throw UsageError("cross-entropy over zero rows");
  double loss = 0.0;
  if (grad) grad->resize(n, logits.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = targets[static_cast<std::size_t>(i)];
    if (y < 0 || y >= logits.cols()) throw UsageError("target class out of range");
    const double mx = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp().matrix();
    const double z = e.sum();
    loss += std::log(z) - (logits(i, y) - mx);
    if (grad) {
      grad->row(i) = e / z;
      (*grad)(i, y) -= 1.0;
    }
  }
  if (grad) *grad /= static_cast<double>(n);
  return loss / static_cast<double>(n);
}

std::vector<int> argmax_rows(const Mat& x) {
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::Index best = 0;
    x.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

}  // namespace gaug
