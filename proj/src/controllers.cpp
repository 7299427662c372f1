#include "ebridge/controllers.hpp"

#include "ebridge/error.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace ebridge {

FeedforwardState FeedforwardState::start(const PropagatorCache& cache, const Vector& x0,
                                         const std::optional<Vector>& xf) {
  const auto d = static_cast<Eigen::Index>(cache.state_dim());
  if (x0.size() != d) throw ConfigError("x0 has the wrong dimension");
  FeedforwardState ff;
  ff.x0 = x0;
  ff.S = Vector::Zero(d);
  ff.mu = cache.terminal_state_map() * x0;
  ff.nu = ff.mu;
  if (xf) {
    if (xf->size() != d) throw ConfigError("xf has the wrong dimension");
    const Eigen::LLT<Matrix> llt(cache.step_gramian(0));
    ff.target_term = llt.solve(*xf - ff.mu);
  }
  return ff;
}

void FeedforwardState::advance(const PropagatorCache& cache, const Vector& dw, const Vector& u) {
  const std::size_t i = step_index;
  if (i >= cache.steps()) throw RangeError("feedforward state advanced past the horizon");
  const double se = std::sqrt(cache.epsilon());
  const Matrix& p = cache.step_input_map(i);
  S += cache.feedforward_gain(i) * dw;
  mu += p * (u * cache.grid().dt() + se * dw);
  nu += se * (p * dw);
  ++step_index;
}

Vector pinned_control(const FeedforwardState& ff, const PropagatorCache& cache, double noise_sign) {
  if (ff.step_index >= cache.steps()) throw RangeError("Gramian tail singular at horizon");
  if (!ff.target_term) throw ConfigError("pinned control needs a terminal state");
  const double se = std::sqrt(cache.epsilon());
  return cache.step_input_map(ff.step_index).transpose() *
         (*ff.target_term - noise_sign * se * ff.S);
}

namespace {

// Quadratic forms r_j^T H r_j for the columns of r.
Eigen::ArrayXd column_forms(const Matrix& h, const Matrix& r) {
  return ((h * r).array() * r.array()).colwise().sum().transpose();
}

}  // namespace

double conditional_log_kernel(const PropagatorCache& cache, const Vector& x0,
                              const NoiseHistory& hist, std::span<const Vector> inputs,
                              std::size_t i, const Vector& y) {
  if (i >= cache.steps()) throw RangeError("Gramian tail singular at horizon");
  if (!inputs.empty() && inputs.size() < i) throw ConfigError("fewer inputs than steps");
  const double se = std::sqrt(cache.epsilon());
  Vector mean = cache.terminal_state_map() * x0;
  for (std::size_t l = 0; l < i; ++l) {
    Vector v = se * hist.increment(l);
    if (!inputs.empty()) v += inputs[l] * cache.grid().dt();
    mean += cache.step_input_map(l) * v;
  }
  return gaussian_logpdf(mean, cache.epsilon() * cache.step_gramian(i), y);
}

double conditional_kernel(const PropagatorCache& cache, const Vector& x0,
                          const NoiseHistory& hist, std::span<const Vector> inputs,
                          std::size_t i, const Vector& y) {
  return std::exp(conditional_log_kernel(cache, x0, hist, inputs, i, y));
}

Matrix grid_points(const GridDensity& g) {
  Matrix pts(static_cast<Eigen::Index>(g.dim()), static_cast<Eigen::Index>(g.size()));
  for (std::size_t j = 0; j < g.size(); ++j) pts.col(static_cast<Eigen::Index>(j)) = g.point(j);
  return pts;
}

PosteriorWeights posterior_weights(const PropagatorCache& cache, const Vector& mean,
                                   std::size_t i, const Vector& log_phif, const Matrix& points) {
  if (i >= cache.steps()) throw RangeError("Gramian tail singular at horizon");
  if (log_phif.size() != points.cols()) throw ConfigError("potential does not match the grid");
  const Matrix r = points.colwise() - mean;
  Eigen::ArrayXd logw =
      log_phif.array() - (0.5 / cache.epsilon()) * column_forms(cache.step_gramian_inverse(i), r);
  const double top = logw.maxCoeff();
  if (!std::isfinite(top)) throw SupportError("posterior support error");
  Eigen::ArrayXd w = (logw - top).exp();
  w /= w.sum();
  PosteriorWeights out;
  out.weights.assign(w.data(), w.data() + w.size());
  out.mean = points * w.matrix();
  return out;
}

BridgeControl bridge_control(const FeedforwardState& ff, const PropagatorCache& cache,
                             const Vector& log_phif, const Matrix& points) {
  const std::size_t i = ff.step_index;
  if (i >= cache.steps()) throw RangeError("Gramian tail singular at horizon");
  const Matrix gain_t = cache.feedforward_gain(i).transpose();  // m x d
  BridgeControl out;
  if (points.rows() == 1) {
    // scalar state: one fused pass per quantity over the target points
    const double mu = ff.mu(0);
    const double c = 0.5 * cache.step_gramian_inverse(i)(0, 0) / cache.epsilon();
    const Eigen::ArrayXd r = points.row(0).transpose().array() - mu;
    const Eigen::ArrayXd logw = log_phif.array() - c * r.square();
    const double top = logw.maxCoeff();
    if (!std::isfinite(top)) throw SupportError("posterior support error");
    Eigen::ArrayXd w = (logw - top).exp();
    w /= w.sum();
    out.posterior.weights.assign(w.data(), w.data() + w.size());
    out.posterior.mean = Vector::Constant(1, (w * points.row(0).transpose().array()).sum());
    out.quadrature = gain_t.col(0) * (w * r).sum();
    out.affine = gain_t * (out.posterior.mean - ff.mu);
    return out;
  }
  out.posterior = posterior_weights(cache, ff.mu, i, log_phif, points);
  const Eigen::Map<const Vector> w(out.posterior.weights.data(),
                                   static_cast<Eigen::Index>(out.posterior.weights.size()));
  out.quadrature = (gain_t * (points.colwise() - ff.mu)) * w;
  out.affine = gain_t * (out.posterior.mean - ff.mu);
  return out;
}

Matrix constant_gramian(const Matrix& a, const Matrix& b, double horizon) {
  const Eigen::Index d = a.rows();
  Matrix c = Matrix::Zero(2 * d, 2 * d);
  c.topLeftCorner(d, d) = -a;
  c.topRightCorner(d, d) = b * b.transpose();
  c.bottomRightCorner(d, d) = a.transpose();
  const Matrix e = mat_exp(c, horizon);
  return symmetrize(e.bottomRightCorner(d, d).transpose() * e.topRightCorner(d, d));
}

Matrix lyapunov_matrix(const Matrix& a, const Matrix& b, double t, double tf) {
  if (t > tf) throw RangeError("lyapunov matrix needs t <= tf");
  const Matrix back = mat_exp(a, t - tf);
  return symmetrize(back * constant_gramian(a, b, tf - t) * back.transpose());
}

Matrix lyapunov_rk4(const Matrix& a, const Matrix& b, double t, double tf, std::size_t steps) {
  const Matrix q = b * b.transpose();
  const auto f = [&](const Matrix& p) -> Matrix { return a * p + p * a.transpose() - q; };
  Matrix p = Matrix::Zero(a.rows(), a.cols());
  const double h = -(tf - t) / static_cast<double>(steps);
  for (std::size_t s = 0; s < steps; ++s) {
    const Matrix k1 = f(p);
    const Matrix k2 = f(p + 0.5 * h * k1);
    const Matrix k3 = f(p + 0.5 * h * k2);
    const Matrix k4 = f(p + h * k3);
    p += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return p;
}

Vector markov_feedback_control(const Matrix& a, const Matrix& b, double epsilon,
                               const Vector& log_phif, const Matrix& points, double t,
                               double tf, const Vector& x) {
  if (!(t < tf)) throw RangeError("Gramian tail singular at horizon");
  if (!(epsilon > 0.0)) throw ConfigError("markov feedback needs epsilon > 0");
  const double s = tf - t;
  const Matrix e = mat_exp(a, s);
  const Eigen::LLT<Matrix> llt(constant_gramian(a, b, s));
  if (llt.info() != Eigen::Success) throw NotControllable("on [t, tf]");
  const Matrix h = llt.solve(Matrix::Identity(a.rows(), a.cols()));
  const Vector mean = e * x;
  const Matrix r = points.colwise() - mean;
  Eigen::ArrayXd logw = log_phif.array() - (0.5 / epsilon) * column_forms(h, r);
  const double top = logw.maxCoeff();
  if (!std::isfinite(top)) throw SupportError("posterior support error");
  Eigen::ArrayXd w = (logw - top).exp();
  w /= w.sum();
  const Vector ybar = points * w.matrix();
  // eps grad_x log phi = e^T G^{-1} (ybar - e x); the sign pulls toward the target
  return b.transpose() * (e.transpose() * (h * (ybar - mean)));
}

Vector PinnedController::control(std::size_t i, const Vector&) {
  if (i != ff_.step_index) throw ConfigError("pinned controller called out of order");
  return pinned_control(ff_, cache_, sign_);
}

void PinnedController::observe(std::size_t, const Vector& dw, const Vector& u) {
  ff_.advance(cache_, dw, u);
}

BridgeController::BridgeController(const PropagatorCache& cache,
                                   const SchrodingerPotentials& pot, const GridDensity& target)
    : cache_(cache) {
  if (static_cast<std::size_t>(pot.log_phif.size()) != target.size()) {
    throw ConfigError("potential does not match the target grid");
  }
  // Cells where phif vanishes carry exactly zero posterior weight.
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < target.size(); ++j) {
    if (std::isfinite(pot.log_phif(static_cast<Eigen::Index>(j)))) keep.push_back(j);
  }
  if (keep.empty()) throw SupportError("posterior support error");
  log_phif_.resize(static_cast<Eigen::Index>(keep.size()));
  points_.resize(static_cast<Eigen::Index>(target.dim()), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t n = 0; n < keep.size(); ++n) {
    const auto nn = static_cast<Eigen::Index>(n);
    log_phif_(nn) = pot.log_phif(static_cast<Eigen::Index>(keep[n]));
    points_.col(nn) = target.point(keep[n]);
  }
}

Vector BridgeController::control(std::size_t i, const Vector&) {
  if (i != ff_.step_index) throw ConfigError("bridge controller called out of order");
  const BridgeControl bc = bridge_control(ff_, cache_, log_phif_, points_);
  const double scale = std::max(1.0, bc.affine.cwiseAbs().maxCoeff());
  max_gap_ = std::max(max_gap_, (bc.quadrature - bc.affine).cwiseAbs().maxCoeff() / scale);
  double sum = 0.0;
  for (double w : bc.posterior.weights) sum += w;
  max_weight_err_ = std::max(max_weight_err_, std::abs(sum - 1.0));
  return bc.quadrature;
}

void BridgeController::observe(std::size_t, const Vector& dw, const Vector& u) {
  ff_.advance(cache_, dw, u);
}

MarkovFeedbackController::MarkovFeedbackController(Matrix a, Matrix b, double epsilon,
                                                   TimeGrid grid, Vector log_phif, Matrix points)
    : a_(std::move(a)),
      b_(std::move(b)),
      epsilon_(epsilon),
      grid_(grid),
      log_phif_(std::move(log_phif)),
      points_(std::move(points)) {}

Vector MarkovFeedbackController::control(std::size_t i, const Vector& x_avg) {
  return markov_feedback_control(a_, b_, epsilon_, log_phif_, points_, grid_.time(i), grid_.tf(),
                                 x_avg);
}

}  // namespace ebridge
