#pragma once

#include "ebridge/ensemble.hpp"
#include "ebridge/linalg.hpp"
#include "ebridge/marginals.hpp"
#include "ebridge/noise.hpp"
#include "ebridge/propagator_cache.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace ebridge {

/// Running quantities of the feedforward law after `step_index` increments.
///   S   = sum_{l<i} Gbar_l^{-1} Phibar_l dW_l            (left-point Ito sum)
///   mu  = M(tf) x0 + sum_{l<i} Phibar_l (u_l dt + sqrt(eps) dW_l)
///   nu  = M(tf) x0 + sqrt(eps) sum_{l<i} Phibar_l dW_l  (noise-only history)
/// mu is the mean of x(tf) given the past when no further input is applied.
struct FeedforwardState {
  Vector x0;
  Vector S;
  Vector mu;
  Vector nu;
  std::size_t step_index = 0;
  /// Gbar_0^{-1} (xf - M(tf) x0) for a pinned target.
  std::optional<Vector> target_term;

  static FeedforwardState start(const PropagatorCache& cache, const Vector& x0,
                                const std::optional<Vector>& xf = std::nullopt);
  /// Consume increment dW_i with applied input u_i.
  void advance(const PropagatorCache& cache, const Vector& dw, const Vector& u);
};

/// u_i = Phibar_i^T [ -sqrt(eps) S_i + Gbar_0^{-1} (xf - M(tf) x0) ].
/// `noise_sign` = -1 flips the stochastic term (mutation checks only).
Vector pinned_control(const FeedforwardState& ff, const PropagatorCache& cache,
                      double noise_sign = 1.0);

/// Gaussian density of y with mean M(tf) x0 + sum_{l<i} Phibar_l (u_l dt +
/// sqrt(eps) dW_l) and covariance eps Gbar_i. With `inputs` empty the sum runs
/// over the noise alone.
double conditional_log_kernel(const PropagatorCache& cache, const Vector& x0,
                              const NoiseHistory& hist, std::span<const Vector> inputs,
                              std::size_t i, const Vector& y);
double conditional_kernel(const PropagatorCache& cache, const Vector& x0,
                          const NoiseHistory& hist, std::span<const Vector> inputs,
                          std::size_t i, const Vector& y);

struct PosteriorWeights {
  std::vector<double> weights;
  Vector mean;
};

/// Target points of a grid as columns of a d x n matrix.
Matrix grid_points(const GridDensity& g);

/// w_j proportional to phif(y_j) N(y_j; mean, eps Gbar_i), normalized.
PosteriorWeights posterior_weights(const PropagatorCache& cache, const Vector& mean,
                                   std::size_t i, const Vector& log_phif, const Matrix& points);

struct BridgeControl {
  Vector quadrature;  // sum_j w_j u(t_i | x0, y_j)
  Vector affine;      // u(t_i | x0, posterior mean)
  PosteriorWeights posterior;
};

/// Posterior average of the pinned law u(t_i | x0, y) = Phibar_i^T Gbar_i^{-1}
/// (y - mu_i) with the posterior centred at mu_i.
BridgeControl bridge_control(const FeedforwardState& ff, const PropagatorCache& cache,
                             const Vector& log_phif, const Matrix& points);

/// Van Loan: G_{tf,t} = int_t^tf e^{A(tf - s)} B B^T e^{A^T(tf - s)} ds for a
/// constant pair, with s = tf - t given as `horizon`.
Matrix constant_gramian(const Matrix& a, const Matrix& b, double horizon);

/// P(t) = e^{A(t - tf)} G_{tf,t} e^{A^T(t - tf)}.
Matrix lyapunov_matrix(const Matrix& a, const Matrix& b, double t, double tf);
/// RK4 integration of dP/dt = AP + PA^T - BB^T backward from P(tf) = 0.
Matrix lyapunov_rk4(const Matrix& a, const Matrix& b, double t, double tf, std::size_t steps);

/// -eps B^T grad log phi(t, x) for a constant pair, phi(t, x) = sum_j q(t, x,
/// tf, y_j) phif(y_j) over the target points.
Vector markov_feedback_control(const Matrix& a, const Matrix& b, double epsilon,
                               const Vector& log_phif, const Matrix& points, double t,
                               double tf, const Vector& x);

/// Strategy driven by the simulator. control() is called before increment i is
/// revealed; observe() afterwards. Nothing else reaches the controller, so a
/// controller cannot anticipate the noise.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual void reset(const Vector& x0) = 0;
  virtual Vector control(std::size_t i, const Vector& x_avg) = 0;
  virtual void observe(std::size_t i, const Vector& dw, const Vector& u) = 0;
};

class ZeroController final : public Controller {
 public:
  explicit ZeroController(std::size_t m) : m_(m) {}
  void reset(const Vector&) override {}
  Vector control(std::size_t, const Vector&) override {
    return Vector::Zero(static_cast<Eigen::Index>(m_));
  }
  void observe(std::size_t, const Vector&, const Vector&) override {}

 private:
  std::size_t m_;
};

class SequenceController final : public Controller {
 public:
  explicit SequenceController(std::vector<Vector> inputs) : inputs_(std::move(inputs)) {}
  void reset(const Vector&) override {}
  Vector control(std::size_t i, const Vector&) override { return inputs_.at(i); }
  void observe(std::size_t, const Vector&, const Vector&) override {}

 private:
  std::vector<Vector> inputs_;
};

class PinnedController final : public Controller {
 public:
  PinnedController(const PropagatorCache& cache, Vector xf, double noise_sign = 1.0)
      : cache_(cache), xf_(std::move(xf)), sign_(noise_sign) {}
  void reset(const Vector& x0) override { ff_ = FeedforwardState::start(cache_, x0, xf_); }
  Vector control(std::size_t i, const Vector& x_avg) override;
  void observe(std::size_t i, const Vector& dw, const Vector& u) override;
  const FeedforwardState& state() const { return ff_; }

 private:
  const PropagatorCache& cache_;
  Vector xf_;
  double sign_;
  FeedforwardState ff_;
};

class BridgeController final : public Controller {
 public:
  BridgeController(const PropagatorCache& cache, const SchrodingerPotentials& pot,
                   const GridDensity& target);
  void reset(const Vector& x0) override { ff_ = FeedforwardState::start(cache_, x0); }
  Vector control(std::size_t i, const Vector& x_avg) override;
  void observe(std::size_t i, const Vector& dw, const Vector& u) override;

  /// Largest |quadrature - affine| / max(1, |u|) seen since construction.
  double max_form_gap() const { return max_gap_; }
  double max_weight_sum_error() const { return max_weight_err_; }

 private:
  const PropagatorCache& cache_;
  Vector log_phif_;
  Matrix points_;
  FeedforwardState ff_;
  double max_gap_ = 0.0;
  double max_weight_err_ = 0.0;
};

/// Closed-loop Markov law for a constant pair, fed the current state.
class MarkovFeedbackController final : public Controller {
 public:
  MarkovFeedbackController(Matrix a, Matrix b, double epsilon, TimeGrid grid, Vector log_phif,
                           Matrix points);
  void reset(const Vector&) override {}
  Vector control(std::size_t i, const Vector& x_avg) override;
  void observe(std::size_t, const Vector&, const Vector&) override {}

 private:
  Matrix a_;
  Matrix b_;
  double epsilon_;
  TimeGrid grid_;
  Vector log_phif_;
  Matrix points_;
};

}  // namespace ebridge
