#pragma once

#include "ebridge/linalg.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace ebridge {

/// Uniform grid t_i = i * dt on [0, tf] with k steps.
class TimeGrid {
 public:
  TimeGrid(double tf, std::size_t k);

  double tf() const { return tf_; }
  std::size_t steps() const { return k_; }
  double dt() const { return dt_; }
  double time(std::size_t i) const { return static_cast<double>(i) * dt_; }

  bool operator==(const TimeGrid& other) const = default;

 private:
  double tf_;
  std::size_t k_;
  double dt_;
};

/// A family of linear systems (A(theta), B(theta)) sampled on a quadrature
/// over theta in [0, 1]. All members share the control u(t) and the noise W(t).
class EnsembleSystem {
 public:
  EnsembleSystem(std::string name, std::vector<double> theta_nodes,
                 std::vector<double> theta_weights, std::vector<Matrix> a,
                 std::vector<Matrix> b, double epsilon, double tf);

  const std::string& name() const { return name_; }
  std::size_t state_dim() const { return d_; }
  std::size_t input_dim() const { return m_; }
  std::size_t node_count() const { return nodes_.size(); }
  double node(std::size_t j) const { return nodes_[j]; }
  double weight(std::size_t j) const { return weights_[j]; }
  const Matrix& a(std::size_t j) const { return a_[j]; }
  const Matrix& b(std::size_t j) const { return b_[j]; }
  double epsilon() const { return epsilon_; }
  double tf() const { return tf_; }

  /// Same family with a different noise intensity (epsilon >= 0).
  EnsembleSystem with_epsilon(double epsilon) const;

 private:
  std::string name_;
  std::vector<double> nodes_;
  std::vector<double> weights_;
  std::vector<Matrix> a_;
  std::vector<Matrix> b_;
  std::size_t d_ = 0;
  std::size_t m_ = 0;
  double epsilon_;
  double tf_;
};

inline constexpr std::size_t kDefaultThetaNodes = 64;

/// A(theta) = -theta, B = 1.
EnsembleSystem scalar_decay(double epsilon, double tf = 1.0,
                            std::size_t nodes = kDefaultThetaNodes);
/// A(theta) = [[0, -theta], [theta, 0]], B = I_2.
EnsembleSystem planar_rotation(double epsilon, double tf = 1.0,
                               std::size_t nodes = kDefaultThetaNodes);
/// theta-independent (A, B) on a single node.
EnsembleSystem constant_family(const Matrix& a, const Matrix& b, double epsilon,
                               double tf = 1.0);
/// A(theta) = a0 + theta * a1, B(theta) = b0 + theta * b1.
EnsembleSystem affine_family(std::string name, const Matrix& a0, const Matrix& a1,
                             const Matrix& b0, const Matrix& b1, double epsilon,
                             double tf = 1.0, std::size_t nodes = kDefaultThetaNodes);

/// sum_j w_j exp(A(theta_j) t) for 0 <= t <= tf.
Matrix averaged_state_map(const EnsembleSystem& ens, double t);

/// Phi(t, tau) = sum_j w_j exp(A(theta_j) (t - tau)) B(theta_j), 0 <= tau <= t <= tf.
Matrix averaged_input_map(const EnsembleSystem& ens, double t, double tau);

/// G_{t,s} = int_s^t Phi(t, tau) Phi(t, tau)^T dtau by composite Gauss-Legendre
/// (`points` per panel). Throws NotControllable when the smallest eigenvalue
/// falls to 1e-10 * trace / d or below.
Matrix gramian(const EnsembleSystem& ens, double t, double s, std::size_t panels,
               std::size_t points = 8);

/// Scale-relative singularity threshold for a Gramian.
double controllability_tolerance(const Matrix& g);

/// log N(x; mean, cov). Throws NotSpd when the Cholesky factorization fails.
double gaussian_logpdf(const Vector& mean, const Matrix& cov, const Vector& x);

}  // namespace ebridge
