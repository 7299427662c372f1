#pragma once

#include "ebridge/ensemble.hpp"
#include "ebridge/exec.hpp"
#include "ebridge/linalg.hpp"

#include <cstddef>
#include <utility>
#include <vector>

namespace ebridge {

/// Tabulated propagators of an ensemble on a TimeGrid. Built once, then
/// read-only; safe to share between Monte Carlo workers.
///
/// Two Gramian tails are kept:
///  - `gramian(i)`: G_{tf,t_i} = int_{t_i}^{tf} Phi Phi^T dtau by 8-point
///    Gauss-Legendre per grid cell (reporting and cross-checks).
///  - `step_gramian(i)`: sum_{l >= i} Phibar_l Phibar_l^T dt, where Phibar_l is
///    the exact zero-order-hold input map of cell l. This is the covariance
///    the simulator actually realizes, so kernels and controllers use it; it
///    differs from `gramian(i)` by O(dt^2).
class PropagatorCache {
 public:
  PropagatorCache(const EnsembleSystem& ens, const TimeGrid& grid, Exec exec = Exec::parallel);

  const TimeGrid& grid() const { return grid_; }
  std::size_t steps() const { return grid_.steps(); }
  std::size_t state_dim() const { return d_; }
  std::size_t input_dim() const { return m_; }
  double epsilon() const { return epsilon_; }

  /// M(t_i) = sum_j w_j exp(A_j t_i), i = 0..k.
  const Matrix& state_map(std::size_t i) const { return state_map_[i]; }
  const Matrix& terminal_state_map() const { return state_map_.back(); }

  /// Phi(tf, t_i), i = 0..k.
  const Matrix& input_map(std::size_t i) const { return input_map_[i]; }
  /// Cell average (1/dt) int_{t_i}^{t_{i+1}} Phi(tf, tau) dtau, i = 0..k-1.
  const Matrix& step_input_map(std::size_t i) const { return step_input_map_[i]; }

  const Matrix& gramian(std::size_t i) const { return gramian_[i]; }
  const Matrix& step_gramian(std::size_t i) const { return step_gramian_[i]; }

  /// Inverse of step_gramian(i) for i < k (pseudo-inverse on the numerical
  /// range when the tail is rank deficient, which happens near tf when d > m).
  const Matrix& step_gramian_inverse(std::size_t i) const { return step_gramian_inv_[i]; }
  /// log det step_gramian(i); -inf when rank deficient.
  double step_gramian_logdet(std::size_t i) const { return step_gramian_logdet_[i]; }
  bool step_gramian_regular(std::size_t i) const { return step_gramian_regular_[i] != 0; }
  /// step_gramian_inverse(i) * step_input_map(i).
  const Matrix& feedforward_gain(std::size_t i) const { return gain_[i]; }

  double min_eig_gramian0() const { return min_eig_gramian0_; }
  double min_eig_step_gramian0() const { return min_eig_step_gramian0_; }

  /// Per theta-node one-step propagators: X <- E_j X + Gamma_j v with
  /// E_j = exp(A_j dt), Gamma_j = int_0^dt exp(A_j s) ds B_j.
  std::size_t node_count() const { return node_weights_.size(); }
  double node_weight(std::size_t j) const { return node_weights_[j]; }
  const Matrix& node_transition(std::size_t j) const { return node_transition_[j]; }
  const Matrix& node_input(std::size_t j) const { return node_input_[j]; }

 private:
  TimeGrid grid_;
  std::size_t d_;
  std::size_t m_;
  double epsilon_;
  std::vector<Matrix> state_map_;
  std::vector<Matrix> input_map_;
  std::vector<Matrix> step_input_map_;
  std::vector<Matrix> gramian_;
  std::vector<Matrix> step_gramian_;
  std::vector<Matrix> step_gramian_inv_;
  std::vector<double> step_gramian_logdet_;
  std::vector<char> step_gramian_regular_;
  std::vector<Matrix> gain_;
  double min_eig_gramian0_ = 0.0;
  double min_eig_step_gramian0_ = 0.0;
  std::vector<double> node_weights_;
  std::vector<Matrix> node_transition_;
  std::vector<Matrix> node_input_;
};

/// [[A, B], [0, 0]] exponential split into (exp(A t), int_0^t exp(A s) ds B).
std::pair<Matrix, Matrix> zero_order_hold(const Matrix& a, const Matrix& b, double t);

}  // namespace ebridge
