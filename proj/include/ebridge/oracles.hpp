#pragma once

#include "ebridge/linalg.hpp"
#include "ebridge/noise.hpp"
#include "ebridge/propagator_cache.hpp"
#include "ebridge/simulator.hpp"

#include <cstdint>
#include <vector>

namespace ebridge {

/// u_i = sum_{j <= i} F[i][j] dW_j + G[i] xf on a k-step grid.
struct DiscreteFeedforwardLaw {
  std::size_t k = 0;
  double a = 0.0;
  std::vector<std::vector<Matrix>> F;  // F[i] has i + 1 blocks (m x m)
  std::vector<Matrix> G;               // m x d
  double condition = 1.0;              // normal-matrix condition number (brute force only)

  /// Number of free coefficients: m^2 k(k+1)/2 + m d k.
  std::size_t parameter_count() const;
};

/// The free-endpoint LQ law with Phi_i = Phi(tf, t_i) and
/// W_j = sum_{alpha >= j} Phi_alpha Phi_alpha^T dt:
///   F[i][j] = -sqrt(eps) Phi_i^T (W_j + I / 2a)^{-1} Phi_j,
///   G[i]    = Phi_i^T (W_0 + I / 2a)^{-1}.
DiscreteFeedforwardLaw discrete_closed_form(const PropagatorCache& cache, double a);

/// Minimizer of E[a |x_k - xf|^2 + 1/2 sum |u_i|^2 dt] over the causal blocks,
/// from the normal equations of the deterministic quadratic form obtained with
/// E[dW_j dW_l^T] = delta_jl dt I. xf runs over the standard basis so every G
/// column is identified.
DiscreteFeedforwardLaw discrete_brute_force(const PropagatorCache& cache, double a);

/// Exact expected cost of a law for a given xf.
double discrete_objective(const PropagatorCache& cache, const DiscreteFeedforwardLaw& law,
                          const Vector& xf);

/// Expected squared terminal miss E|x_k - xf|^2 under the law.
double discrete_terminal_miss(const PropagatorCache& cache, const DiscreteFeedforwardLaw& law,
                              const Vector& xf);

double max_block_deviation(const DiscreteFeedforwardLaw& x, const DiscreteFeedforwardLaw& y);

/// Closed-loop simulation of the Markov pinned law for a constant pair (A, B).
Trajectory markov_bridge_oracle(const Matrix& a, const Matrix& b, double epsilon,
                                const Vector& x0, const Vector& xf, std::uint64_t seed,
                                const TimeGrid& grid);

/// x(t_n) = (1 - t_n/tf) x0 + (t_n/tf) xf + sqrt(eps) sum_{i<n} (tf - t_n)/(tf - t_i) dW_i.
std::vector<Vector> brownian_bridge_path(const Vector& x0, const Vector& xf, double epsilon,
                                         const NoiseHistory& hist);

}  // namespace ebridge
