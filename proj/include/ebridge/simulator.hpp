#pragma once

#include "ebridge/controllers.hpp"
#include "ebridge/exec.hpp"
#include "ebridge/marginals.hpp"
#include "ebridge/noise.hpp"
#include "ebridge/propagator_cache.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace ebridge {

struct Trajectory {
  TimeGrid grid;
  std::vector<Vector> x_avg;                 // k + 1 states
  std::vector<std::vector<Vector>> x_theta;  // per step, per node (optional)
  std::vector<Vector> u;                     // k inputs
  std::vector<double> cost;                  // k + 1 running costs, cost[0] = 0
  std::optional<double> terminal_error;

  const Vector& terminal() const { return x_avg.back(); }
  double total_cost() const { return cost.back(); }
};

/// Exact per-node propagation with zero-order-hold input and lumped noise:
/// X_{i+1}(theta) = E X_i(theta) + Gamma (u_i + sqrt(eps) dW_i / dt).
Trajectory simulate(const PropagatorCache& cache, Controller& controller, const Vector& x0,
                    const NoiseHistory& hist, bool keep_nodes = false);

/// M(tf) x0 + sum_i Phibar_i (u_i dt + sqrt(eps) dW_i).
Vector convolved_terminal(const PropagatorCache& cache, const Vector& x0,
                          const std::vector<Vector>& u, const NoiseHistory& hist);

Trajectory run_pinned_bridge(const PropagatorCache& cache, const Vector& x0, const Vector& xf,
                             std::uint64_t seed);

Trajectory run_distribution_bridge(const PropagatorCache& cache, const SchrodingerPotentials& pot,
                                   const GridDensity& target, const Vector& x0,
                                   std::uint64_t seed);

/// Inverse-CDF sample from a 1D grid density, uniform inside the chosen cell.
double sample_grid_density(const GridDensity& g, const std::vector<double>& cdf, double u);
/// Cumulative cell masses of a 1D grid density (last entry 1).
std::vector<double> cell_cdf(const GridDensity& g);

struct MonteCarloReport {
  GridDensity histogram;  // frequency density on the target grid
  double l1 = 0.0;        // int |histogram - rhof|
  double mean_cost = 0.0;
  std::size_t samples = 0;
  std::size_t outside = 0;  // terminal states that missed the grid
  std::vector<double> terminal;
};

/// Frequency density of 1D samples binned on the cells of `grid`; returns the
/// histogram and the count of samples outside.
std::pair<GridDensity, std::size_t> bin_samples(const GridDensity& grid,
                                                const std::vector<double>& xs);

double l1_distance(const GridDensity& a, const GridDensity& b);

/// x0 ~ rho0 (stream 0), path s driven by noise stream s + 1, terminal states
/// binned on the target grid. `rhof` must live on the target grid.
MonteCarloReport monte_carlo_transport(const PropagatorCache& cache,
                                       const SchrodingerPotentials& pot, const GridDensity& rho0,
                                       const GridDensity& rhof, std::size_t n_samples,
                                       std::uint64_t seed, Exec exec = Exec::parallel);

/// L1 distance between rhof and the histogram of n exact samples from rhof.
double statistical_floor(const GridDensity& rhof, std::size_t n_samples, std::uint64_t seed);

}  // namespace ebridge
