#pragma once

#include "ebridge/ensemble.hpp"
#include "ebridge/exec.hpp"
#include "ebridge/linalg.hpp"
#include "ebridge/propagator_cache.hpp"

#include <cstddef>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace ebridge {

/// Cell-centred regular axis: n cells of width (hi - lo) / n, centres at
/// lo + (i + 1/2) h.
struct Axis {
  double lo = 0.0;
  double hi = 1.0;
  std::size_t n = 1;

  double spacing() const { return (hi - lo) / static_cast<double>(n); }
  double center(std::size_t i) const { return lo + (static_cast<double>(i) + 0.5) * spacing(); }
  bool operator==(const Axis&) const = default;
};

/// Nonnegative values on a 1D or 2D cell-centred grid (row-major in 2D, the
/// last axis fastest). Holds densities, Schrodinger potentials and posteriors.
class GridDensity {
 public:
  GridDensity(std::vector<Axis> axes, std::vector<double> values);

  std::size_t dim() const { return axes_.size(); }
  const std::vector<Axis>& axes() const { return axes_; }
  std::size_t size() const { return values_.size(); }
  double cell_volume() const;
  Vector point(std::size_t flat) const;
  double value(std::size_t flat) const { return values_[flat]; }
  const std::vector<double>& values() const { return values_; }

  /// sum(values) * cell_volume.
  double mass() const;
  /// Unit-mass copy and the factor that was applied.
  std::pair<GridDensity, double> normalized() const;

  /// Same spacing, `cells` extra zero cells on both sides of every axis.
  GridDensity padded(std::size_t cells) const;

  /// Flat index of the cell containing x, or size() when outside.
  std::size_t locate(const Vector& x) const;

 private:
  std::vector<Axis> axes_;
  std::vector<double> values_;
};

/// Raw (unnormalized) piecewise-cosine initial density on [0, 1].
double cosine_density_raw(double x);

struct CosineMarginals {
  GridDensity rho0;
  GridDensity rhof;
  double raw_mass0;  // mass before normalization (analytically 2)
};

/// rho0 from the piecewise-cosine profile on n cells over [0, 1] and
/// rhof(x) = rho0(1 - x), both normalized to unit mass.
CosineMarginals build_cosine_marginals(std::size_t n);

/// Single-cell density of unit mass centred at x with cell width `width`.
GridDensity dirac_density(const Vector& x, double width);

/// Pairwise end-state kernel K[i][j] = N(x_f^j; M(tf) x_0^i, eps G) stored as
/// log values. G is the cache's step Gramian at t = 0.
struct EndKernel {
  Matrix log_k;  // n0 x nf
  GridDensity source;
  GridDensity target;

  double value(std::size_t i, std::size_t j) const;
};

EndKernel build_end_kernel(const EnsembleSystem& ens, const PropagatorCache& cache,
                           const GridDensity& g0, const GridDensity& gf,
                           Exec exec = Exec::parallel);

/// Half-width of the target padding: sigmas * sqrt(eps * max diag G).
double target_padding(const PropagatorCache& cache, double sigmas = 4.0);

/// Target grid covering rhof plus the padding, same spacing as rhof.
GridDensity padded_target(const GridDensity& rhof, const PropagatorCache& cache,
                          double sigmas = 4.0);

struct SinkhornOptions {
  double tol = 1e-9;
  std::size_t max_iter = 100000;
  Exec exec = Exec::parallel;
  bool force_log_domain = false;
};

/// Solution of the Schrodinger system on the grids, gauge-fixed to max phif = 1.
/// Potentials are stored in log form; cells with zero marginal mass carry -inf.
struct SchrodingerPotentials {
  Vector log_phi0;
  Vector log_phif;
  double residual = 0.0;
  std::size_t iterations = 0;
  bool log_domain = false;
  std::vector<double> residual_history;

  Vector phi0() const { return log_phi0.array().exp(); }
  Vector phif() const { return log_phif.array().exp(); }
};

/// Alternating (Fortet / Sinkhorn) scaling phi0 <- rho0 / (K phif vol_f),
/// phif <- rhof / (K^T phi0 vol_0) until the L1 mismatch of both reconstructed
/// marginals is <= tol. Linear-space updates, switching to log space when the
/// kernel's dynamic range underflows double precision.
SchrodingerPotentials sinkhorn(const GridDensity& rho0, const GridDensity& rhof,
                               const EndKernel& kernel, const SinkhornOptions& options = {});

/// C[i][j] = phi0_i K_ij phif_j vol_0 vol_f (probability mass per cell pair).
Matrix joint_coupling(const SchrodingerPotentials& pot, const EndKernel& kernel);

/// Two-column CSV (x, value) for 1D grids; (x1, x2, value) for 2D.
void write_density_csv(std::ostream& out, const GridDensity& g, const std::string& header);
void write_density_csv(std::ostream& out, const GridDensity& g, const Vector& values,
                       const std::string& header);
/// Reads a 1D two-column CSV with uniformly spaced cell centres.
GridDensity read_density_csv(std::istream& in);

}  // namespace ebridge
