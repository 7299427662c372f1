#pragma once

#include "ebridge/config.hpp"
#include "ebridge/controllers.hpp"
#include "ebridge/marginals.hpp"
#include "ebridge/propagator_cache.hpp"
#include "ebridge/simulator.hpp"

#include <cstdint>
#include <memory>
#include <vector>

namespace ebridge {

/// Ensemble, propagators, marginals, kernel and potentials for one config.
/// Held behind unique_ptr members so controllers may keep references.
struct BridgeProblem {
  std::unique_ptr<EnsembleSystem> ens;
  std::unique_ptr<PropagatorCache> cache;
  std::unique_ptr<MarginalPair> marginals;
  std::unique_ptr<EndKernel> kernel;
  std::unique_ptr<SchrodingerPotentials> pot;
};

/// Builds everything up to the Schrodinger potentials.
BridgeProblem solve_problem(const RunConfig& cfg, Exec exec = Exec::parallel);

/// Ensemble with fixed, generic coefficients for given (d, m), used by the
/// discrete LQ sweep.
EnsembleSystem lq_test_ensemble(std::size_t d, std::size_t m, double epsilon);

struct LqCase {
  std::size_t d = 0;
  std::size_t m = 0;
  std::size_t k = 0;
  double a = 0.0;
  double deviation = 0.0;
  double condition = 0.0;
};

/// Closed form vs brute force over (d, m, k, a) in {1,2} x {1,2} x {2,4} x {1,10,100}.
std::vector<LqCase> lq_sweep(double epsilon = 1.0);

struct FfFbLevel {
  std::size_t steps = 0;
  double dt = 0.0;
  double deviation = 0.0;  // mean over seeds of max |u_ff - u_fb| on the window
};

/// Pinned feedforward vs Markov feedback for A = 0, B = 1, eps = 1, tf = 1,
/// xf = 1, on grids with coarse_steps * 2^l steps driven by the same Brownian
/// paths. The maximum is taken over t_i <= window * tf.
std::vector<FfFbLevel> feedforward_feedback_levels(std::size_t coarse_steps, std::size_t levels,
                                                   std::size_t seeds, std::uint64_t seed,
                                                   double noise_sign = 1.0, double window = 0.5);

struct KernelReductionGap {
  double discrete = 0.0;    // vs the Markov density of the sampled process
  double continuous = 0.0;  // vs the Markov density with the exact Gramian
};

/// Conditional kernel built from the noise history vs the Markov transition
/// density re-expressed through the current state of an uncontrolled run
/// (constant 2D family), relative error of log densities over steps and points.
KernelReductionGap kernel_markov_gap(std::size_t steps, std::uint64_t seed);

struct AffineGap {
  double form_gap = 0.0;
  double weight_error = 0.0;
  std::size_t steps = 0;
};

/// One bridge run on the cosine example recording quadrature vs affine forms.
AffineGap bridge_affine_gap(const BridgeProblem& problem, const Vector& x0, std::uint64_t seed);

}  // namespace ebridge
