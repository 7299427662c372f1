#include "ebridge/pipeline.hpp"

#include "ebridge/error.hpp"
#include "ebridge/oracles.hpp"

#include <cmath>

namespace ebridge {

BridgeProblem solve_problem(const RunConfig& cfg, Exec exec) {
  BridgeProblem p;
  p.ens = std::make_unique<EnsembleSystem>(make_ensemble(cfg));
  p.cache = std::make_unique<PropagatorCache>(*p.ens, TimeGrid(cfg.tf, cfg.time_steps), exec);
  p.marginals = std::make_unique<MarginalPair>(make_marginals(cfg, *p.cache));
  p.kernel = std::make_unique<EndKernel>(
      build_end_kernel(*p.ens, *p.cache, p.marginals->rho0, p.marginals->rhof, exec));
  SinkhornOptions opt;
  opt.tol = cfg.sinkhorn_tol;
  opt.max_iter = cfg.sinkhorn_max_iter;
  opt.exec = exec;
  p.pot = std::make_unique<SchrodingerPotentials>(
      sinkhorn(p.marginals->rho0, p.marginals->rhof, *p.kernel, opt));
  return p;
}

EnsembleSystem lq_test_ensemble(std::size_t d, std::size_t m, double epsilon) {
  const auto dd = static_cast<Eigen::Index>(d);
  const auto mm = static_cast<Eigen::Index>(m);
  Matrix a0(dd, dd);
  Matrix a1(dd, dd);
  if (d == 1) {
    a0 << -0.3;
    a1 << -0.5;
  } else {
    a0 << -0.2, 0.7, -0.4, -0.1;
    a1 << 0.0, -1.0, 1.0, 0.0;
  }
  Matrix b0(dd, mm);
  Matrix b1(dd, mm);
  for (Eigen::Index r = 0; r < dd; ++r) {
    for (Eigen::Index c = 0; c < mm; ++c) {
      b0(r, c) = r == c ? 1.0 : 0.3;
      b1(r, c) = 0.2 * static_cast<double>(r + 1) - 0.1 * static_cast<double>(c);
    }
  }
  return affine_family("lq-test", a0, a1, b0, b1, epsilon, 1.0, 16);
}

std::vector<LqCase> lq_sweep(double epsilon) {
  std::vector<LqCase> out;
  for (std::size_t d : {1, 2}) {
    for (std::size_t m : {1, 2}) {
      const EnsembleSystem ens = lq_test_ensemble(d, m, epsilon);
      for (std::size_t k : {2, 4}) {
        const PropagatorCache cache(ens, TimeGrid(1.0, k), Exec::serial);
        for (double a : {1.0, 10.0, 100.0}) {
          const DiscreteFeedforwardLaw cf = discrete_closed_form(cache, a);
          const DiscreteFeedforwardLaw bf = discrete_brute_force(cache, a);
          out.push_back({d, m, k, a, max_block_deviation(cf, bf), bf.condition});
        }
      }
    }
  }
  return out;
}

std::vector<FfFbLevel> feedforward_feedback_levels(std::size_t coarse_steps, std::size_t levels,
                                                   std::size_t seeds, std::uint64_t seed,
                                                   double noise_sign, double window) {
  if (levels == 0 || seeds == 0) throw ConfigError("need at least one level and one seed");
  const Matrix a = Matrix::Zero(1, 1);
  const Matrix b = Matrix::Identity(1, 1);
  const double eps = 1.0;
  const Vector xf = Vector::Ones(1);
  const Vector x0 = Vector::Zero(1);
  const std::size_t fine = coarse_steps << (levels - 1);
  const EnsembleSystem ens = constant_family(a, b, eps, 1.0);

  std::vector<FfFbLevel> out(levels);
  std::vector<std::unique_ptr<PropagatorCache>> caches;
  for (std::size_t l = 0; l < levels; ++l) {
    const TimeGrid g(1.0, coarse_steps << l);
    caches.push_back(std::make_unique<PropagatorCache>(ens, g, Exec::serial));
    out[l] = {g.steps(), g.dt(), 0.0};
  }
  for (std::size_t s = 0; s < seeds; ++s) {
    NoiseHistory hist = sample_noise(seed + s, TimeGrid(1.0, fine), 1);
    for (std::size_t l = levels; l-- > 0;) {
      const PropagatorCache& cache = *caches[l];
      PinnedController ctrl(cache, xf, noise_sign);
      const Trajectory tr = simulate(cache, ctrl, x0, hist);
      double dev = 0.0;
      const TimeGrid& g = cache.grid();
      for (std::size_t i = 0; i < g.steps() && g.time(i) <= window * g.tf() + 1e-12; ++i) {
        const Vector fb =
            markov_feedback_control(a, b, eps, Vector::Zero(1), Matrix(xf), g.time(i), g.tf(),
                                    tr.x_avg[i]);
        dev = std::max(dev, (tr.u[i] - fb).cwiseAbs().maxCoeff());
      }
      out[l].deviation += dev / static_cast<double>(seeds);
      if (l > 0) hist = hist.coarsen();
    }
  }
  return out;
}

KernelReductionGap kernel_markov_gap(std::size_t steps, std::uint64_t seed) {
  Matrix a(2, 2);
  a << -0.4, 1.0, -0.6, -0.2;
  Matrix b(2, 2);
  b << 1.0, 0.0, 0.5, 1.0;
  const double eps = 0.3;
  const EnsembleSystem ens = constant_family(a, b, eps, 1.0);
  const TimeGrid grid(1.0, steps);
  const PropagatorCache cache(ens, grid, Exec::serial);
  Vector x0(2);
  x0 << 0.7, -0.2;
  const NoiseHistory hist = sample_noise(seed, grid, 2);
  ZeroController zero(2);
  const Trajectory tr = simulate(cache, zero, x0, hist);

  const auto [e_dt, gam] = zero_order_hold(a, b, grid.dt());
  KernelReductionGap gap;
  for (std::size_t i : {std::size_t{0}, steps / 4, steps / 2, 3 * steps / 4, steps - 1}) {
    const double t = grid.time(i);
    const Vector mean = mat_exp(a, grid.tf() - t) * tr.x_avg[i];
    Matrix cov_d = Matrix::Zero(2, 2);
    for (std::size_t l = i; l < steps; ++l) {
      const Matrix p = mat_exp(a, grid.tf() - grid.time(l + 1)) * gam / grid.dt();
      cov_d += grid.dt() * p * p.transpose();
    }
    cov_d = symmetrize(eps * cov_d);
    const Matrix cov_c = eps * constant_gramian(a, b, grid.tf() - t);
    const Eigen::LLT<Matrix> llt(cov_d);
    const Matrix lower = llt.matrixL();
    for (int dir = 0; dir < 5; ++dir) {
      Vector z = Vector::Zero(2);
      if (dir > 0) z(dir % 2) = dir <= 2 ? 1.5 : -1.5;
      const Vector y = mean + lower * z;
      const double lq = conditional_log_kernel(cache, x0, hist, {}, i, y);
      gap.discrete = std::max(gap.discrete, std::abs(lq - gaussian_logpdf(mean, cov_d, y)));
      gap.continuous = std::max(gap.continuous, std::abs(lq - gaussian_logpdf(mean, cov_c, y)));
    }
  }
  return gap;
}

AffineGap bridge_affine_gap(const BridgeProblem& problem, const Vector& x0, std::uint64_t seed) {
  const PropagatorCache& cache = *problem.cache;
  BridgeController ctrl(cache, *problem.pot, problem.marginals->rhof);
  const NoiseHistory hist = sample_noise(seed, cache.grid(), cache.input_dim());
  simulate(cache, ctrl, x0, hist);
  return {ctrl.max_form_gap(), ctrl.max_weight_sum_error(), cache.steps()};
}

}  // namespace ebridge
