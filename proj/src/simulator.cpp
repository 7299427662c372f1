#include "ebridge/simulator.hpp"

#include "ebridge/error.hpp"

#include <algorithm>
#include <cmath>

namespace ebridge {

namespace {

// Streams 0 and below 2^40 belong to initial-state sampling and path noise.
constexpr std::uint64_t kFloorStream = 1ULL << 40;

}  // namespace

Trajectory simulate(const PropagatorCache& cache, Controller& controller, const Vector& x0,
                    const NoiseHistory& hist, bool keep_nodes) {
  const TimeGrid& grid = cache.grid();
  if (!(hist.grid() == grid)) throw ConfigError("noise history grid differs from the cache grid");
  if (hist.dim() != cache.input_dim()) throw ConfigError("noise dimension differs from m");
  const auto d = static_cast<Eigen::Index>(cache.state_dim());
  if (x0.size() != d) throw ConfigError("x0 has the wrong dimension");
  const std::size_t k = grid.steps();
  const std::size_t nodes = cache.node_count();
  const double dt = grid.dt();
  const double se = std::sqrt(cache.epsilon());

  Trajectory tr{grid, {}, {}, {}, {}, std::nullopt};
  tr.x_avg.reserve(k + 1);
  tr.u.reserve(k);
  tr.cost.reserve(k + 1);
  tr.x_avg.push_back(x0);
  tr.cost.push_back(0.0);

  // Scalar ensembles dominate Monte Carlo runs; keep them in flat arrays.
  const bool scalar = d == 1 && cache.input_dim() == 1;
  Eigen::ArrayXd e1(static_cast<Eigen::Index>(nodes));
  Eigen::ArrayXd g1(static_cast<Eigen::Index>(nodes));
  Eigen::ArrayXd w1(static_cast<Eigen::Index>(nodes));
  Eigen::ArrayXd x1 = Eigen::ArrayXd::Constant(static_cast<Eigen::Index>(nodes), scalar ? x0(0) : 0.0);
  std::vector<Vector> xs(nodes, x0);
  for (std::size_t j = 0; j < nodes; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    w1(jj) = cache.node_weight(j);
    if (scalar) {
      e1(jj) = cache.node_transition(j)(0, 0);
      g1(jj) = cache.node_input(j)(0, 0);
    }
  }
  if (keep_nodes) tr.x_theta.push_back(xs);

  controller.reset(x0);
  for (std::size_t i = 0; i < k; ++i) {
    const Vector u = controller.control(i, tr.x_avg.back());
    if (!u.allFinite() || u.size() != static_cast<Eigen::Index>(cache.input_dim())) {
      throw NumericalError("controller returned an invalid input at step " + std::to_string(i));
    }
    const Vector& dw = hist.increment(i);
    const Vector v = u + (se / dt) * dw;
    Vector x(d);
    if (scalar) {
      x1 = e1 * x1 + g1 * v(0);
      x(0) = (w1 * x1).sum();
      if (keep_nodes) {
        for (std::size_t j = 0; j < nodes; ++j) xs[j](0) = x1(static_cast<Eigen::Index>(j));
      }
    } else {
      x.setZero();
      for (std::size_t j = 0; j < nodes; ++j) {
        xs[j] = cache.node_transition(j) * xs[j] + cache.node_input(j) * v;
        x += cache.node_weight(j) * xs[j];
      }
    }
    if (keep_nodes) tr.x_theta.push_back(xs);
    tr.x_avg.push_back(std::move(x));
    tr.cost.push_back(tr.cost.back() + 0.5 * u.squaredNorm() * dt);
    tr.u.push_back(u);
    controller.observe(i, dw, u);
  }
  return tr;
}

Vector convolved_terminal(const PropagatorCache& cache, const Vector& x0,
                          const std::vector<Vector>& u, const NoiseHistory& hist) {
  const double se = std::sqrt(cache.epsilon());
  const double dt = cache.grid().dt();
  Vector x = cache.terminal_state_map() * x0;
  for (std::size_t i = 0; i < cache.steps(); ++i) {
    x += cache.step_input_map(i) * (u.at(i) * dt + se * hist.increment(i));
  }
  return x;
}

Trajectory run_pinned_bridge(const PropagatorCache& cache, const Vector& x0, const Vector& xf,
                             std::uint64_t seed) {
  PinnedController ctrl(cache, xf);
  const NoiseHistory hist = sample_noise(seed, cache.grid(), cache.input_dim());
  Trajectory tr = simulate(cache, ctrl, x0, hist);
  tr.terminal_error = (tr.terminal() - xf).norm();
  return tr;
}

Trajectory run_distribution_bridge(const PropagatorCache& cache, const SchrodingerPotentials& pot,
                                   const GridDensity& target, const Vector& x0,
                                   std::uint64_t seed) {
  BridgeController ctrl(cache, pot, target);
  const NoiseHistory hist = sample_noise(seed, cache.grid(), cache.input_dim());
  return simulate(cache, ctrl, x0, hist);
}

std::vector<double> cell_cdf(const GridDensity& g) {
  if (g.dim() != 1) throw ConfigError("inverse-CDF sampling is implemented for 1D grids");
  std::vector<double> cdf(g.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    acc += g.value(i);
    cdf[i] = acc;
  }
  if (!(acc > 0.0)) throw SupportError("cannot sample a density with zero mass");
  for (double& c : cdf) c /= acc;
  cdf.back() = 1.0;
  return cdf;
}

double sample_grid_density(const GridDensity& g, const std::vector<double>& cdf, double u) {
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  const auto i = static_cast<std::size_t>(std::min<std::ptrdiff_t>(
      it - cdf.begin(), static_cast<std::ptrdiff_t>(cdf.size()) - 1));
  const double lo = i == 0 ? 0.0 : cdf[i - 1];
  const double frac = cdf[i] > lo ? (u - lo) / (cdf[i] - lo) : 0.5;
  const Axis& a = g.axes()[0];
  return a.lo + (static_cast<double>(i) + std::clamp(frac, 0.0, 1.0)) * a.spacing();
}

std::pair<GridDensity, std::size_t> bin_samples(const GridDensity& grid,
                                                const std::vector<double>& xs) {
  if (grid.dim() != 1) throw ConfigError("histograms are implemented for 1D grids");
  std::vector<double> counts(grid.size(), 0.0);
  std::size_t outside = 0;
  Vector p(1);
  for (double x : xs) {
    p(0) = x;
    const std::size_t c = grid.locate(p);
    if (c < grid.size()) {
      counts[c] += 1.0;
    } else {
      ++outside;
    }
  }
  const double scale = 1.0 / (static_cast<double>(xs.size()) * grid.cell_volume());
  for (double& c : counts) c *= scale;
  return {GridDensity(grid.axes(), std::move(counts)), outside};
}

double l1_distance(const GridDensity& a, const GridDensity& b) {
  if (a.axes() != b.axes()) throw ConfigError("l1 distance needs matching grids");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a.value(i) - b.value(i));
  return s * a.cell_volume();
}

MonteCarloReport monte_carlo_transport(const PropagatorCache& cache,
                                       const SchrodingerPotentials& pot, const GridDensity& rho0,
                                       const GridDensity& rhof, std::size_t n_samples,
                                       std::uint64_t seed, Exec exec) {
  if (n_samples < 100) throw ConfigError("monte carlo needs at least 100 samples");
  if (cache.state_dim() != 1) throw ConfigError("monte carlo transport is implemented for d = 1");
  const std::vector<double> cdf0 = cell_cdf(rho0);
  const CounterRng init(seed, 0);
  std::vector<double> terminal(n_samples);
  std::vector<double> cost(n_samples);
  const auto path = [&](std::ptrdiff_t ss) {
    const auto s = static_cast<std::size_t>(ss);
    Vector x0(1);
    x0(0) = sample_grid_density(rho0, cdf0, init.uniform(s));
    BridgeController ctrl(cache, pot, rhof);
    const NoiseHistory hist = sample_noise(seed, cache.grid(), cache.input_dim(), s + 1);
    const Trajectory tr = simulate(cache, ctrl, x0, hist);
    terminal[s] = tr.terminal()(0);
    cost[s] = tr.total_cost();
  };
  const auto count = static_cast<std::ptrdiff_t>(n_samples);
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 8)
    for (std::ptrdiff_t s = 0; s < count; ++s) path(s);
  } else {
    for (std::ptrdiff_t s = 0; s < count; ++s) path(s);
  }

  auto [hist, outside] = bin_samples(rhof, terminal);
  double mean_cost = 0.0;
  for (double c : cost) mean_cost += c;
  mean_cost /= static_cast<double>(n_samples);
  const double l1 = l1_distance(hist, rhof);
  return {std::move(hist), l1, mean_cost, n_samples, outside, std::move(terminal)};
}

double statistical_floor(const GridDensity& rhof, std::size_t n_samples, std::uint64_t seed) {
  const std::vector<double> cdf = cell_cdf(rhof);
  const CounterRng rng(seed, kFloorStream);
  std::vector<double> xs(n_samples);
  for (std::size_t s = 0; s < n_samples; ++s) xs[s] = sample_grid_density(rhof, cdf, rng.uniform(s));
  return l1_distance(bin_samples(rhof, xs).first, rhof);
}

}  // namespace ebridge
