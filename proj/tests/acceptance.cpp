// Acceptance run: one PASS/FAIL line per criterion with the measured numbers
// and wall time. Exits nonzero when any criterion fails.

#include "ebridge/controllers.hpp"
#include "ebridge/marginals.hpp"
#include "ebridge/noise.hpp"
#include "ebridge/oracles.hpp"
#include "ebridge/pipeline.hpp"
#include "ebridge/simulator.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

using namespace ebridge;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const std::string& name, double budget_s,
               const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out = {false, std::string("exception: ") + e.what()};
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = secs < budget_s;
  const bool pass = out.pass && in_time;
  if (!pass) ++failures;
  std::printf("%s %d %s: %s; %.2f s (budget %.0f s)%s\n", pass ? "PASS" : "FAIL", id,
              name.c_str(), out.detail.c_str(), secs, budget_s, in_time ? "" : " over budget");
  std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double relative_error(const GridDensity& g, const Vector& v) {
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) s += std::abs(v(static_cast<Eigen::Index>(i)) - g.value(i));
  return s * g.cell_volume();
}

Outcome closed_form_constants() {
  const double s1 = std::sin(1.0);
  const double c1 = std::cos(1.0);
  Matrix ref(2, 2);
  ref << s1, c1 - 1.0, 1.0 - c1, s1;
  const double rot = (averaged_state_map(planar_rotation(0.1), 1.0) - ref).cwiseAbs().maxCoeff();
  const double dec =
      std::abs(averaged_state_map(scalar_decay(0.1), 1.0)(0, 0) - (1.0 - std::exp(-1.0)));
  return {rot <= 1e-9 && dec <= 1e-9,
          "rotation M(1) max error " + fmt("%.2e", rot) + ", scalar-decay M(1) error " +
              fmt("%.2e", dec)};
}

Outcome discrete_lq() {
  const std::vector<LqCase> cases = lq_sweep();
  double worst = 0.0;
  double cond = 0.0;
  for (const LqCase& c : cases) {
    worst = std::max(worst, c.deviation);
    cond = std::max(cond, c.condition);
  }
  return {worst <= 1e-9, std::to_string(cases.size()) + " cases, max block deviation " +
                             fmt("%.2e", worst) + ", worst normal-matrix condition " +
                             fmt("%.1e", cond)};
}

Outcome feedforward_feedback() {
  const std::vector<FfFbLevel> lv = feedforward_feedback_levels(100, 3, 20, 1);
  bool pass = true;
  std::ostringstream os;
  os << "C = " << fmt("%.3f", lv[0].deviation / lv[0].dt) << "; deviations";
  for (const FfFbLevel& l : lv) os << ' ' << fmt("%.3e", l.deviation) << " (dt " << l.dt << ")";
  os << "; ratios";
  for (std::size_t l = 1; l < lv.size(); ++l) {
    const double r = lv[l - 1].deviation / lv[l].deviation;
    pass = pass && r >= 1.6 && r <= 2.4;
    os << ' ' << fmt("%.3f", r);
  }
  return {pass, os.str()};
}

Outcome pinned_terminal_accuracy() {
  Vector x0(2);
  x0 << 1, 0;
  const Vector xf = Vector::Ones(2);
  const EnsembleSystem noisy = planar_rotation(0.05);
  const PropagatorCache coarse(noisy, TimeGrid(1.0, 500));
  const PropagatorCache fine(noisy, TimeGrid(1.0, 1000));
  double ec = 0.0;
  double ef = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    ec += *run_pinned_bridge(coarse, x0, xf, s).terminal_error / 100.0;
    ef += *run_pinned_bridge(fine, x0, xf, s).terminal_error / 100.0;
  }
  const EnsembleSystem quiet = planar_rotation(0.0);
  const PropagatorCache c0(quiet, TimeGrid(1.0, 1000));
  const Trajectory tr = run_pinned_bridge(c0, x0, xf, 0);
  const Vector r = xf - c0.terminal_state_map() * x0;
  const double oracle = 0.5 * r.dot(c0.gramian(0).llt().solve(r));
  const double cost_err = std::abs(tr.total_cost() - oracle) / oracle;
  return {ef < ec && *tr.terminal_error <= 1e-8 && cost_err <= 1e-6,
          "mean terminal error " + fmt("%.4e", ec) + " (dt 2e-3) vs " + fmt("%.4e", ef) +
              " (dt 1e-3); eps=0 terminal error " + fmt("%.2e", *tr.terminal_error) +
              ", cost relative error " + fmt("%.2e", cost_err)};
}

Outcome sinkhorn_fidelity() {
  const BridgeProblem p = solve_problem(RunConfig{});
  const SchrodingerPotentials& pot = *p.pot;
  const Matrix c = joint_coupling(pot, *p.kernel);
  const GridDensity& r0 = p.marginals->rho0;
  const GridDensity& rf = p.marginals->rhof;
  const Vector row = c.rowwise().sum() / r0.cell_volume();
  const Vector col = c.colwise().sum().transpose() / rf.cell_volume();
  const double l1_0 = relative_error(r0, row);
  const double l1_f = relative_error(rf, col);
  const double mass = std::abs(c.sum() - 1.0);

  SchrodingerPotentials scaled = pot;
  scaled.log_phi0.array() += std::log(1e3);
  scaled.log_phif.array() -= std::log(1e3);
  const Matrix cs = joint_coupling(scaled, *p.kernel);
  const double gauge = (cs - c).cwiseAbs().maxCoeff() / c.cwiseAbs().maxCoeff();
  const PosteriorWeights w0 = posterior_weights(*p.cache, Vector::Constant(1, 0.3), 0,
                                                pot.log_phif, grid_points(rf));
  const PosteriorWeights w1 = posterior_weights(*p.cache, Vector::Constant(1, 0.3), 0,
                                                scaled.log_phif, grid_points(rf));
  double wgap = 0.0;
  for (std::size_t j = 0; j < w0.weights.size(); ++j) {
    wgap = std::max(wgap, std::abs(w0.weights[j] - w1.weights[j]));
  }
  return {l1_0 <= 1e-8 && l1_f <= 1e-8 && mass <= 1e-9 && gauge <= 1e-12 && wgap <= 1e-12,
          "marginal L1 " + fmt("%.2e", l1_0) + " / " + fmt("%.2e", l1_f) + ", coupling mass error " +
              fmt("%.2e", mass) + ", gauge (c=1e3) coupling change " + fmt("%.2e", gauge) +
              ", posterior change " + fmt("%.2e", wgap) + ", " + std::to_string(pot.iterations) +
              " iterations"};
}

Outcome path_integral_identity() {
  const BridgeProblem p = solve_problem(RunConfig{});
  const AffineGap gap = bridge_affine_gap(p, Vector::Zero(1), 1);
  return {gap.steps == 1000 && gap.form_gap <= 1e-10 && gap.weight_error <= 1e-12,
          std::to_string(gap.steps) + " steps, max relative gap " + fmt("%.2e", gap.form_gap) +
              ", max weight-sum error " + fmt("%.2e", gap.weight_error)};
}

Outcome monte_carlo() {
  const RunConfig cfg;
  const BridgeProblem p = solve_problem(cfg);
  const MonteCarloReport r = monte_carlo_transport(*p.cache, *p.pot, p.marginals->rho0,
                                                   p.marginals->rhof, 5000, cfg.seed);
  const double floor = statistical_floor(p.marginals->rhof, 5000, cfg.seed);
  return {r.l1 <= 3.0 * floor,
          "L1 " + fmt("%.4f", r.l1) + ", floor " + fmt("%.4f", floor) + ", ratio " +
              fmt("%.3f", r.l1 / floor) + ", " + std::to_string(r.outside) +
              " samples outside the grid, mean cost " + fmt("%.4f", r.mean_cost)};
}

Outcome passive_moments() {
  const double eps = 0.1;
  const EnsembleSystem e = planar_rotation(eps);
  const TimeGrid g(1.0, 200);
  const PropagatorCache c(e, g);
  Vector x0(2);
  x0 << 1.0, 0.5;
  const std::size_t n = 10000;
  std::vector<Vector> xs(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t s = 0; s < static_cast<std::ptrdiff_t>(n); ++s) {
    ZeroController zero(2);
    xs[static_cast<std::size_t>(s)] =
        simulate(c, zero, x0, sample_noise(static_cast<std::uint64_t>(s), g, 2)).terminal();
  }
  Vector mean = Vector::Zero(2);
  for (const Vector& x : xs) mean += x / static_cast<double>(n);
  Matrix cov = Matrix::Zero(2, 2);
  for (const Vector& x : xs) cov += (x - mean) * (x - mean).transpose();
  cov /= static_cast<double>(n - 1);
  const Vector m_ref = c.terminal_state_map() * x0;
  const Matrix c_ref = eps * c.gramian(0);
  const double em = (mean - m_ref).norm() / m_ref.norm();
  const double ec = (cov - c_ref).norm() / c_ref.norm();
  return {em <= 0.05 && ec <= 0.05,
          "mean relative error " + fmt("%.4f", em) + ", covariance relative Frobenius error " +
              fmt("%.4f", ec)};
}

Outcome causality() {
  const EnsembleSystem e = planar_rotation(0.1);
  const TimeGrid g(1.0, 100);
  const PropagatorCache c(e, g);
  Vector x0(2);
  x0 << 1, 0;
  const Vector xf = Vector::Ones(2);
  const GridDensity target({Axis{-1, 2, 10}, Axis{-1, 2, 10}}, std::vector<double>(100, 1.0 / 9.0));
  SchrodingerPotentials pot;
  pot.log_phif = Vector::LinSpaced(100, -2.0, 0.0);
  Matrix a(2, 2);
  a << 0, -1, 1, 0;
  const std::vector<std::function<std::unique_ptr<Controller>()>> makers = {
      [&] { return std::make_unique<ZeroController>(2); },
      [&] { return std::make_unique<PinnedController>(c, xf); },
      [&] { return std::make_unique<BridgeController>(c, pot, target); },
      [&] {
        return std::make_unique<MarkovFeedbackController>(a, Matrix::Identity(2, 2), 0.1, g,
                                                          Vector::Zero(1), Matrix(xf));
      },
  };
  const CounterRng rng(2024, 0);
  std::size_t checked = 0;
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    const auto cut = 1 + static_cast<std::size_t>(rng.uniform(2 * trial) * 97.0);
    const NoiseHistory h = sample_noise(trial, g, 2);
    NoiseHistory changed = h;
    // one future increment, chosen at random at or after the cut
    const auto j = cut + static_cast<std::size_t>(rng.uniform(2 * trial + 1) *
                                                  static_cast<double>(g.steps() - cut));
    changed.set_increment(j, h.increment(j) + Vector::Constant(2, 0.5));
    for (const auto& make : makers) {
      auto ca = make();
      auto cb = make();
      const Trajectory ta = simulate(c, *ca, x0, h, true);
      const Trajectory tb = simulate(c, *cb, x0, changed, true);
      for (std::size_t i = 0; i <= j; ++i) {
        if (ta.x_avg[i] != tb.x_avg[i]) return {false, "state differs before the perturbation"};
        if (i < j && ta.u[i] != tb.u[i]) return {false, "control differs before the perturbation"};
        for (std::size_t n = 0; n < c.node_count(); ++n) {
          if (ta.x_theta[i][n] != tb.x_theta[i][n]) return {false, "node state differs"};
        }
      }
      if (ta.x_avg[j + 1] == tb.x_avg[j + 1]) return {false, "perturbation had no effect"};
      ++checked;
    }
  }
  return {true, std::to_string(checked) + " controller runs over 20 trials, exact prefix equality"};
}

}  // namespace

int main() {
  criterion(1, "closed-form constants", 1, closed_form_constants);
  criterion(2, "discrete LQ oracle", 10, discrete_lq);
  criterion(3, "feedforward/feedback equivalence", 10, feedforward_feedback);
  criterion(4, "pinned terminal accuracy", 30, pinned_terminal_accuracy);
  criterion(5, "Sinkhorn fidelity", 5, sinkhorn_fidelity);
  criterion(6, "path-integral identity", 5, path_integral_identity);
  criterion(7, "Monte Carlo transport", 120, monte_carlo);
  criterion(8, "passive moments", 60, passive_moments);
  criterion(9, "causality", 5, causality);
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
