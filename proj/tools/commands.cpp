#include "commands.hpp"

#include "ebridge/error.hpp"
#include "ebridge/oracles.hpp"
#include "ebridge/pipeline.hpp"

#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace ebridge::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

// Write via a temporary and rename so readers never see a partial file.
void write_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + tmp.string());
    out << content;
    if (!out) throw ConfigError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

struct Emitter {
  const RunConfig& cfg;
  std::string command;
  std::string ensemble;
  fs::path dir;

  Emitter(const RunConfig& c, std::string cmd, std::string ens)
      : cfg(c), command(std::move(cmd)), ensemble(std::move(ens)), dir(c.output_dir) {
    fs::create_directories(dir);
  }

  void emit(const std::string& name, const std::string& content, std::uint64_t seed,
            std::optional<double> residual) const {
    write_atomic(dir / name, content);
    json m;
    m["artifact"] = name;
    m["command"] = command;
    m["seed"] = seed;
    m["grid"] = {{"t_f", cfg.tf}, {"steps", cfg.time_steps}, {"dt", cfg.tf / static_cast<double>(cfg.time_steps)}};
    m["epsilon"] = cfg.epsilon;
    m["ensemble"] = ensemble;
    m["theta_nodes"] = cfg.theta_nodes;
    m["solver_residual"] = residual ? json(*residual) : json(nullptr);
    m["config_hash"] = cfg.hash();
    write_atomic(dir / (name + ".manifest.json"), m.dump(2) + "\n");
  }
};

std::string density_csv(const GridDensity& g, const Vector& values, const std::string& header) {
  std::ostringstream os;
  write_density_csv(os, g, values, header);
  return os.str();
}

std::string point_header(std::size_t d, const std::string& value) {
  return d == 1 ? "x," + value : "x1,x2," + value;
}

Vector values_of(const GridDensity& g) {
  return Eigen::Map<const Vector>(g.values().data(), static_cast<Eigen::Index>(g.size()));
}

std::string trajectory_csv(const Trajectory& tr) {
  std::ostringstream os;
  const Eigen::Index d = tr.x_avg.front().size();
  const Eigen::Index m = tr.u.front().size();
  os << 't';
  for (Eigen::Index c = 0; c < d; ++c) os << ",x" << c + 1;
  for (Eigen::Index c = 0; c < m; ++c) os << ",u" << c + 1;
  os << ",cost\n";
  os.precision(17);
  for (std::size_t i = 0; i < tr.x_avg.size(); ++i) {
    os << tr.grid.time(i);
    for (Eigen::Index c = 0; c < d; ++c) os << ',' << tr.x_avg[i](c);
    // no input is applied at tf
    for (Eigen::Index c = 0; c < m; ++c) {
      os << ',';
      if (i < tr.u.size()) os << tr.u[i](c);
    }
    os << ',' << tr.cost[i] << '\n';
  }
  return os.str();
}

Vector initial_state(const RunConfig& cfg, const Options& opt, std::size_t d) {
  Vector x0 = opt.x0 ? parse_vector(*opt.x0) : cfg.x0.value_or(Vector::Zero(static_cast<Eigen::Index>(d)));
  if (static_cast<std::size_t>(x0.size()) != d) throw ConfigError("--x0 has the wrong dimension");
  return x0;
}

}  // namespace

int cmd_gramian(const RunConfig& cfg, const Options&) {
  const EnsembleSystem ens = make_ensemble(cfg);
  const PropagatorCache cache(ens, TimeGrid(cfg.tf, cfg.time_steps));
  const Emitter out(cfg, "gramian", ens.name());
  const Matrix& g = cache.gramian(0);
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(g, Eigen::EigenvaluesOnly);
  json report;
  report["M_tf"] = to_json(cache.terminal_state_map());
  report["G_tf_0"] = to_json(g);
  report["G_tf_0_discrete"] = to_json(cache.step_gramian(0));
  report["min_eigenvalue"] = eig.eigenvalues().minCoeff();
  report["condition_number"] = eig.eigenvalues().maxCoeff() / eig.eigenvalues().minCoeff();
  out.emit("gramian.json", report.dump(2) + "\n", cfg.seed, std::nullopt);

  std::ostringstream os;
  os << 't';
  for (std::size_t r = 0; r < cache.state_dim(); ++r) {
    for (std::size_t c = 0; c < cache.input_dim(); ++c) os << ",phi" << r + 1 << c + 1;
  }
  os << '\n';
  os.precision(17);
  for (std::size_t i = 0; i <= cache.steps(); ++i) {
    os << cache.grid().time(i);
    const Matrix& p = cache.input_map(i);
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.cols(); ++c) os << ',' << p(r, c);
    }
    os << '\n';
  }
  out.emit("phi.csv", os.str(), cfg.seed, std::nullopt);
  std::cout << report.dump(2) << '\n';
  return 0;
}

int cmd_solve(const RunConfig& cfg, const Options&) {
  const BridgeProblem p = solve_problem(cfg);
  const Emitter out(cfg, "solve", p.ens->name());
  const SchrodingerPotentials& pot = *p.pot;
  const std::size_t d = p.ens->state_dim();
  const GridDensity& g0 = p.marginals->rho0;
  const GridDensity& gf = p.marginals->rhof;
  out.emit("rho0.csv", density_csv(g0, values_of(g0), point_header(d, "rho0")), cfg.seed, pot.residual);
  out.emit("rhof.csv", density_csv(gf, values_of(gf), point_header(d, "rhof")), cfg.seed, pot.residual);
  out.emit("phi0.csv", density_csv(g0, pot.phi0(), point_header(d, "phi0")), cfg.seed, pot.residual);
  out.emit("phif.csv", density_csv(gf, pot.phif(), point_header(d, "phif")), cfg.seed, pot.residual);
  json report;
  report["residual"] = pot.residual;
  report["iterations"] = pot.iterations;
  report["log_domain"] = pot.log_domain;
  report["tolerance"] = cfg.sinkhorn_tol;
  report["normalization_factor_rho0"] = p.marginals->factor0;
  report["normalization_factor_rhof"] = p.marginals->factorf;
  report["source_points"] = g0.size();
  report["target_points"] = gf.size();
  report["residual_history"] = pot.residual_history;
  out.emit("solve.json", report.dump(2) + "\n", cfg.seed, pot.residual);
  std::cout << "residual " << pot.residual << " after " << pot.iterations << " iterations\n";
  return 0;
}

int cmd_simulate(const RunConfig& cfg, const Options& opt) {
  const bool bridge = opt.mode == "bridge";
  std::optional<BridgeProblem> problem;
  std::unique_ptr<EnsembleSystem> ens;
  std::unique_ptr<PropagatorCache> cache;
  if (bridge) {
    problem = solve_problem(cfg);
  } else {
    ens = std::make_unique<EnsembleSystem>(make_ensemble(cfg));
    cache = std::make_unique<PropagatorCache>(*ens, TimeGrid(cfg.tf, cfg.time_steps));
  }
  const EnsembleSystem& e = bridge ? *problem->ens : *ens;
  const PropagatorCache& c = bridge ? *problem->cache : *cache;
  const Vector x0 = initial_state(cfg, opt, e.state_dim());
  std::optional<Vector> xf;
  if (!bridge) {
    if (opt.xf) {
      xf = parse_vector(*opt.xf);
    } else if (cfg.xf) {
      xf = cfg.xf;
    } else {
      throw ConfigError("pinned mode needs --xf");
    }
    if (static_cast<std::size_t>(xf->size()) != e.state_dim()) {
      throw ConfigError("--xf has the wrong dimension");
    }
  }
  const std::optional<double> residual =
      bridge ? std::optional<double>(problem->pot->residual) : std::nullopt;
  const Emitter out(cfg, "simulate", e.name());

  const std::size_t n = opt.seeds;
  std::vector<Trajectory> runs(n, Trajectory{c.grid(), {}, {}, {}, {}, std::nullopt});
  std::exception_ptr failure;
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t s = 0; s < count; ++s) {
    try {
      const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(s);
      const std::size_t idx = static_cast<std::size_t>(s);
      runs[idx] = bridge ? run_distribution_bridge(c, *problem->pot, problem->marginals->rhof, x0, seed)
                         : run_pinned_bridge(c, x0, *xf, seed);
      out.emit("trajectory_" + opt.mode + "_" + std::to_string(s) + ".csv",
               trajectory_csv(runs[idx]), seed, residual);
    } catch (...) {
#pragma omp critical
      failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  json summary;
  summary["mode"] = opt.mode;
  summary["x0"] = to_json(x0);
  if (xf) summary["xf"] = to_json(*xf);
  json items = json::array();
  for (std::size_t s = 0; s < n; ++s) {
    json it;
    it["seed"] = cfg.seed + s;
    it["terminal"] = to_json(runs[s].terminal());
    it["cost"] = runs[s].total_cost();
    if (runs[s].terminal_error) it["terminal_error"] = *runs[s].terminal_error;
    items.push_back(it);
  }
  summary["runs"] = items;
  out.emit("simulate.json", summary.dump(2) + "\n", cfg.seed, residual);
  for (const json& it : items) {
    std::cout << "seed " << it["seed"] << " cost " << it["cost"];
    if (it.contains("terminal_error")) std::cout << " terminal_error " << it["terminal_error"];
    std::cout << '\n';
  }
  return 0;
}

int cmd_montecarlo(const RunConfig& cfg, const Options&) {
  const BridgeProblem p = solve_problem(cfg);
  const Emitter out(cfg, "montecarlo", p.ens->name());
  const MonteCarloReport mc = monte_carlo_transport(*p.cache, *p.pot, p.marginals->rho0,
                                                    p.marginals->rhof, cfg.mc_samples, cfg.seed);
  const double floor = statistical_floor(p.marginals->rhof, cfg.mc_samples, cfg.seed);
  out.emit("histogram.csv",
           density_csv(mc.histogram, values_of(mc.histogram), "bin_center,density"), cfg.seed,
           p.pot->residual);
  json report;
  report["samples"] = mc.samples;
  report["l1_distance"] = mc.l1;
  report["statistical_floor"] = floor;
  report["ratio_to_floor"] = mc.l1 / floor;
  report["mean_cost"] = mc.mean_cost;
  report["outside_grid"] = mc.outside;
  report["bins"] = mc.histogram.size();
  out.emit("montecarlo.json", report.dump(2) + "\n", cfg.seed, p.pot->residual);
  std::cout << report.dump(2) << '\n';
  return 0;
}

namespace {

std::set<std::string> manifest_hashes(const std::vector<std::string>& inputs) {
  std::set<std::string> hashes;
  const auto read = [&](const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw ConfigError("cannot read manifest " + p.string());
    const json m = json::parse(in);
    if (!m.contains("config_hash")) throw ConfigError("manifest without config_hash: " + p.string());
    hashes.insert(m.at("config_hash").get<std::string>());
  };
  for (const std::string& in : inputs) {
    const fs::path path(in);
    if (fs::is_directory(path)) {
      for (const auto& entry : fs::directory_iterator(path)) {
        const std::string name = entry.path().filename().string();
        if (name.size() > 14 && name.ends_with(".manifest.json")) read(entry.path());
      }
    } else if (fs::exists(path)) {
      read(path);
    } else {
      throw ConfigError("no such input: " + in);
    }
  }
  return hashes;
}

}  // namespace

int cmd_verify(const RunConfig& cfg, const Options& opt) {
  const std::set<std::string> hashes = manifest_hashes(opt.inputs);
  if (hashes.size() > 1) throw ConfigError("inputs carry mixed config hashes");

  json checks = json::array();
  bool all = true;
  const auto record = [&](const std::string& name, bool pass, json detail) {
    detail["name"] = name;
    detail["pass"] = pass;
    checks.push_back(detail);
    all = all && pass;
    std::cout << (pass ? "PASS " : "FAIL ") << name << '\n';
  };

  {
    double worst = 0.0;
    for (const LqCase& c : lq_sweep()) worst = std::max(worst, c.deviation);
    record("discrete_closed_form_vs_brute_force", worst <= 1e-9,
           {{"max_block_deviation", worst}, {"tolerance", 1e-9}, {"cases", 24}});
  }
  {
    const double sign = opt.mutate_sign ? -1.0 : 1.0;
    const auto levels = feedforward_feedback_levels(100, 3, 20, cfg.seed, sign);
    json lv = json::array();
    bool pass = true;
    for (std::size_t l = 0; l < levels.size(); ++l) {
      json it = {{"dt", levels[l].dt}, {"max_deviation", levels[l].deviation}};
      if (l > 0) {
        const double ratio = levels[l - 1].deviation / levels[l].deviation;
        it["ratio"] = ratio;
        pass = pass && ratio >= 1.6 && ratio <= 2.4;
      }
      lv.push_back(it);
    }
    record("feedforward_vs_feedback", pass, {{"levels", lv}, {"ratio_range", {1.6, 2.4}}});
  }
  {
    const KernelReductionGap gap = kernel_markov_gap(200, cfg.seed);
    record("conditional_kernel_markov_reduction", gap.discrete <= 1e-8,
           {{"max_log_density_gap", gap.discrete},
            {"gap_vs_exact_gramian", gap.continuous},
            {"tolerance", 1e-8}});
  }
  {
    const BridgeProblem p = solve_problem(RunConfig{});
    const AffineGap gap = bridge_affine_gap(p, Vector::Zero(1), cfg.seed);
    record("bridge_affine_reduction", gap.form_gap <= 1e-10 && gap.weight_error <= 1e-12,
           {{"max_relative_gap", gap.form_gap},
            {"max_weight_sum_error", gap.weight_error},
            {"steps", gap.steps}});
  }

  json report = {{"checks", checks}, {"all_pass", all}, {"config_hash", cfg.hash()}};
  if (!hashes.empty()) report["input_config_hash"] = *hashes.begin();
  const Emitter out(cfg, "verify", make_ensemble(cfg).name());
  out.emit("verify.json", report.dump(2) + "\n", cfg.seed, std::nullopt);
  return all ? 0 : 1;
}

}  // namespace ebridge::cli
