#include "commands.hpp"

#include "ebridge/error.hpp"

#include "CLI11.hpp"

#include <iostream>

int main(int argc, char** argv) {
  using namespace ebridge;
  CLI::App app{"Schrodinger bridges for ensembles of linear stochastic systems"};
  app.require_subcommand(1, 1);
  cli::Options opt;
  std::string config;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "run configuration (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "output directory (overrides output_dir)");
  };
  CLI::App* gramian = app.add_subcommand("gramian", "averaged maps and the Gramian");
  CLI::App* solve = app.add_subcommand("solve", "Schrodinger potentials");
  CLI::App* simulate = app.add_subcommand("simulate", "sample paths of the optimal control");
  CLI::App* montecarlo = app.add_subcommand("montecarlo", "Monte Carlo transport check");
  CLI::App* verify = app.add_subcommand("verify", "oracle equivalence suite");
  for (CLI::App* s : {gramian, solve, simulate, montecarlo, verify}) common(s);
  simulate->add_option("--seeds", opt.seeds, "number of seeds")->check(CLI::PositiveNumber);
  simulate->add_option("--mode", opt.mode, "pinned | bridge")
      ->check(CLI::IsMember({"pinned", "bridge"}));
  simulate->add_option("--x0", opt.x0, "initial state, comma separated");
  simulate->add_option("--xf", opt.xf, "terminal state for pinned mode, comma separated");
  verify->add_option("inputs", opt.inputs, "artifact directories or manifests to cross-check");
  verify->add_flag("--mutate-sign", opt.mutate_sign, "flip the sign of the stochastic term");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg;
    if (!config.empty()) cfg = load_config(config);
    if (opt.out) cfg.output_dir = *opt.out;
    if (*gramian) return cli::cmd_gramian(cfg, opt);
    if (*solve) return cli::cmd_solve(cfg, opt);
    if (*simulate) return cli::cmd_simulate(cfg, opt);
    if (*montecarlo) return cli::cmd_montecarlo(cfg, opt);
    return cli::cmd_verify(cfg, opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
