#pragma once

#include "ebridge/config.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ebridge::cli {

struct Options {
  std::optional<std::string> config_path;
  std::size_t seeds = 1;
  std::string mode = "pinned";
  std::optional<std::string> x0;
  std::optional<std::string> xf;
  std::optional<std::string> out;
  std::vector<std::string> inputs;  // verify: artifact directories or manifests
  bool mutate_sign = false;         // verify: flip the stochastic term
};

int cmd_gramian(const RunConfig& cfg, const Options& opt);
int cmd_solve(const RunConfig& cfg, const Options& opt);
int cmd_simulate(const RunConfig& cfg, const Options& opt);
int cmd_montecarlo(const RunConfig& cfg, const Options& opt);
int cmd_verify(const RunConfig& cfg, const Options& opt);

}  // namespace ebridge::cli
