#pragma once

#include "ebridge/ensemble.hpp"
#include "ebridge/marginals.hpp"
#include "ebridge/propagator_cache.hpp"

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace ebridge {

/// Parsed run configuration. Unknown keys are rejected so typos surface as
/// config errors instead of silently falling back to defaults.
struct RunConfig {
  nlohmann::json ensemble = {{"family", "scalar-decay"}};
  double epsilon = 0.1;
  double tf = 1.0;
  std::size_t time_steps = 1000;
  std::size_t theta_nodes = kDefaultThetaNodes;

  std::string marginals = "cosine-mirror";  // cosine-mirror | dirac | csv
  std::string rho0_path;
  std::string rhof_path;
  std::optional<Vector> x0;
  std::optional<Vector> xf;
  double dirac_width = 1.0 / 256.0;

  double sinkhorn_tol = 1e-9;
  std::size_t sinkhorn_max_iter = 100000;
  std::size_t n0 = 256;
  std::size_t nf = 256;
  double padding = 4.0;

  std::size_t mc_samples = 5000;
  std::uint64_t seed = 1;
  std::string output_dir = "out";

  /// FNV-1a of the canonical (key-sorted) JSON of every field above except
  /// output_dir.
  std::string hash() const;
  nlohmann::json to_json() const;
};

RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::string& path);

EnsembleSystem make_ensemble(const RunConfig& cfg);

struct MarginalPair {
  GridDensity rho0;
  GridDensity rhof;  // on the padded target grid
  double factor0 = 1.0;
  double factorf = 1.0;
};

/// Initial and target densities; the target is padded per the config.
MarginalPair make_marginals(const RunConfig& cfg, const PropagatorCache& cache);

std::string fnv1a_hex(const std::string& text);

/// Parses "1,0.5" into a vector.
Vector parse_vector(const std::string& text);

}  // namespace ebridge
