#include "ebridge/config.hpp"

#include "ebridge/error.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace ebridge {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

double positive(const json& j, const std::string& key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) throw ConfigError(key + " must be a number");
  const double v = j.at(key).get<double>();
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(key + " must be positive");
  return v;
}

std::size_t count(const json& j, const std::string& key, std::size_t fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number_integer() || j.at(key).get<long long>() <= 0) {
    throw ConfigError(key + " must be a positive integer");
  }
  return j.at(key).get<std::size_t>();
}

Matrix to_matrix(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j.front().is_array()) {
    throw ConfigError(what + " must be a nested array of rows");
  }
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j.at(static_cast<std::size_t>(r));
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw ConfigError(what + " has ragged rows");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!row.at(static_cast<std::size_t>(c)).is_number()) throw ConfigError(what + " must be numeric");
      m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
  }
  return m;
}

Vector to_vector(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw ConfigError(what + " must be a nonempty array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j.at(i).is_number()) throw ConfigError(what + " must be numeric");
    v(static_cast<Eigen::Index>(i)) = j.at(i).get<double>();
  }
  return v;
}

json from_vector(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Vector parse_vector(const std::string& text) {
  std::vector<double> vals;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      vals.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("cannot parse vector '" + text + "'");
    }
  }
  if (vals.empty()) throw ConfigError("empty vector");
  return Eigen::Map<Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

json RunConfig::to_json() const {
  json j;
  j["ensemble"] = ensemble;
  j["epsilon"] = epsilon;
  j["t_f"] = tf;
  j["time_steps"] = time_steps;
  j["theta_nodes"] = theta_nodes;
  json m = {{"kind", marginals}};
  if (!rho0_path.empty()) m["rho0"] = rho0_path;
  if (!rhof_path.empty()) m["rhof"] = rhof_path;
  if (x0) m["x0"] = from_vector(*x0);
  if (xf) m["xf"] = from_vector(*xf);
  m["dirac_width"] = dirac_width;
  j["marginals"] = m;
  j["sinkhorn"] = {{"tol", sinkhorn_tol}, {"max_iter", sinkhorn_max_iter}};
  j["grids"] = {{"n0", n0}, {"nf", nf}, {"padding", padding}};
  j["montecarlo"] = {{"n_samples", mc_samples}, {"seed", seed}};
  j["output_dir"] = output_dir;
  return j;
}

std::string RunConfig::hash() const {
  json j = to_json();
  j.erase("output_dir");
  return fnv1a_hex(j.dump());
}

RunConfig parse_config(const json& j) {
  check_keys(j,
             {"ensemble", "epsilon", "t_f", "time_steps", "theta_nodes", "marginals", "sinkhorn",
              "grids", "montecarlo", "output_dir"},
             "config");
  RunConfig c;
  if (j.contains("ensemble")) {
    c.ensemble = j.at("ensemble");
    check_keys(c.ensemble, {"family", "A", "B", "A0", "A1", "B0", "B1", "nodes"}, "ensemble");
    if (!c.ensemble.contains("family") || !c.ensemble.at("family").is_string()) {
      throw ConfigError("ensemble.family must be a string");
    }
  }
  if (j.contains("epsilon")) {
    if (!j.at("epsilon").is_number()) throw ConfigError("epsilon must be a number");
    c.epsilon = j.at("epsilon").get<double>();
    if (!(c.epsilon >= 0.0) || !std::isfinite(c.epsilon)) {
      throw ConfigError("epsilon must be nonnegative");
    }
  }
  c.tf = positive(j, "t_f", c.tf);
  c.time_steps = count(j, "time_steps", c.time_steps);
  c.theta_nodes = count(j, "theta_nodes", c.theta_nodes);
  if (j.contains("marginals")) {
    const json& m = j.at("marginals");
    check_keys(m, {"kind", "rho0", "rhof", "x0", "xf", "dirac_width"}, "marginals");
    c.marginals = m.value("kind", c.marginals);
    if (c.marginals != "cosine-mirror" && c.marginals != "dirac" && c.marginals != "csv") {
      throw ConfigError("marginals.kind must be cosine-mirror, dirac or csv");
    }
    c.rho0_path = m.value("rho0", "");
    c.rhof_path = m.value("rhof", "");
    if (m.contains("x0")) c.x0 = to_vector(m.at("x0"), "marginals.x0");
    if (m.contains("xf")) c.xf = to_vector(m.at("xf"), "marginals.xf");
    c.dirac_width = positive(m, "dirac_width", c.dirac_width);
    if (c.marginals == "csv") {
      for (const std::string& p : {c.rho0_path, c.rhof_path}) {
        if (p.empty() || !std::filesystem::exists(p)) {
          throw ConfigError("marginal file '" + p + "' does not exist");
        }
      }
    }
    if (c.marginals == "dirac" && (!c.x0 || !c.xf)) {
      throw ConfigError("dirac marginals need marginals.x0 and marginals.xf");
    }
  }
  if (j.contains("sinkhorn")) {
    const json& s = j.at("sinkhorn");
    check_keys(s, {"tol", "max_iter"}, "sinkhorn");
    c.sinkhorn_tol = positive(s, "tol", c.sinkhorn_tol);
    c.sinkhorn_max_iter = count(s, "max_iter", c.sinkhorn_max_iter);
  }
  if (j.contains("grids")) {
    const json& g = j.at("grids");
    check_keys(g, {"n0", "nf", "padding"}, "grids");
    c.n0 = count(g, "n0", c.n0);
    c.nf = count(g, "nf", c.nf);
    c.padding = positive(g, "padding", c.padding);
  }
  if (j.contains("montecarlo")) {
    const json& mc = j.at("montecarlo");
    check_keys(mc, {"n_samples", "seed"}, "montecarlo");
    c.mc_samples = count(mc, "n_samples", c.mc_samples);
    if (mc.contains("seed")) {
      const json& sd = mc.at("seed");
      if (!sd.is_number_integer() || sd.get<std::int64_t>() < 0) {
        throw ConfigError("seed must be a nonnegative integer");
      }
      c.seed = mc.at("seed").get<std::uint64_t>();
    }
  }
  if (j.contains("output_dir")) {
    if (!j.at("output_dir").is_string()) throw ConfigError("output_dir must be a string");
    c.output_dir = j.at("output_dir").get<std::string>();
  }
  if (c.time_steps < 2) throw ConfigError("time_steps must be at least 2");
  make_ensemble(c);  // surface family errors at load time
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  return parse_config(j);
}

EnsembleSystem make_ensemble(const RunConfig& cfg) {
  const json& e = cfg.ensemble;
  const std::string family = e.at("family").get<std::string>();
  if (family == "scalar-decay") return scalar_decay(cfg.epsilon, cfg.tf, cfg.theta_nodes);
  if (family == "planar-rotation") return planar_rotation(cfg.epsilon, cfg.tf, cfg.theta_nodes);
  if (family == "constant") {
    if (!e.contains("A") || !e.contains("B")) throw ConfigError("constant family needs A and B");
    return constant_family(to_matrix(e.at("A"), "A"), to_matrix(e.at("B"), "B"), cfg.epsilon, cfg.tf);
  }
  if (family == "affine") {
    for (const char* k : {"A0", "A1", "B0", "B1"}) {
      if (!e.contains(k)) throw ConfigError(std::string("affine family needs ") + k);
    }
    return affine_family("affine", to_matrix(e.at("A0"), "A0"), to_matrix(e.at("A1"), "A1"),
                         to_matrix(e.at("B0"), "B0"), to_matrix(e.at("B1"), "B1"), cfg.epsilon,
                         cfg.tf, cfg.theta_nodes);
  }
  if (family == "table") {
    if (!e.contains("nodes") || !e.at("nodes").is_array() || e.at("nodes").empty()) {
      throw ConfigError("table family needs a nonempty nodes array");
    }
    std::vector<double> th;
    std::vector<double> w;
    std::vector<Matrix> a;
    std::vector<Matrix> b;
    for (const json& n : e.at("nodes")) {
      check_keys(n, {"theta", "weight", "A", "B"}, "ensemble node");
      th.push_back(n.at("theta").get<double>());
      w.push_back(n.at("weight").get<double>());
      a.push_back(to_matrix(n.at("A"), "A"));
      b.push_back(to_matrix(n.at("B"), "B"));
    }
    return EnsembleSystem("table", th, w, a, b, cfg.epsilon, cfg.tf);
  }
  throw ConfigError("unknown ensemble family '" + family + "'");
}

MarginalPair make_marginals(const RunConfig& cfg, const PropagatorCache& cache) {
  if (cfg.marginals == "dirac") {
    // phif vanishes off the single target cell, so no padding is needed
    return {dirac_density(*cfg.x0, cfg.dirac_width), dirac_density(*cfg.xf, cfg.dirac_width), 1.0,
            1.0};
  }
  GridDensity rho0({Axis{}}, {1.0});
  GridDensity rhof({Axis{}}, {1.0});
  double f0 = 1.0;
  double ff = 1.0;
  if (cfg.marginals == "cosine-mirror") {
    if (cfg.n0 != cfg.nf) throw ConfigError("cosine-mirror marginals need n0 == nf");
    CosineMarginals cm = build_cosine_marginals(cfg.n0);
    f0 = 1.0 / cm.raw_mass0;
    ff = f0;
    rho0 = std::move(cm.rho0);
    rhof = std::move(cm.rhof);
  } else {
    std::ifstream a(cfg.rho0_path);
    std::ifstream b(cfg.rhof_path);
    if (!a || !b) throw ConfigError("cannot open marginal csv files");
    std::tie(rho0, f0) = read_density_csv(a).normalized();
    std::tie(rhof, ff) = read_density_csv(b).normalized();
  }
  if (rho0.dim() != cache.state_dim()) throw ConfigError("marginal dimension differs from d");
  return {std::move(rho0), padded_target(rhof, cache, cfg.padding), f0, ff};
}

}  // namespace ebridge
