#include "ebridge/marginals.hpp"

#include "ebridge/error.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

namespace ebridge {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Debug builds check that the marginal mismatch never grows (up to rounding).
void record_residual(std::vector<double>& history, double res) {
  assert(history.empty() || res <= history.back() * (1.0 + 1e-6) + 1e-14);
  history.push_back(res);
}

std::size_t total_size(const std::vector<Axis>& axes) {
  std::size_t n = 1;
  for (const Axis& a : axes) n *= a.n;
  return n;
}

}  // namespace

GridDensity::GridDensity(std::vector<Axis> axes, std::vector<double> values)
    : axes_(std::move(axes)), values_(std::move(values)) {
  if (axes_.empty() || axes_.size() > 2) {
    throw ConfigError("grid density must be 1D or 2D");
  }
  for (const Axis& a : axes_) {
    if (a.n == 0 || !(a.hi > a.lo) || !std::isfinite(a.lo) || !std::isfinite(a.hi)) {
      throw ConfigError("grid axis needs n >= 1 and lo < hi");
    }
  }
  if (values_.size() != total_size(axes_)) {
    throw ConfigError("grid density: value count does not match the axes");
  }
  for (double v : values_) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ConfigError("grid density values must be finite and nonnegative");
    }
  }
}

double GridDensity::cell_volume() const {
  double v = 1.0;
  for (const Axis& a : axes_) v *= a.spacing();
  return v;
}

Vector GridDensity::point(std::size_t flat) const {
  Vector p(static_cast<Eigen::Index>(dim()));
  for (std::size_t k = dim(); k-- > 0;) {
    p(static_cast<Eigen::Index>(k)) = axes_[k].center(flat % axes_[k].n);
    flat /= axes_[k].n;
  }
  return p;
}

double GridDensity::mass() const {
  double s = 0.0;
  for (double v : values_) s += v;
  return s * cell_volume();
}

std::pair<GridDensity, double> GridDensity::normalized() const {
  const double m = mass();
  if (!(m > 0.0)) throw SupportError("cannot normalize a density with zero mass");
  std::vector<double> v(values_);
  for (double& x : v) x /= m;
  return {GridDensity(axes_, std::move(v)), 1.0 / m};
}

GridDensity GridDensity::padded(std::size_t cells) const {
  std::vector<Axis> axes;
  for (const Axis& a : axes_) {
    const double h = a.spacing();
    axes.push_back({a.lo - static_cast<double>(cells) * h, a.hi + static_cast<double>(cells) * h,
                    a.n + 2 * cells});
  }
  std::vector<double> v(total_size(axes), 0.0);
  if (dim() == 1) {
    std::copy(values_.begin(), values_.end(), v.begin() + static_cast<std::ptrdiff_t>(cells));
  } else {
    const std::size_t n1 = axes_[1].n;
    const std::size_t m1 = axes[1].n;
    for (std::size_t r = 0; r < axes_[0].n; ++r) {
      for (std::size_t c = 0; c < n1; ++c) {
        v[(r + cells) * m1 + c + cells] = values_[r * n1 + c];
      }
    }
  }
  return GridDensity(std::move(axes), std::move(v));
}

std::size_t GridDensity::locate(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != dim()) return size();
  std::size_t flat = 0;
  for (std::size_t k = 0; k < dim(); ++k) {
    const Axis& a = axes_[k];
    const double u = (x(static_cast<Eigen::Index>(k)) - a.lo) / a.spacing();
    if (!(u >= 0.0) || u >= static_cast<double>(a.n)) return size();
    flat = flat * a.n + static_cast<std::size_t>(u);
  }
  return flat;
}

double cosine_density_raw(double x) {
  if (x < 0.0 || x > 1.0) return 0.0;
  if (x < 2.0 / 3.0) return 0.2 - 0.2 * std::cos(3.0 * std::numbers::pi * x) + 0.2;
  return 5.0 - 5.0 * std::cos(6.0 * std::numbers::pi * x - 4.0 * std::numbers::pi) + 0.2;
}

CosineMarginals build_cosine_marginals(std::size_t n) {
  if (n < 16) throw ConfigError("cosine marginals need at least 16 grid points");
  const Axis axis{0.0, 1.0, n};
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = cosine_density_raw(axis.center(i));
  const GridDensity raw({axis}, v);
  const double raw_mass = raw.mass();
  auto rho0 = raw.normalized().first;
  // centre i mirrors onto centre n-1-i
  std::vector<double> mirrored(rho0.values().rbegin(), rho0.values().rend());
  GridDensity rhof({axis}, std::move(mirrored));
  return {std::move(rho0), std::move(rhof), raw_mass};
}

GridDensity dirac_density(const Vector& x, double width) {
  if (!(width > 0.0)) throw ConfigError("dirac cell width must be positive");
  std::vector<Axis> axes;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    axes.push_back({x(k) - 0.5 * width, x(k) + 0.5 * width, 1});
  }
  return GridDensity(std::move(axes), {1.0 / std::pow(width, static_cast<double>(x.size()))});
}

double EndKernel::value(std::size_t i, std::size_t j) const {
  return std::exp(log_k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
}

EndKernel build_end_kernel(const EnsembleSystem& ens, const PropagatorCache& cache,
                           const GridDensity& g0, const GridDensity& gf, Exec exec) {
  const std::size_t d = ens.state_dim();
  if (g0.dim() != d || gf.dim() != d) throw ConfigError("grid dimension differs from state dimension");
  if (!(ens.epsilon() > 0.0)) throw ConfigError("densities require epsilon > 0");
  const Matrix cov = ens.epsilon() * cache.step_gramian(0);
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) throw NotControllable("on [0, tf]");
  const Matrix lower = llt.matrixL();
  const double logdet = 2.0 * lower.diagonal().array().log().sum();
  const double c0 = -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi) - 0.5 * logdet;
  const Matrix& mf = cache.terminal_state_map();

  const std::size_t n0 = g0.size();
  const std::size_t nf = gf.size();
  Matrix targets(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(nf));
  for (std::size_t j = 0; j < nf; ++j) targets.col(static_cast<Eigen::Index>(j)) = gf.point(j);

  EndKernel out{Matrix(static_cast<Eigen::Index>(n0), static_cast<Eigen::Index>(nf)), g0, gf};
  const auto row = [&](std::ptrdiff_t si) {
    const auto i = static_cast<Eigen::Index>(si);
    const Vector mean = mf * g0.point(static_cast<std::size_t>(si));
    Matrix r = targets.colwise() - mean;
    lower.triangularView<Eigen::Lower>().solveInPlace(r);
    out.log_k.row(i) = (c0 - 0.5 * r.colwise().squaredNorm().array()).matrix();
  };
  const auto count = static_cast<std::ptrdiff_t>(n0);
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) row(i);
  } else {
    for (std::ptrdiff_t i = 0; i < count; ++i) row(i);
  }
  return out;
}

double target_padding(const PropagatorCache& cache, double sigmas) {
  return sigmas * std::sqrt(cache.epsilon() * cache.step_gramian(0).diagonal().maxCoeff());
}

GridDensity padded_target(const GridDensity& rhof, const PropagatorCache& cache, double sigmas) {
  double h = 0.0;
  for (const Axis& a : rhof.axes()) h = std::max(h, a.spacing());
  const double pad = target_padding(cache, sigmas);
  return rhof.padded(static_cast<std::size_t>(std::ceil(pad / h - 1e-9)));
}

namespace {

// out_i = <m.col(i), v>; each entry is produced by exactly one thread in a fixed
// order, so both policies give identical bits.
void col_dots(const Matrix& m, const Vector& v, Vector& out, Exec exec) {
  const auto n = static_cast<std::ptrdiff_t>(m.cols());
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) out(i) = m.col(i).dot(v);
  } else {
    for (std::ptrdiff_t i = 0; i < n; ++i) out(i) = m.col(i).dot(v);
  }
}

double log_sum_exp(const Eigen::Ref<const Vector>& a, const Vector& b) {
  double hi = kNegInf;
  for (Eigen::Index j = 0; j < a.size(); ++j) hi = std::max(hi, a(j) + b(j));
  if (hi == kNegInf) return kNegInf;
  double s = 0.0;
  for (Eigen::Index j = 0; j < a.size(); ++j) s += std::exp(a(j) + b(j) - hi);
  return hi + std::log(s);
}

// out_i = log sum_j exp(logm(j, i) + logv(j)).
void col_lse(const Matrix& logm, const Vector& logv, Vector& out, Exec exec) {
  const auto n = static_cast<std::ptrdiff_t>(logm.cols());
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) out(i) = log_sum_exp(logm.col(i), logv);
  } else {
    for (std::ptrdiff_t i = 0; i < n; ++i) out(i) = log_sum_exp(logm.col(i), logv);
  }
}

Vector as_vector(const GridDensity& g) {
  return Eigen::Map<const Vector>(g.values().data(), static_cast<Eigen::Index>(g.size()));
}

// Returns false when linear space loses the marginal support (zero or
// non-finite denominators); the caller then restarts in log space.
bool sinkhorn_linear(const Vector& r0, const Vector& rf, double v0, double vf,
                     const Matrix& log_k, const SinkhornOptions& opt, SchrodingerPotentials& out) {
  const double shift = log_k.maxCoeff();
  const Matrix kt = (log_k.transpose().array() - shift).exp().matrix();  // nf x n0
  const Matrix k = kt.transpose();                                        // n0 x nf
  const Eigen::Index n0 = r0.size();
  const Eigen::Index nf = rf.size();
  Vector phif = Vector::Ones(nf);
  Vector phi0(n0);
  Vector kf(n0);
  Vector kb(nf);
  col_dots(kt, phif, kf, opt.exec);
  out.residual_history.clear();
  for (std::size_t it = 1; it <= opt.max_iter; ++it) {
    for (Eigen::Index i = 0; i < n0; ++i) {
      if (r0(i) == 0.0) {
        phi0(i) = 0.0;
      } else if (kf(i) > 0.0 && std::isfinite(kf(i))) {
        phi0(i) = r0(i) / (kf(i) * vf);
      } else {
        return false;
      }
    }
    if (!phi0.allFinite()) return false;
    col_dots(k, phi0, kb, opt.exec);
    for (Eigen::Index j = 0; j < nf; ++j) {
      if (rf(j) == 0.0) {
        phif(j) = 0.0;
      } else if (kb(j) > 0.0 && std::isfinite(kb(j))) {
        phif(j) = rf(j) / (kb(j) * v0);
      } else {
        return false;
      }
    }
    if (!phif.allFinite()) return false;
    col_dots(kt, phif, kf, opt.exec);
    const double row = ((phi0.array() * kf.array() * vf) - r0.array()).abs().sum() * v0;
    const double col = ((phif.array() * kb.array() * v0) - rf.array()).abs().sum() * vf;
    const double res = row + col;
    record_residual(out.residual_history, res);
    out.residual = res;
    out.iterations = it;
    if (res <= opt.tol) {
      out.log_phi0 = phi0.array().log().matrix();
      out.log_phi0.array() -= shift;
      out.log_phif = phif.array().log().matrix();
      return true;
    }
  }
  throw NoConvergence(out.residual, out.iterations);
}

void sinkhorn_log(const Vector& r0, const Vector& rf, double v0, double vf,
                  const Matrix& log_k, const SinkhornOptions& opt, SchrodingerPotentials& out) {
  const Matrix log_kt = log_k.transpose();
  const Eigen::Index n0 = r0.size();
  const Eigen::Index nf = rf.size();
  const double lv0 = std::log(v0);
  const double lvf = std::log(vf);
  const Vector lr0 = r0.array().log().matrix();
  const Vector lrf = rf.array().log().matrix();
  Vector lphif = Vector::Zero(nf);
  Vector lphi0(n0);
  Vector lkf(n0);
  Vector lkb(nf);
  col_lse(log_kt, lphif, lkf, opt.exec);
  out.residual_history.clear();
  for (std::size_t it = 1; it <= opt.max_iter; ++it) {
    for (Eigen::Index i = 0; i < n0; ++i) {
      if (r0(i) == 0.0) {
        lphi0(i) = kNegInf;
      } else if (lkf(i) > kNegInf) {
        lphi0(i) = lr0(i) - lkf(i) - lvf;
      } else {
        throw SupportError("marginal support mismatch");
      }
    }
    col_lse(log_k, lphi0, lkb, opt.exec);
    for (Eigen::Index j = 0; j < nf; ++j) {
      if (rf(j) == 0.0) {
        lphif(j) = kNegInf;
      } else if (lkb(j) > kNegInf) {
        lphif(j) = lrf(j) - lkb(j) - lv0;
      } else {
        throw SupportError("marginal support mismatch");
      }
    }
    col_lse(log_kt, lphif, lkf, opt.exec);
    double row = 0.0;
    for (Eigen::Index i = 0; i < n0; ++i) {
      const double r = r0(i) == 0.0 ? 0.0 : std::exp(lphi0(i) + lkf(i) + lvf);
      row += std::abs(r - r0(i));
    }
    double col = 0.0;
    for (Eigen::Index j = 0; j < nf; ++j) {
      const double c = rf(j) == 0.0 ? 0.0 : std::exp(lphif(j) + lkb(j) + lv0);
      col += std::abs(c - rf(j));
    }
    const double res = row * v0 + col * vf;
    record_residual(out.residual_history, res);
    out.residual = res;
    out.iterations = it;
    if (res <= opt.tol) {
      out.log_phi0 = lphi0;
      out.log_phif = lphif;
      return;
    }
  }
  throw NoConvergence(out.residual, out.iterations);
}

}  // namespace

SchrodingerPotentials sinkhorn(const GridDensity& rho0, const GridDensity& rhof,
                               const EndKernel& kernel, const SinkhornOptions& options) {
  if (rho0.size() != static_cast<std::size_t>(kernel.log_k.rows()) ||
      rhof.size() != static_cast<std::size_t>(kernel.log_k.cols())) {
    throw ConfigError("sinkhorn: marginals do not match the kernel grids");
  }
  if (std::abs(rho0.mass() - 1.0) > 1e-9 || std::abs(rhof.mass() - 1.0) > 1e-9) {
    throw ConfigError("sinkhorn: marginals must have unit mass");
  }
  if (!kernel.log_k.allFinite()) throw NumericalError("sinkhorn: kernel has non-finite entries");
  const Vector r0 = as_vector(rho0);
  const Vector rf = as_vector(rhof);
  const double v0 = rho0.cell_volume();
  const double vf = rhof.cell_volume();

  SchrodingerPotentials out;
  // exp(-700) is near the bottom of the normal double range
  const bool underflows = kernel.log_k.maxCoeff() - kernel.log_k.minCoeff() > 700.0;
  if (options.force_log_domain || underflows ||
      !sinkhorn_linear(r0, rf, v0, vf, kernel.log_k, options, out)) {
    out.log_domain = true;
    sinkhorn_log(r0, rf, v0, vf, kernel.log_k, options, out);
  }

  // gauge: max phif = 1
  const double top = out.log_phif.maxCoeff();
  if (!std::isfinite(top)) throw SupportError("marginal support mismatch");
  out.log_phif.array() -= top;
  out.log_phi0.array() += top;
  return out;
}

Matrix joint_coupling(const SchrodingerPotentials& pot, const EndKernel& kernel) {
  const double lv = std::log(kernel.source.cell_volume() * kernel.target.cell_volume());
  Matrix c(kernel.log_k.rows(), kernel.log_k.cols());
  for (Eigen::Index j = 0; j < c.cols(); ++j) {
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
      const double l = pot.log_phi0(i) + kernel.log_k(i, j) + pot.log_phif(j);
      c(i, j) = l == kNegInf ? 0.0 : std::exp(l + lv);
    }
  }
  return c;
}

void write_density_csv(std::ostream& out, const GridDensity& g, const Vector& values,
                       const std::string& header) {
  if (static_cast<std::size_t>(values.size()) != g.size()) {
    throw ConfigError("csv: value count does not match the grid");
  }
  out << header << '\n';
  out.precision(17);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Vector p = g.point(i);
    for (Eigen::Index k = 0; k < p.size(); ++k) out << p(k) << ',';
    out << values(static_cast<Eigen::Index>(i)) << '\n';
  }
}

void write_density_csv(std::ostream& out, const GridDensity& g, const std::string& header) {
  write_density_csv(out, g, as_vector(g), header);
}

GridDensity read_density_csv(std::istream& in) {
  std::vector<double> xs;
  std::vector<double> vs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    double x = 0.0;
    double v = 0.0;
    if (!(fields >> x >> v)) {
      if (xs.empty()) continue;  // header
      throw ConfigError("csv: malformed line " + std::to_string(lineno));
    }
    xs.push_back(x);
    vs.push_back(v);
  }
  if (xs.size() < 2) throw ConfigError("csv: need at least two grid points");
  const double h = (xs.back() - xs.front()) / static_cast<double>(xs.size() - 1);
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (std::abs(xs[i] - xs[i - 1] - h) > 1e-6 * std::abs(h) || !(h > 0.0)) {
      throw ConfigError("csv: grid points must be increasing and uniformly spaced");
    }
  }
  return GridDensity({Axis{xs.front() - 0.5 * h, xs.back() + 0.5 * h, xs.size()}}, std::move(vs));
}

}  // namespace ebridge
