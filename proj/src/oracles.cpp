#include "ebridge/oracles.hpp"

#include "ebridge/controllers.hpp"
#include "ebridge/error.hpp"

#include <cmath>
#include <iostream>

namespace ebridge {

std::size_t DiscreteFeedforwardLaw::parameter_count() const {
  if (G.empty()) return 0;
  const auto m = static_cast<std::size_t>(G.front().rows());
  const auto d = static_cast<std::size_t>(G.front().cols());
  return m * m * k * (k + 1) / 2 + m * d * k;
}

namespace {

// (W + I / 2a)^{-1} written as 2a (2a W + I)^{-1}, which is zero at a = 0.
Matrix regularized_inverse(const Matrix& w, double a) {
  const Eigen::Index d = w.rows();
  const Matrix reg = symmetrize(2.0 * a * w + Matrix::Identity(d, d));
  const Eigen::LLT<Matrix> llt(reg);
  if (llt.info() != Eigen::Success) throw NotSpd();
  return 2.0 * a * llt.solve(Matrix::Identity(d, d));
}

DiscreteFeedforwardLaw empty_law(std::size_t k, double a) {
  DiscreteFeedforwardLaw law;
  law.k = k;
  law.a = a;
  law.F.resize(k);
  law.G.resize(k);
  return law;
}

}  // namespace

DiscreteFeedforwardLaw discrete_closed_form(const PropagatorCache& cache, double a) {
  if (a < 0.0) throw ConfigError("terminal weight must be nonnegative");
  const std::size_t k = cache.steps();
  const double dt = cache.grid().dt();
  const double se = std::sqrt(cache.epsilon());
  const auto d = static_cast<Eigen::Index>(cache.state_dim());

  std::vector<Matrix> inv(k);
  Matrix w = Matrix::Zero(d, d);
  for (std::size_t j = k; j-- > 0;) {
    const Matrix& p = cache.input_map(j);
    w += dt * (p * p.transpose());
    inv[j] = regularized_inverse(w, a);
  }
  DiscreteFeedforwardLaw law = empty_law(k, a);
  for (std::size_t i = 0; i < k; ++i) {
    const Matrix pt = cache.input_map(i).transpose();
    for (std::size_t j = 0; j <= i; ++j) {
      law.F[i].push_back(-se * pt * inv[j] * cache.input_map(j));
    }
    law.G[i] = pt * inv[0];
  }
  return law;
}

DiscreteFeedforwardLaw discrete_brute_force(const PropagatorCache& cache, double a) {
  if (a < 0.0) throw ConfigError("terminal weight must be nonnegative");
  const std::size_t k = cache.steps();
  const auto d = static_cast<Eigen::Index>(cache.state_dim());
  const auto m = static_cast<Eigen::Index>(cache.input_dim());
  if (static_cast<std::size_t>(m) * k > 64) throw ConfigError("brute force limited to k m <= 64");
  const double dt = cache.grid().dt();
  const double se = std::sqrt(cache.epsilon());

  const auto f_index = [&](std::size_t i, std::size_t j) {
    return static_cast<Eigen::Index>(i * (i + 1) / 2 + j) * m * m;
  };
  const Eigen::Index f_count = f_index(k, 0);
  const auto g_index = [&](std::size_t i) {
    return f_count + static_cast<Eigen::Index>(i) * m * d;
  };
  const Eigen::Index n = g_index(k);

  const Eigen::Index rows = static_cast<Eigen::Index>(k) * m * d + f_count + d * d + n - f_count;
  Matrix lhs = Matrix::Zero(rows, n);
  Vector rhs = Vector::Zero(rows);
  Eigen::Index r = 0;

  // terminal noise response: sqrt(a dt) (sum_{i>=j} Phi_i F_ij dt + sqrt(eps) Phi_j) e_c
  const double sa = std::sqrt(a * dt);
  for (std::size_t j = 0; j < k; ++j) {
    for (Eigen::Index c = 0; c < m; ++c) {
      for (std::size_t i = j; i < k; ++i) {
        lhs.block(r, f_index(i, j) + c * m, d, m) = sa * dt * cache.input_map(i);
      }
      rhs.segment(r, d) = -sa * se * cache.input_map(j).col(c);
      r += d;
    }
  }
  // control energy of the noise part: 1/2 dt^2 |F|^2
  for (Eigen::Index p = 0; p < f_count; ++p) lhs(r++, p) = dt / std::sqrt(2.0);
  // terminal bias for xf = e_c: sqrt(a) (sum_i Phi_i G_i dt - I) e_c
  for (Eigen::Index c = 0; c < d; ++c) {
    for (std::size_t i = 0; i < k; ++i) {
      lhs.block(r, g_index(i) + c * m, d, m) = std::sqrt(a) * dt * cache.input_map(i);
    }
    rhs(r + c) = std::sqrt(a);
    r += d;
  }
  // control energy of the target part: 1/2 dt |G_i e_c|^2
  for (Eigen::Index p = f_count; p < n; ++p) lhs(r++, p) = std::sqrt(dt / 2.0);

  const Matrix normal = symmetrize(lhs.transpose() * lhs);
  const Vector b = lhs.transpose() * rhs;
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(normal, Eigen::EigenvaluesOnly);
  const double cond = eig.eigenvalues().maxCoeff() / eig.eigenvalues().minCoeff();
  if (!(cond < 1e12)) {
    std::cerr << "warning: brute-force normal matrix condition number " << cond << '\n';
  }
  const Eigen::LLT<Matrix> llt(normal);
  if (llt.info() != Eigen::Success) throw NotSpd();
  const Vector x = llt.solve(b);

  DiscreteFeedforwardLaw law = empty_law(k, a);
  law.condition = cond;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      law.F[i].push_back(Eigen::Map<const Matrix>(x.data() + f_index(i, j), m, m));
    }
    law.G[i] = Eigen::Map<const Matrix>(x.data() + g_index(i), m, d);
  }
  return law;
}

namespace {

struct Moments {
  double noise = 0.0;    // sum_j dt |C_j|_F^2
  Vector bias;           // (sum_i Phi_i G_i dt - I) xf
  double energy = 0.0;   // 1/2 dt E sum |u_i|^2
};

Moments law_moments(const PropagatorCache& cache, const DiscreteFeedforwardLaw& law,
                    const Vector& xf) {
  const std::size_t k = cache.steps();
  if (law.k != k) throw ConfigError("law and grid differ in step count");
  const double dt = cache.grid().dt();
  const double se = std::sqrt(cache.epsilon());
  Moments out;
  for (std::size_t j = 0; j < k; ++j) {
    Matrix c = se * cache.input_map(j);
    for (std::size_t i = j; i < k; ++i) c += dt * cache.input_map(i) * law.F[i][j];
    out.noise += dt * c.squaredNorm();
  }
  out.bias = -xf;
  for (std::size_t i = 0; i < k; ++i) {
    out.bias += dt * cache.input_map(i) * (law.G[i] * xf);
    double e = (law.G[i] * xf).squaredNorm();
    for (std::size_t j = 0; j <= i; ++j) e += dt * law.F[i][j].squaredNorm();
    out.energy += 0.5 * dt * e;
  }
  return out;
}

}  // namespace

double discrete_objective(const PropagatorCache& cache, const DiscreteFeedforwardLaw& law,
                          const Vector& xf) {
  const Moments mo = law_moments(cache, law, xf);
  return law.a * (mo.noise + mo.bias.squaredNorm()) + mo.energy;
}

double discrete_terminal_miss(const PropagatorCache& cache, const DiscreteFeedforwardLaw& law,
                              const Vector& xf) {
  const Moments mo = law_moments(cache, law, xf);
  return mo.noise + mo.bias.squaredNorm();
}

double max_block_deviation(const DiscreteFeedforwardLaw& x, const DiscreteFeedforwardLaw& y) {
  if (x.k != y.k) throw ConfigError("laws differ in step count");
  double dev = 0.0;
  for (std::size_t i = 0; i < x.k; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      dev = std::max(dev, (x.F[i][j] - y.F[i][j]).cwiseAbs().maxCoeff());
    }
    dev = std::max(dev, (x.G[i] - y.G[i]).cwiseAbs().maxCoeff());
  }
  return dev;
}

Trajectory markov_bridge_oracle(const Matrix& a, const Matrix& b, double epsilon,
                                const Vector& x0, const Vector& xf, std::uint64_t seed,
                                const TimeGrid& grid) {
  const EnsembleSystem ens = constant_family(a, b, epsilon, grid.tf());
  const PropagatorCache cache(ens, grid, Exec::serial);
  MarkovFeedbackController ctrl(a, b, epsilon, grid, Vector::Zero(1), Matrix(xf));
  const NoiseHistory hist = sample_noise(seed, grid, static_cast<std::size_t>(b.cols()));
  Trajectory tr = simulate(cache, ctrl, x0, hist);
  tr.terminal_error = (tr.terminal() - xf).norm();
  return tr;
}

std::vector<Vector> brownian_bridge_path(const Vector& x0, const Vector& xf, double epsilon,
                                         const NoiseHistory& hist) {
  const TimeGrid& g = hist.grid();
  const double tf = g.tf();
  const double se = std::sqrt(epsilon);
  std::vector<Vector> out;
  out.reserve(g.steps() + 1);
  for (std::size_t n = 0; n <= g.steps(); ++n) {
    const double t = g.time(n);
    Vector x = (1.0 - t / tf) * x0 + (t / tf) * xf;
    for (std::size_t i = 0; i < n; ++i) {
      x += se * ((tf - t) / (tf - g.time(i))) * hist.increment(i);
    }
    out.push_back(std::move(x));
  }
  return out;
}

}  // namespace ebridge
