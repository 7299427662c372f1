#include "ebridge/ensemble.hpp"

#include "ebridge/error.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <utility>

namespace ebridge {

TimeGrid::TimeGrid(double tf, std::size_t k) : tf_(tf), k_(k), dt_(tf / static_cast<double>(k)) {
  if (!(tf > 0.0) || !std::isfinite(tf)) {
    throw ConfigError("time grid needs tf > 0");
  }
  if (k < 2) {
    throw ConfigError("time grid needs at least 2 steps");
  }
}

EnsembleSystem::EnsembleSystem(std::string name, std::vector<double> theta_nodes,
                               std::vector<double> theta_weights, std::vector<Matrix> a,
                               std::vector<Matrix> b, double epsilon, double tf)
    : name_(std::move(name)),
      nodes_(std::move(theta_nodes)),
      weights_(std::move(theta_weights)),
      a_(std::move(a)),
      b_(std::move(b)),
      epsilon_(epsilon),
      tf_(tf) {
  if (nodes_.empty() || nodes_.size() != weights_.size() || nodes_.size() != a_.size() ||
      nodes_.size() != b_.size()) {
    throw ConfigError("ensemble: node, weight and matrix tables must have equal nonzero length");
  }
  d_ = static_cast<std::size_t>(a_.front().rows());
  m_ = static_cast<std::size_t>(b_.front().cols());
  if (d_ < 1 || m_ < 1) {
    throw ConfigError("ensemble: dimensions must be at least 1");
  }
  for (std::size_t j = 0; j < nodes_.size(); ++j) {
    if (a_[j].rows() != a_[j].cols() || static_cast<std::size_t>(a_[j].rows()) != d_ ||
        static_cast<std::size_t>(b_[j].rows()) != d_ ||
        static_cast<std::size_t>(b_[j].cols()) != m_) {
      throw ConfigError("ensemble: inconsistent matrix shapes at node " + std::to_string(j));
    }
    if (!std::isfinite(a_[j].norm()) || !std::isfinite(b_[j].norm())) {
      throw ConfigError("ensemble: non-finite matrix at node " + std::to_string(j));
    }
    if (!(weights_[j] > 0.0) || nodes_[j] < 0.0 || nodes_[j] > 1.0) {
      throw ConfigError("ensemble: nodes must lie in [0,1] with positive weights");
    }
  }
  const double total = std::accumulate(weights_.begin(), weights_.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-12) {
    throw ConfigError("ensemble: theta weights must sum to 1");
  }
  if (!(epsilon_ >= 0.0) || !std::isfinite(epsilon_)) {
    throw ConfigError("ensemble: epsilon must be finite and nonnegative");
  }
  if (!(tf_ > 0.0) || !std::isfinite(tf_)) {
    throw ConfigError("ensemble: tf must be positive");
  }
}

EnsembleSystem EnsembleSystem::with_epsilon(double epsilon) const {
  return EnsembleSystem(name_, nodes_, weights_, a_, b_, epsilon, tf_);
}

namespace {

Quadrature unit_nodes(std::size_t n) {
  Quadrature q = gauss_legendre(n, 0.0, 1.0);
  // Renormalize so the weights sum to one to machine precision.
  const double total = std::accumulate(q.weights.begin(), q.weights.end(), 0.0);
  for (double& w : q.weights) {
    w /= total;
  }
  return q;
}

}  // namespace

EnsembleSystem affine_family(std::string name, const Matrix& a0, const Matrix& a1,
                             const Matrix& b0, const Matrix& b1, double epsilon, double tf,
                             std::size_t nodes) {
  const Quadrature q = unit_nodes(nodes);
  std::vector<Matrix> a;
  std::vector<Matrix> b;
  for (double th : q.nodes) {
    a.push_back(a0 + th * a1);
    b.push_back(b0 + th * b1);
  }
  return EnsembleSystem(std::move(name), q.nodes, q.weights, std::move(a), std::move(b),
                        epsilon, tf);
}

EnsembleSystem scalar_decay(double epsilon, double tf, std::size_t nodes) {
  return affine_family("scalar-decay", Matrix::Zero(1, 1), Matrix::Constant(1, 1, -1.0),
                       Matrix::Ones(1, 1), Matrix::Zero(1, 1), epsilon, tf, nodes);
}

EnsembleSystem planar_rotation(double epsilon, double tf, std::size_t nodes) {
  Matrix gen(2, 2);
  gen << 0.0, -1.0, 1.0, 0.0;
  return affine_family("planar-rotation", Matrix::Zero(2, 2), gen, Matrix::Identity(2, 2),
                       Matrix::Zero(2, 2), epsilon, tf, nodes);
}

EnsembleSystem constant_family(const Matrix& a, const Matrix& b, double epsilon, double tf) {
  return EnsembleSystem("constant", {0.5}, {1.0}, {a}, {b}, epsilon, tf);
}

Matrix averaged_state_map(const EnsembleSystem& ens, double t) {
  if (t < 0.0 || t > ens.tf()) {
    throw RangeError("averaged_state_map: t outside [0, tf]");
  }
  const auto d = static_cast<Eigen::Index>(ens.state_dim());
  Matrix m = Matrix::Zero(d, d);
  for (std::size_t j = 0; j < ens.node_count(); ++j) {
    m += ens.weight(j) * mat_exp(ens.a(j), t);
  }
  return m;
}

Matrix averaged_input_map(const EnsembleSystem& ens, double t, double tau) {
  if (tau > t || tau < 0.0 || t > ens.tf()) {
    throw RangeError("averaged_input_map: need 0 <= tau <= t <= tf");
  }
  const auto d = static_cast<Eigen::Index>(ens.state_dim());
  const auto m = static_cast<Eigen::Index>(ens.input_dim());
  Matrix phi = Matrix::Zero(d, m);
  for (std::size_t j = 0; j < ens.node_count(); ++j) {
    phi += ens.weight(j) * (mat_exp(ens.a(j), t - tau) * ens.b(j));
  }
  return phi;
}

double controllability_tolerance(const Matrix& g) {
  return 1e-10 * g.trace() / static_cast<double>(g.rows());
}

Matrix gramian(const EnsembleSystem& ens, double t, double s, std::size_t panels,
               std::size_t points) {
  if (!(s < t) || s < 0.0 || t > ens.tf()) {
    throw RangeError("gramian: need 0 <= s < t <= tf");
  }
  if (panels == 0 || points == 0) {
    throw ConfigError("gramian: panels and points must be positive");
  }
  const auto d = static_cast<Eigen::Index>(ens.state_dim());
  const Quadrature ref = gauss_legendre(points, 0.0, 1.0);
  const double h = (t - s) / static_cast<double>(panels);
  Matrix g = Matrix::Zero(d, d);
  for (std::size_t p = 0; p < panels; ++p) {
    const double lo = s + static_cast<double>(p) * h;
    for (std::size_t q = 0; q < points; ++q) {
      const double tau = lo + ref.nodes[q] * h;
      const Matrix phi = averaged_input_map(ens, t, std::min(tau, t));
      g += (ref.weights[q] * h) * (phi * phi.transpose());
    }
  }
  g = symmetrize(g);
  if (min_eigenvalue(g) <= controllability_tolerance(g)) {
    throw NotControllable("on [" + std::to_string(s) + ", " + std::to_string(t) + "]");
  }
  return g;
}

double gaussian_logpdf(const Vector& mean, const Matrix& cov, const Vector& x) {
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw NotSpd();
  }
  const double d = static_cast<double>(mean.size());
  const Vector z = llt.matrixL().solve(x - mean);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * d * std::log(2.0 * std::numbers::pi) - 0.5 * logdet - 0.5 * z.squaredNorm();
}

}  // namespace ebridge
