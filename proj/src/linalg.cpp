#include "ebridge/linalg.hpp"

#include "ebridge/error.hpp"

#include <boost/math/special_functions/legendre.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>

namespace ebridge {

bool all_finite(const Matrix& m) { return m.allFinite(); }

Matrix mat_exp(const Matrix& a, double t) {
  if (a.rows() != a.cols() || !std::isfinite(t) || !a.allFinite()) {
    throw NumericalError("invalid matrix");
  }
  if (a.rows() == 1) {
    return Matrix::Constant(1, 1, std::exp(a(0, 0) * t));
  }
  return (a * t).exp();
}

Quadrature gauss_legendre(std::size_t n, double lo, double hi) {
  if (n == 0) throw ConfigError("quadrature needs at least one node");
  const int order = static_cast<int>(n);
  // nonnegative roots of P_n in ascending order
  const std::vector<double> roots = boost::math::legendre_p_zeros<double>(order);
  const double half = 0.5 * (hi - lo);
  const double mid = 0.5 * (hi + lo);
  Quadrature q;
  q.nodes.resize(n);
  q.weights.resize(n);
  for (std::size_t j = 0; j < roots.size(); ++j) {
    const double x = roots[j];
    const double dp = boost::math::legendre_p_prime<double>(order, x);
    const double w = half * 2.0 / ((1.0 - x * x) * dp * dp);
    const std::size_t k = n / 2 + j;
    q.nodes[k] = mid + half * x;
    q.weights[k] = w;
    q.nodes[n - 1 - k] = mid - half * x;
    q.weights[n - 1 - k] = w;
  }
  return q;
}

double min_eigenvalue(const Matrix& sym) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

Matrix sym_pinv(const Matrix& sym, double cutoff) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  Vector inv = es.eigenvalues();
  for (Eigen::Index i = 0; i < inv.size(); ++i) {
    inv(i) = inv(i) > cutoff ? 1.0 / inv(i) : 0.0;
  }
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace ebridge
