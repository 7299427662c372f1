#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace ebridge {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Matrix exponential e^{A t} by scaling and squaring with a degree-13 Padé
/// approximant. Throws NumericalError("invalid matrix") on non-finite input.
Matrix mat_exp(const Matrix& a, double t = 1.0);

/// Gauss-Legendre nodes and weights on [lo, hi].
struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};
Quadrature gauss_legendre(std::size_t n, double lo = -1.0, double hi = 1.0);

/// (M + M^T) / 2.
inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

/// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue(const Matrix& sym);

/// Inverse of a symmetric matrix via its eigendecomposition; eigenvalues at
/// or below `cutoff` are dropped (Moore-Penrose on the numerical range).
Matrix sym_pinv(const Matrix& sym, double cutoff);

bool all_finite(const Matrix& m);

}  // namespace ebridge
