#include "ebridge/propagator_cache.hpp"

#include "ebridge/error.hpp"

#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ebridge {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

std::pair<Matrix, Matrix> zero_order_hold(const Matrix& a, const Matrix& b, double t) {
  const Eigen::Index d = a.rows();
  const Eigen::Index m = b.cols();
  Matrix aug = Matrix::Zero(d + m, d + m);
  aug.topLeftCorner(d, d) = a;
  aug.topRightCorner(d, m) = b;
  const Matrix e = mat_exp(aug, t);
  return {e.topLeftCorner(d, d), e.topRightCorner(d, m)};
}

PropagatorCache::PropagatorCache(const EnsembleSystem& ens, const TimeGrid& grid, Exec exec)
    : grid_(grid), d_(ens.state_dim()), m_(ens.input_dim()), epsilon_(ens.epsilon()) {
  if (std::abs(grid.tf() - ens.tf()) > 1e-12 * ens.tf()) {
    throw ConfigError("propagator cache: grid horizon differs from ensemble tf");
  }
  const std::size_t k = grid.steps();
  const double dt = grid.dt();
  const auto d = static_cast<Eigen::Index>(d_);
  const auto m = static_cast<Eigen::Index>(m_);
  const std::size_t nodes = ens.node_count();

  constexpr std::size_t kCellPoints = 8;
  const Quadrature cell = gauss_legendre(kCellPoints, 0.0, 1.0);

  node_weights_.resize(nodes);
  node_transition_.resize(nodes);
  node_input_.resize(nodes);
  // offset_[j][q] = exp(A_j (1 - c_q) dt) B_j, so that
  // exp(A_j (tf - t_i - c_q dt)) B_j = exp(A_j (k-1-i) dt) offset_[j][q].
  std::vector<std::vector<Matrix>> offset(nodes);
  for (std::size_t j = 0; j < nodes; ++j) {
    node_weights_[j] = ens.weight(j);
    auto [e, gam] = zero_order_hold(ens.a(j), ens.b(j), dt);
    node_transition_[j] = std::move(e);
    node_input_[j] = std::move(gam);
    offset[j].reserve(kCellPoints);
    for (std::size_t q = 0; q < kCellPoints; ++q) {
      offset[j].push_back(mat_exp(ens.a(j), (1.0 - cell.nodes[q]) * dt) * ens.b(j));
    }
  }

  state_map_.assign(k + 1, Matrix::Zero(d, d));
  input_map_.assign(k + 1, Matrix::Zero(d, m));
  step_input_map_.assign(k, Matrix::Zero(d, m));
  std::vector<Matrix> cell_gram(k, Matrix::Zero(d, d));

  // Row n holds exp(A_j n dt) for every node; all writes for a given n land in
  // distinct slots, and node order is fixed, so serial and parallel agree bitwise.
  const auto fill = [&](std::ptrdiff_t sn) {
    const auto n = static_cast<std::size_t>(sn);
    std::vector<Matrix> phi_pts(kCellPoints, Matrix::Zero(d, m));
    for (std::size_t j = 0; j < nodes; ++j) {
      const Matrix e = mat_exp(ens.a(j), static_cast<double>(n) * dt);
      const double w = ens.weight(j);
      state_map_[n] += w * e;
      input_map_[k - n] += w * (e * ens.b(j));
      if (n < k) {
        step_input_map_[k - 1 - n] += (w / dt) * (e * node_input_[j]);
        for (std::size_t q = 0; q < kCellPoints; ++q) {
          phi_pts[q] += w * (e * offset[j][q]);
        }
      }
    }
    if (n < k) {
      Matrix g = Matrix::Zero(d, d);
      for (std::size_t q = 0; q < kCellPoints; ++q) {
        g += (cell.weights[q] * dt) * (phi_pts[q] * phi_pts[q].transpose());
      }
      cell_gram[k - 1 - n] = std::move(g);
    }
  };
  const auto count = static_cast<std::ptrdiff_t>(k + 1);
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t n = 0; n < count; ++n) {
      fill(n);
    }
  } else {
    for (std::ptrdiff_t n = 0; n < count; ++n) {
      fill(n);
    }
  }

  gramian_.assign(k + 1, Matrix::Zero(d, d));
  step_gramian_.assign(k + 1, Matrix::Zero(d, d));
  for (std::size_t i = k; i-- > 0;) {
    gramian_[i] = symmetrize(gramian_[i + 1] + cell_gram[i]);
    const Matrix& p = step_input_map_[i];
    step_gramian_[i] = symmetrize(step_gramian_[i + 1] + dt * (p * p.transpose()));
  }

  min_eig_gramian0_ = min_eigenvalue(gramian_[0]);
  min_eig_step_gramian0_ = min_eigenvalue(step_gramian_[0]);
  if (min_eig_step_gramian0_ <= controllability_tolerance(step_gramian_[0]) ||
      min_eig_gramian0_ <= controllability_tolerance(gramian_[0])) {
    throw NotControllable("on [0, tf]");
  }

  step_gramian_inv_.resize(k);
  step_gramian_logdet_.resize(k);
  step_gramian_regular_.resize(k);
  gain_.resize(k);
  const double tol0 = controllability_tolerance(step_gramian_[0]);
  for (std::size_t i = 0; i < k; ++i) {
    const Matrix& g = step_gramian_[i];
    Eigen::LLT<Matrix> llt(g);
    const bool regular =
        llt.info() == Eigen::Success && min_eigenvalue(g) > controllability_tolerance(g);
    step_gramian_regular_[i] = regular ? 1 : 0;
    if (regular) {
      step_gramian_inv_[i] = symmetrize(llt.solve(Matrix::Identity(d, d)));
      step_gramian_logdet_[i] =
          2.0 * llt.matrixLLT().diagonal().array().log().sum();
    } else {
      step_gramian_inv_[i] = sym_pinv(g, std::max(controllability_tolerance(g), 1e-14 * tol0));
      step_gramian_logdet_[i] = -std::numeric_limits<double>::infinity();
    }
    gain_[i] = step_gramian_inv_[i] * step_input_map_[i];
  }
}

}  // namespace ebridge
