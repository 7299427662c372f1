#include "ebridge/ensemble.hpp"
#include "ebridge/error.hpp"
#include "ebridge/linalg.hpp"
#include "ebridge/propagator_cache.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace ebridge;

namespace {

// Independent high-precision quadratures of the scalar-decay and rotation Gramians.
constexpr double kDecayGramian = 0.645751112851244261911664407803;
constexpr double kRotationGramian = 0.972770752470645464471000269562;

Matrix rotation_block(double c, double s) {
  Matrix m(2, 2);
  m << c, -s, s, c;
  return m;
}

double rel_frobenius(const Matrix& x, const Matrix& ref) {
  return (x - ref).norm() / std::max(ref.norm(), 1e-300);
}

}  // namespace

TEST(MatExp, ZeroTimeIsIdentity) {
  Matrix a(3, 3);
  a << 1, 2, 3, -4, 5, 6, 7, -8, 9;
  EXPECT_TRUE(mat_exp(a, 0.0).isApprox(Matrix::Identity(3, 3), 1e-15));
}

TEST(MatExp, RotationGenerator) {
  Matrix a(2, 2);
  a << 0, -1, 1, 0;
  const Matrix e = mat_exp(a, 1.0);
  const Matrix ref = rotation_block(std::cos(1.0), std::sin(1.0));
  EXPECT_LT((e - ref).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(MatExp, ScalarMatchesSeries) {
  Matrix a(1, 1);
  a << -1.0;
  double series = 0.0;
  double term = 1.0;
  for (int n = 0; n < 30; ++n) {
    series += term;
    term *= -2.0 / static_cast<double>(n + 1);
  }
  EXPECT_NEAR(mat_exp(a, 2.0)(0, 0), series, 1e-15);
  EXPECT_NEAR(mat_exp(a, 2.0)(0, 0), std::exp(-2.0), 1e-16);
}

TEST(MatExp, RejectsNonFinite) {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 1) = std::nan("");
  EXPECT_THROW(mat_exp(a), NumericalError);
}

TEST(GaussLegendre, WeightsSumAndPolynomialExactness) {
  const Quadrature q = gauss_legendre(8, 0.0, 1.0);
  double sum = 0.0;
  double p15 = 0.0;
  for (std::size_t i = 0; i < q.nodes.size(); ++i) {
    sum += q.weights[i];
    p15 += q.weights[i] * std::pow(q.nodes[i], 15);
  }
  EXPECT_NEAR(sum, 1.0, 1e-15);
  EXPECT_NEAR(p15, 1.0 / 16.0, 1e-15);
}

TEST(Ensemble, ThetaWeightsSumToOne) {
  for (const EnsembleSystem& e : {scalar_decay(0.1), planar_rotation(0.1)}) {
    double sum = 0.0;
    for (std::size_t j = 0; j < e.node_count(); ++j) sum += e.weight(j);
    EXPECT_NEAR(sum, 1.0, 1e-12);
    EXPECT_EQ(e.node_count(), kDefaultThetaNodes);
  }
}

TEST(Ensemble, ConstructionRejectsBadInput) {
  const Matrix a = Matrix::Zero(1, 1);
  const Matrix b = Matrix::Ones(1, 1);
  EXPECT_THROW(constant_family(a, b, 0.1, -1.0), ConfigError);
  EXPECT_THROW(constant_family(a, b, -0.1, 1.0), ConfigError);
  EXPECT_THROW(EnsembleSystem("x", {0.5}, {0.7}, {a}, {b}, 0.1, 1.0), ConfigError);
  Matrix inf = a;
  inf(0, 0) = INFINITY;
  EXPECT_THROW(constant_family(inf, b, 0.1), std::exception);
  EXPECT_THROW(TimeGrid(1.0, 1), ConfigError);
}

TEST(AveragedStateMap, ConstantFamilyIsMatrixExponential) {
  Matrix a(2, 2);
  a << -0.4, 1.0, -0.6, -0.2;
  const EnsembleSystem e = constant_family(a, Matrix::Identity(2, 2), 0.1);
  EXPECT_LT((averaged_state_map(e, 0.7) - mat_exp(a, 0.7)).norm(), 1e-14);
}

TEST(AveragedStateMap, ClosedForms) {
  EXPECT_NEAR(averaged_state_map(scalar_decay(0.1), 1.0)(0, 0), 1.0 - std::exp(-1.0), 1e-12);
  const double s1 = std::sin(1.0);
  const double c1 = std::cos(1.0);
  Matrix ref(2, 2);
  ref << s1, c1 - 1.0, 1.0 - c1, s1;
  EXPECT_LT((averaged_state_map(planar_rotation(0.1), 1.0) - ref).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((averaged_state_map(planar_rotation(0.1), 0.0) - Matrix::Identity(2, 2)).norm(), 1e-14);
}

TEST(AveragedInputMap, AtCoincidentTimesIsAveragedB) {
  Matrix a0 = Matrix::Zero(2, 2);
  Matrix a1(2, 2);
  a1 << 0, -1, 1, 0;
  Matrix b0(2, 1);
  b0 << 1, 0;
  Matrix b1(2, 1);
  b1 << 0.5, 2.0;
  const EnsembleSystem e = affine_family("t", a0, a1, b0, b1, 0.1);
  EXPECT_LT((averaged_input_map(e, 0.6, 0.6) - (b0 + 0.5 * b1)).norm(), 1e-14);
}

TEST(AveragedInputMap, ClosedForms) {
  EXPECT_NEAR(averaged_input_map(scalar_decay(0.1), 1.0, 0.0)(0, 0), 1.0 - std::exp(-1.0), 1e-12);
  const double s1 = std::sin(1.0);
  const double c1 = std::cos(1.0);
  Matrix ref(2, 2);
  ref << s1, c1 - 1.0, 1.0 - c1, s1;
  EXPECT_LT((averaged_input_map(planar_rotation(0.1), 1.0, 0.0) - ref).cwiseAbs().maxCoeff(),
            1e-12);
}

TEST(AveragedInputMap, ConstantFamilyReduction) {
  Matrix a(2, 2);
  a << -0.4, 1.0, -0.6, -0.2;
  Matrix b(2, 1);
  b << 1.0, 0.5;
  const EnsembleSystem e = constant_family(a, b, 0.1);
  EXPECT_LT((averaged_input_map(e, 1.0, 0.3) - mat_exp(a, 0.7) * b).norm(), 1e-10);
}

TEST(Gramian, ClosedForms) {
  const Matrix a = Matrix::Zero(2, 2);
  const EnsembleSystem e = constant_family(a, Matrix::Identity(2, 2), 0.1, 2.0);
  EXPECT_LT((gramian(e, 2.0, 0.0, 10) - 2.0 * Matrix::Identity(2, 2)).norm(), 1e-13);
  EXPECT_NEAR(gramian(scalar_decay(0.1), 1.0, 0.0, 100)(0, 0), kDecayGramian, 1e-12);
  const Matrix g = gramian(planar_rotation(0.1), 1.0, 0.0, 100);
  EXPECT_LT((g - kRotationGramian * Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Gramian, Additivity) {
  const EnsembleSystem e = planar_rotation(0.1);
  const Matrix whole = gramian(e, 1.0, 0.0, 200);
  // int_s^r Phi(t, tau) Phi(t, tau)^T dtau with the same panel rule
  Matrix piece = Matrix::Zero(2, 2);
  const Quadrature q = gauss_legendre(8, 0.0, 0.4);
  for (std::size_t i = 0; i < q.nodes.size(); ++i) {
    const Matrix p = averaged_input_map(e, 1.0, q.nodes[i]);
    piece += q.weights[i] * p * p.transpose();
  }
  const Matrix tail = gramian(e, 1.0, 0.4, 120);
  EXPECT_LT(rel_frobenius(tail + piece, whole), 1e-8);
}

TEST(Gramian, NotControllable) {
  Matrix b(2, 1);
  b << 1.0, 0.0;
  const EnsembleSystem e = constant_family(Matrix::Zero(2, 2), b, 0.1);
  EXPECT_THROW(gramian(e, 1.0, 0.0, 10), NotControllable);
}

TEST(Gramian, NodeDoublingConverges) {
  Matrix a0(2, 2);
  a0 << -0.2, 0.7, -0.4, -0.1;
  Matrix a1(2, 2);
  a1 << 0.0, -3.0, 3.0, 0.0;
  const Matrix b = Matrix::Identity(2, 2);
  const auto state_map = [&](std::size_t n) {
    return averaged_state_map(affine_family("t", a0, a1, b, Matrix::Zero(2, 2), 0.1, 1.0, n),
                              1.0);
  };
  const double d1 = (state_map(4) - state_map(2)).norm();
  const double d2 = (state_map(8) - state_map(4)).norm();
  EXPECT_LT(d2, d1);
}

TEST(GaussianLogpdf, Examples) {
  const Vector zero = Vector::Zero(1);
  EXPECT_NEAR(gaussian_logpdf(zero, Matrix::Identity(1, 1), zero), -0.9189385332046727, 1e-15);
  Vector mean(2);
  mean << 0.3, -1.0;
  const Matrix cov = 0.5 * Matrix::Identity(2, 2);
  const double top = gaussian_logpdf(mean, cov, mean);
  Vector off = mean;
  off(0) += 0.1;
  EXPECT_LT(gaussian_logpdf(mean, cov, off), top);
  EXPECT_NEAR(top - gaussian_logpdf(mean, 4.0 * cov, mean), 2.0 * std::log(2.0), 1e-14);
  EXPECT_THROW(gaussian_logpdf(mean, -cov, mean), NotSpd);
}

TEST(PropagatorCache, InvariantsOnRotation) {
  const EnsembleSystem e = planar_rotation(0.1);
  const PropagatorCache c(e, TimeGrid(1.0, 100), Exec::serial);
  EXPECT_LT((c.state_map(0) - Matrix::Identity(2, 2)).norm(), 1e-14);
  for (std::size_t i = 0; i <= c.steps(); ++i) {
    const Matrix& g = c.gramian(i);
    EXPECT_LE((g - g.transpose()).norm(), 1e-10 * std::max(1e-300, g.norm()));
  }
  for (std::size_t i = 0; i + 1 <= c.steps(); ++i) {
    EXPECT_GE(min_eigenvalue(c.gramian(i) - c.gramian(i + 1)), -1e-14);
    EXPECT_GE(min_eigenvalue(c.step_gramian(i) - c.step_gramian(i + 1)), -1e-14);
  }
  EXPECT_NEAR(c.gramian(0)(0, 0), kRotationGramian, 1e-12);
  // the step Gramian realizes the same covariance to O(dt^2)
  EXPECT_LT((c.step_gramian(0) - c.gramian(0)).norm(), 1e-4);
}

TEST(PropagatorCache, StepMapsMatchZeroOrderHold) {
  Matrix a(1, 1);
  a << -0.7;
  const EnsembleSystem e = constant_family(a, Matrix::Ones(1, 1), 0.2);
  const TimeGrid grid(1.0, 10);
  const PropagatorCache c(e, grid, Exec::serial);
  // (1/dt) int_{t_i}^{t_{i+1}} e^{a(1 - tau)} dtau
  const double dt = grid.dt();
  const double t1 = grid.time(4);
  const double al = a(0, 0);
  const double ref = (std::exp(al * (1.0 - t1)) - std::exp(al * (1.0 - t1 - dt))) / (al * dt);
  EXPECT_NEAR(c.step_input_map(4)(0, 0), ref, 1e-14);
  const auto [e_dt, gam] = zero_order_hold(a, Matrix::Ones(1, 1), dt);
  EXPECT_NEAR(e_dt(0, 0), std::exp(-0.7 * dt), 1e-15);
  EXPECT_NEAR(gam(0, 0), (std::exp(-0.7 * dt) - 1.0) / -0.7, 1e-15);
}

TEST(PropagatorCache, ZeroOrderHoldRemovableSingularity) {
  const auto [e_dt, gam] = zero_order_hold(Matrix::Zero(1, 1), Matrix::Ones(1, 1), 0.25);
  EXPECT_DOUBLE_EQ(e_dt(0, 0), 1.0);
  EXPECT_NEAR(gam(0, 0), 0.25, 1e-16);
}

TEST(PropagatorCache, SerialAndParallelAreBitwiseEqual) {
  const EnsembleSystem e = planar_rotation(0.1);
  const TimeGrid grid(1.0, 200);
  const PropagatorCache s(e, grid, Exec::serial);
  const PropagatorCache p(e, grid, Exec::parallel);
  for (std::size_t i = 0; i < grid.steps(); ++i) {
    EXPECT_EQ(s.gramian(i), p.gramian(i));
    EXPECT_EQ(s.step_gramian(i), p.step_gramian(i));
    EXPECT_EQ(s.feedforward_gain(i), p.feedforward_gain(i));
    EXPECT_EQ(s.input_map(i), p.input_map(i));
  }
}

TEST(PropagatorCache, RankDeficientTailUsesPseudoInverse) {
  // d = 2 > m = 1: the last cell alone cannot span the plane
  Matrix a(2, 2);
  a << 0, 1, 0, 0;
  Matrix b(2, 1);
  b << 0, 1;
  const EnsembleSystem e = constant_family(a, b, 0.1);
  const PropagatorCache c(e, TimeGrid(1.0, 50), Exec::serial);
  EXPECT_TRUE(c.step_gramian_regular(0));
  EXPECT_FALSE(c.step_gramian_regular(c.steps() - 1));
  EXPECT_TRUE(all_finite(c.step_gramian_inverse(c.steps() - 1)));
}
