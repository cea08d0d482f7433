#include <random>

#include <gtest/gtest.h>

#include "rrnn/numerics.hpp"

using namespace rrnn;

namespace {

// Determinant by cofactor expansion along the first row.
double cofactor_det(const MatrixXd& a) {
  const Eigen::Index n = a.rows();
  if (n == 1) return a(0, 0);
  double det = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    MatrixXd minor(n - 1, n - 1);
    for (Eigen::Index r = 1; r < n; ++r) {
      Eigen::Index c2 = 0;
      for (Eigen::Index c = 0; c < n; ++c) {
        if (c == j) continue;
        minor(r - 1, c2++) = a(r, c);
      }
    }
    det += ((j % 2 == 0) ? 1.0 : -1.0) * a(0, j) * cofactor_det(minor);
  }
  return det;
}

MatrixXd random_spd(std::mt19937_64& rng, Eigen::Index n, double shift) {
  std::normal_distribution<double> nd;
  MatrixXd g(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) g(i, j) = nd(rng);
  return g * g.transpose() + shift * MatrixXd::Identity(n, n);
}

}  // namespace

TEST(Cholesky, LogdetMatchesCofactorDeterminant) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 1 + trial % 6;
    const MatrixXd a = random_spd(rng, n, 0.5);
    const PdReport rep = cholesky_logdet(SymMatrix(a));
    ASSERT_TRUE(rep.is_pd);
    EXPECT_NEAR(rep.logdet, std::log(cofactor_det(a)), 1e-10 * std::max(1.0, std::abs(rep.logdet)));
  }
}

TEST(Cholesky, FactorReconstructsMatrix) {
  std::mt19937_64 rng(3);
  const MatrixXd a = random_spd(rng, 8, 0.1);
  const PdReport rep = cholesky_logdet(SymMatrix(a));
  ASSERT_TRUE(rep.is_pd);
  EXPECT_LT((rep.lower * rep.lower.transpose() - a).norm(), 1e-12 * a.norm());
}

TEST(Cholesky, IdentityAndSmallExamples) {
  EXPECT_DOUBLE_EQ(cholesky_logdet(SymMatrix::identity(5)).logdet, 0.0);
  MatrixXd a(2, 2);
  a << 4, 2, 2, 3;
  EXPECT_NEAR(cholesky_logdet(SymMatrix(a)).logdet, std::log(8.0), 1e-15);
}

TEST(Cholesky, ReportsFailingPivot) {
  MatrixXd a = MatrixXd::Identity(3, 3);
  a(2, 2) = -1.0;
  const PdReport rep = cholesky_logdet(SymMatrix(a));
  EXPECT_FALSE(rep.is_pd);
  EXPECT_EQ(rep.failed_pivot, 2);
}

TEST(Cholesky, RejectsNonFinite) {
  MatrixXd a = MatrixXd::Identity(2, 2);
  a(0, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(cholesky_logdet(SymMatrix(a)), InvalidInput);
}

TEST(SymMatrix, SymmetrizesExactly) {
  MatrixXd a(2, 2);
  a << 1, 0.1, 0.3, 2;
  const SymMatrix s(a);
  EXPECT_EQ(s(0, 1), s(1, 0));
  EXPECT_DOUBLE_EQ(s(0, 1), 0.2);
  EXPECT_THROW(SymMatrix(MatrixXd::Zero(2, 3)), InvalidInput);
}

TEST(SolvePd, SmallResidual) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const MatrixXd a = random_spd(rng, 12, 1e-2);
    const MatrixXd b = MatrixXd::Random(12, 3);
    const MatrixXd x = solve_pd(SymMatrix(a), b);
    EXPECT_LT((a * x - b).norm(), 1e-9 * (a.norm() * x.norm() + b.norm()));
  }
  EXPECT_THROW(solve_pd(SymMatrix(-MatrixXd::Identity(2, 2)), MatrixXd::Ones(2, 1)),
               NotPositiveDefinite);
  EXPECT_THROW(solve_pd(SymMatrix::identity(2), MatrixXd::Ones(3, 1)), InvalidInput);
}

TEST(PdMargin, ThresholdsAtEpsilon) {
  EXPECT_TRUE(pd_margin(SymMatrix::identity(3).shifted(-1.0 + 2e-8)));
  EXPECT_FALSE(pd_margin(SymMatrix::identity(3).shifted(-1.0 + 0.5e-8)));
  EXPECT_FALSE(pd_margin(SymMatrix::identity(3).shifted(-1.0)));
  EXPECT_TRUE(pd_margin(SymMatrix::identity(3).shifted(-1.0), 0.0) == false);
  EXPECT_THROW(pd_margin(SymMatrix::identity(2), -1.0), InvalidInput);
}

TEST(PdMargin, AgreesWithEigenvalues) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  int agree = 0;
  for (int trial = 0; trial < 200; ++trial) {
    MatrixXd g(6, 6);
    for (Eigen::Index i = 0; i < 6; ++i)
      for (Eigen::Index j = 0; j < 6; ++j) g(i, j) = nd(rng);
    const SymMatrix s(g + g.transpose() + 4.0 * MatrixXd::Identity(6, 6));
    const double lmin = min_eigenvalue(s);
    if (std::abs(lmin - kStrictEps) < 1e-10) continue;
    agree += pd_margin(s) == (lmin > kStrictEps);
  }
  EXPECT_EQ(agree, 200);
}
