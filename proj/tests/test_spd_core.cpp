#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "geodyn/spd_core.hpp"
#include "support/oracles.hpp"

using namespace geodyn;

namespace {

Matrix m2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

}  // namespace

TEST(Symmetrize, AveragesOffDiagonalPair) {
  EXPECT_EQ(symmetrize(m2(1, 2, 0, 1)).matrix(), m2(1, 1, 1, 1));
}

TEST(Symmetrize, SymmetricInputUnchanged) {
  const Matrix s = m2(3, -1, -1, 2);
  EXPECT_EQ(symmetrize(s).matrix(), s);
}

TEST(Symmetrize, SkewPartCancels) { EXPECT_EQ(symmetrize(m2(0, 4, -4, 0)).matrix(), Matrix::Zero(2, 2)); }

TEST(Symmetrize, NonSquareIsDimensionError) { EXPECT_THROW(symmetrize(Matrix::Zero(2, 3)), DimensionError); }

TEST(SpdMatrix, RejectsAsymmetricAndIndefinite) {
  EXPECT_THROW(SpdMatrix(m2(1, 0.5, 0, 1)), DomainError);
  EXPECT_THROW(SpdMatrix(m2(1, 2, 2, 1)), DomainError);
  EXPECT_THROW(SpdMatrix(Matrix::Zero(2, 3)), DimensionError);
  EXPECT_NO_THROW(SpdMatrix(m2(2, 1, 1, 2)));
}

TEST(SymEig, IdentityUnderSignRule) {
  const auto e = sym_eig(SymMatrix(Matrix::Identity(2, 2)));
  EXPECT_EQ(e.values, Vector::Ones(2));
  EXPECT_TRUE(e.vectors.isApprox(Matrix::Identity(2, 2), 1e-15));
}

TEST(SymEig, DiagonalDescending) {
  const auto e = sym_eig(SymMatrix(m2(1, 0, 0, 3)));
  EXPECT_DOUBLE_EQ(e.values(0), 3.0);
  EXPECT_DOUBLE_EQ(e.values(1), 1.0);
}

TEST(SymEig, CharacteristicPolynomialCase) {
  // lambda^2 - 4 lambda + 3 = 0
  const auto e = sym_eig(SymMatrix(m2(2, 1, 1, 2)));
  EXPECT_NEAR(e.values(0), 3.0, 1e-14);
  EXPECT_NEAR(e.values(1), 1.0, 1e-14);
}

TEST(SymEig, InvariantsAndSignRuleOnRandomInputs) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 200; ++t) {
    const int n = 1 + t % 12;
    const Matrix s = oracle::random_symmetric(n, rng, -3, 3);
    const auto e = sym_eig(SymMatrix(s));
    EXPECT_LE((e.vectors.transpose() * e.vectors - Matrix::Identity(n, n)).norm(), 1e-10);
    EXPECT_LE((e.vectors * e.values.asDiagonal() * e.vectors.transpose() - s).norm(), 1e-10 * std::max(1.0, s.norm()));
    for (int i = 0; i + 1 < n; ++i) EXPECT_GE(e.values(i), e.values(i + 1));
    for (int j = 0; j < n; ++j) {
      Eigen::Index arg = 0;
      e.vectors.col(j).cwiseAbs().maxCoeff(&arg);
      EXPECT_GT(e.vectors(arg, j), 0.0);
    }
  }
}

TEST(SpdExp, ZeroGivesIdentity) { EXPECT_TRUE(spd_exp(SymMatrix(Matrix::Zero(3, 3))).matrix().isApprox(Matrix::Identity(3, 3))); }

TEST(SpdExp, Diagonal) {
  const Matrix e = spd_exp(SymMatrix(m2(1, 0, 0, 2))).matrix();
  EXPECT_NEAR(e(0, 0), std::exp(1.0), 1e-14);
  EXPECT_NEAR(e(1, 1), std::exp(2.0), 1e-13);
  EXPECT_EQ(e(0, 1), 0.0);
}

TEST(SpdExp, AlwaysSpdOverRandomSymmetric) {
  std::mt19937_64 rng(2);
  for (int seed = 0; seed < 1000; ++seed) {
    const int n = 2 + seed % 7;
    const Matrix s = oracle::random_symmetric(n, rng, -2, 2);
    const Matrix e = spd_exp(SymMatrix(s)).matrix();
    Eigen::SelfAdjointEigenSolver<Matrix> es(e);
    ASSERT_GT(es.eigenvalues().minCoeff(), 0.0);
    ASSERT_TRUE(oracle::cholesky_ok(e));
  }
}

TEST(SpdLog, IdentityAndDiagonal) {
  EXPECT_EQ(spd_log(SpdMatrix::identity(3)).matrix(), Matrix::Zero(3, 3));
  const Matrix l = spd_log(SpdMatrix(m2(std::exp(1.0), 0, 0, std::exp(2.0)))).matrix();
  EXPECT_NEAR(l(0, 0), 1.0, 1e-14);
  EXPECT_NEAR(l(1, 1), 2.0, 1e-14);
}

TEST(SpdLog, RoundTrips) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 1000; ++t) {
    const int n = 2 + t % 9;
    const Matrix p = oracle::random_spd(n, rng);
    const Matrix back = spd_exp(spd_log(SpdMatrix(p))).matrix();
    ASSERT_LE((back - p).norm() / p.norm(), 1e-9);
    const Matrix s = oracle::random_symmetric(n, rng, -1, 1);
    Eigen::SelfAdjointEigenSolver<Matrix> es(s);
    if (es.eigenvalues().cwiseAbs().maxCoeff() > 4.0) continue;
    const Matrix s2 = spd_log(spd_exp(SymMatrix(s))).matrix();
    ASSERT_LE((s2 - s).norm() / std::max(1e-300, s.norm()), 1e-9);
  }
}

TEST(LogDet, KnownValues) {
  EXPECT_EQ(log_det(SpdMatrix::identity(4)), 0.0);
  EXPECT_NEAR(log_det(SpdMatrix(m2(2, 0, 0, 3))), std::log(6.0), 1e-15);
  EXPECT_THROW(log_det(m2(1, 2, 2, 1)), DomainError);
}

TEST(LogDet, AgreesWithEigenvalueSum) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 300; ++t) {
    const Matrix p = oracle::random_spd(2 + t % 10, rng);
    Eigen::SelfAdjointEigenSolver<Matrix> es(p);
    EXPECT_NEAR(log_det(SpdMatrix(p)), es.eigenvalues().array().log().sum(), 1e-10);
  }
}

TEST(SteinDistance, ScalarClosedForm) {
  const double expected = std::sqrt(std::log(1.5) - 0.5 * std::log(2.0));
  EXPECT_NEAR(stein_distance(SpdMatrix(Matrix::Constant(1, 1, 1.0)), SpdMatrix(Matrix::Constant(1, 1, 2.0))), expected,
              1e-15);
  EXPECT_NEAR(expected, 0.242675, 1e-6);
}

TEST(SteinDistance, MetricAxioms) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 300; ++t) {
    const int n = 2 + t % 8;
    const SpdMatrix x(oracle::random_spd(n, rng));
    const SpdMatrix y(oracle::random_spd(n, rng));
    EXPECT_EQ(stein_distance(x, y), stein_distance(y, x));
    EXPECT_LE(stein_distance(x, x), 1e-12);
    EXPECT_GT(stein_distance(x, y), 0.0);
    EXPECT_NEAR(stein_distance(x, y), oracle::stein_distance_eig(x.matrix(), y.matrix()), 1e-9);
  }
}

TEST(SteinDistance, OrthogonalIsometry) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 1000; ++t) {
    const int n = 2 + t % 15;
    const SpdMatrix x(oracle::random_spd(n, rng));
    const SpdMatrix y(oracle::random_spd(n, rng));
    const Matrix g = oracle::random_orthogonal(n, rng);
    const SpdMatrix gx(g * x.matrix() * g.transpose());
    const SpdMatrix gy(g * y.matrix() * g.transpose());
    const double d = stein_distance(x, y);
    ASSERT_LE(std::abs(stein_distance(gx, gy) - d), 1e-10 * (1.0 + d));
  }
}

TEST(SteinDistance, DimensionMismatch) {
  EXPECT_THROW(stein_distance(SpdMatrix::identity(2), SpdMatrix::identity(3)), DimensionError);
}

TEST(PadSpd, ZeroWidthIsIdentity) {
  const SpdMatrix x(m2(2, 1, 1, 2));
  EXPECT_EQ(pad_spd(x, 0, 0.01), x);
}

TEST(PadSpd, BlockEigenvalues) {
  const auto p = pad_spd(SpdMatrix(m2(2, 1, 1, 2)), 1, 0.01);
  ASSERT_EQ(p.dim(), 4);
  Eigen::SelfAdjointEigenSolver<Matrix> es(p.matrix());
  const Vector l = es.eigenvalues();
  EXPECT_NEAR(l(0), 0.01, 1e-15);
  EXPECT_NEAR(l(1), 0.01, 1e-15);
  EXPECT_NEAR(l(2), 1.0, 1e-14);
  EXPECT_NEAR(l(3), 3.0, 1e-14);
  EXPECT_EQ(p.matrix()(0, 0), 0.01);
  EXPECT_EQ(p.matrix()(0, 1), 0.0);
  EXPECT_EQ(p.matrix()(1, 2), 1.0);
}

TEST(PadSpd, MinEigenvalueBound) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> rho(1e-3, 2.0);
  for (int t = 0; t < 500; ++t) {
    const Matrix x = oracle::random_spd(2 + t % 6, rng);
    const double r = rho(rng);
    const auto p = pad_spd(SpdMatrix(x), 1 + t % 3, r);
    Eigen::SelfAdjointEigenSolver<Matrix> ex(x), ep(p.matrix());
    EXPECT_GE(ep.eigenvalues().minCoeff(), std::min(r, ex.eigenvalues().minCoeff()) - 1e-12);
    EXPECT_TRUE(oracle::cholesky_ok(p.matrix()));
  }
}

TEST(PadSpd, RejectsNonPositiveRho) {
  EXPECT_THROW(pad_spd(SpdMatrix::identity(2), 1, 0.0), ParameterError);
  EXPECT_THROW(pad_spd(SpdMatrix::identity(2), 1, -1.0), ParameterError);
}

TEST(FrobeniusNormalize, IdentityAndIdempotence) {
  const auto n = frobenius_normalize(SpdMatrix::identity(2));
  EXPECT_TRUE(n.matrix().isApprox(Matrix::Identity(2, 2) / std::sqrt(2.0)));
  EXPECT_TRUE(frobenius_normalize(n).matrix().isApprox(n.matrix(), 1e-15));
}

TEST(FrobeniusNormalize, UnitNorm) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 300; ++t) {
    const auto n = frobenius_normalize(SpdMatrix(oracle::random_spd(2 + t % 9, rng)));
    EXPECT_NEAR(n.matrix().norm(), 1.0, 1e-12);
  }
}
