#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "geodyn/manifold_ops.hpp"
#include "support/oracles.hpp"

using namespace geodyn;

namespace {

std::vector<SpdMatrix> random_points(int m, int n, std::mt19937_64& rng) {
  std::vector<SpdMatrix> pts;
  for (int i = 0; i < m; ++i) pts.emplace_back(oracle::random_spd(n, rng));
  return pts;
}

WeightVector random_weights(int m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<double> w(static_cast<std::size_t>(m));
  for (auto& x : w) x = u(rng);
  return WeightVector::normalized(w);
}

SpdMatrix scalar(double v) { return SpdMatrix(Matrix::Constant(1, 1, v)); }

}  // namespace

TEST(WeightVector, Validation) {
  EXPECT_THROW(WeightVector(std::vector<double>{}), ParameterError);
  EXPECT_THROW(WeightVector(std::vector<double>{0.5, 0.6}), ParameterError);
  EXPECT_THROW(WeightVector(std::vector<double>{1.5, -0.5}), ParameterError);
  EXPECT_NO_THROW(WeightVector(std::vector<double>{0.25, 0.75}));
}

TEST(SteinWfm, IdenticalPointsAreFixed) {
  std::mt19937_64 rng(1);
  const SpdMatrix p(oracle::random_spd(4, rng));
  std::vector<SpdMatrix> pts{p, p, p};
  const auto f = stein_wfm(pts, random_weights(3, rng));
  EXPECT_LE((f.matrix() - p.matrix()).norm(), 1e-12 * p.matrix().norm());
}

TEST(SteinWfm, SingleSupportWeights) {
  std::mt19937_64 rng(2);
  auto pts = random_points(2, 3, rng);
  const auto f = stein_wfm(pts, WeightVector(std::vector<double>{1.0, 0.0}));
  EXPECT_LE((f.matrix() - pts[0].matrix()).norm() / pts[0].matrix().norm(), 1e-8);
}

TEST(SteinWfm, ScalarStationarityCase) {
  // 1/(1+f) + 1/(4+f) = 1/f  =>  f^2 = 4
  std::vector<SpdMatrix> pts{scalar(1.0), scalar(4.0)};
  const auto f = stein_wfm(pts, WeightVector::uniform(2));
  EXPECT_NEAR(f.matrix()(0, 0), 2.0, 1e-8);
  EXPECT_NEAR(oracle::scalar_stein_mean({1.0, 4.0}, {0.5, 0.5}), 2.0, 1e-8);
}

TEST(SteinWfm, ScalarAgreesWithDirectMinimizer) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.1, 10.0);
  for (int t = 0; t < 50; ++t) {
    const int m = 2 + t % 4;
    std::vector<double> xs;
    std::vector<SpdMatrix> pts;
    for (int i = 0; i < m; ++i) {
      xs.push_back(u(rng));
      pts.push_back(scalar(xs.back()));
    }
    const auto w = random_weights(m, rng);
    const double want = oracle::scalar_stein_mean(xs, w.values());
    EXPECT_NEAR(stein_wfm(pts, w, 1e-13, 2000).matrix()(0, 0), want, 1e-7 * want);
  }
}

TEST(SteinWfm, ErrorsOnBadInput) {
  std::vector<SpdMatrix> none;
  EXPECT_THROW(stein_wfm(none, WeightVector::uniform(1)), DimensionError);
  std::vector<SpdMatrix> two{SpdMatrix::identity(2), SpdMatrix::identity(2)};
  EXPECT_THROW(stein_wfm(two, WeightVector::uniform(3)), DimensionError);
  std::vector<SpdMatrix> mixed{SpdMatrix::identity(2), SpdMatrix::identity(3)};
  EXPECT_THROW(stein_wfm(mixed, WeightVector::uniform(2)), DimensionError);
}

TEST(SteinWfm, ConvergenceErrorCarriesResidual) {
  std::mt19937_64 rng(4);
  auto pts = random_points(3, 4, rng);
  try {
    stein_wfm(pts, WeightVector::uniform(3), 1e-15, 1);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_GT(e.residual(), 0.0);
  }
}

TEST(WfmObjective, Values) {
  std::vector<SpdMatrix> one{scalar(3.0)};
  EXPECT_EQ(wfm_objective(one, WeightVector::uniform(1), scalar(3.0)), 0.0);
  std::vector<SpdMatrix> pts{scalar(1.0), scalar(4.0)};
  const auto w = WeightVector::uniform(2);
  const double at2 = wfm_objective(pts, w, scalar(2.0));
  EXPECT_LT(at2, wfm_objective(pts, w, scalar(1.5)));
  EXPECT_LT(at2, wfm_objective(pts, w, scalar(2.5)));
}

TEST(SteinWfm, ObjectiveMonotoneAlongIterates) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 100; ++t) {
    const int n = 2 + t % 6;
    const int m = 2 + t % 5;
    auto pts = random_points(m, n, rng);
    const auto w = random_weights(m, rng);
    std::vector<Matrix> iterates;
    std::function<void(const Matrix&)> obs = [&](const Matrix& f) { iterates.push_back(f); };
    PlainAlgebra alg;
    ops::stein_wfm(alg, as_matrices(pts), w.values(), WfmOptions{}, &obs);
    ASSERT_GE(iterates.size(), 2u);
    double prev = oracle::wfm_objective(as_matrices(pts), w.values(), iterates.front());
    for (std::size_t k = 1; k < iterates.size(); ++k) {
      const double cur = oracle::wfm_objective(as_matrices(pts), w.values(), iterates[k]);
      ASSERT_LE(cur, prev + 1e-12) << "iterate " << k;
      prev = cur;
    }
  }
}

TEST(SteinWfm, PermutationEquivariant) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 50; ++t) {
    const int m = 3 + t % 3;
    auto pts = random_points(m, 4, rng);
    const auto w = random_weights(m, rng);
    std::vector<std::size_t> perm(static_cast<std::size_t>(m));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<SpdMatrix> pp;
    std::vector<double> pw;
    for (auto i : perm) {
      pp.push_back(pts[i]);
      pw.push_back(w[i]);
    }
    const auto a = stein_wfm(pts, w);
    const auto b = stein_wfm(pp, WeightVector::normalized(pw));
    EXPECT_LE((a.matrix() - b.matrix()).norm(), 1e-10 * a.matrix().norm());
  }
}

TEST(SteinWfm, CommutesWithTranslation) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 100; ++t) {
    const int n = 2 + t % 7;
    const int m = 2 + t % 4;
    auto pts = random_points(m, n, rng);
    const auto w = random_weights(m, rng);
    const Matrix g = oracle::random_orthogonal(n, rng);
    std::vector<SpdMatrix> moved;
    for (const auto& p : pts) moved.emplace_back(Matrix(g * p.matrix() * g.transpose()));
    const Matrix lhs = stein_wfm(moved, w).matrix();
    const Matrix rhs = g * stein_wfm(pts, w).matrix() * g.transpose();
    EXPECT_LE((lhs - rhs).norm(), 1e-8);
  }
}

TEST(Cayley, ZeroIsIdentity) { EXPECT_EQ(cayley(Matrix::Zero(3, 3)).matrix(), Matrix::Identity(3, 3)); }

TEST(Cayley, PlanarRotationAngle) {
  for (double a : {-3.0, -0.4, 0.1, 1.0, 5.0}) {
    Matrix k(2, 2);
    k << 0, a, -a, 0;
    const double th = 2.0 * std::atan(a / 2.0);
    Matrix r(2, 2);
    // (I - K/2)^{-1}(I + K/2) with K = [[0, a], [-a, 0]]
    r << std::cos(th), std::sin(th), -std::sin(th), std::cos(th);
    EXPECT_LE((cayley(k).matrix() - r).norm(), 1e-14);
  }
}

TEST(Cayley, OrthogonalOnRandomSkew) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 1000; ++t) {
    const int n = 2 + t % 10;
    Matrix k = oracle::random_skew(n, rng);
    k *= std::min(1.0, 10.0 / k.norm());
    const Matrix g = cayley(k).matrix();
    ASSERT_LE((g.transpose() * g - Matrix::Identity(n, n)).norm(), 1e-12);
  }
}

TEST(Cayley, RejectsNonSkew) { EXPECT_THROW(cayley(Matrix::Identity(2, 2)), DomainError); }

TEST(GroupActionGenerator, IdentityCases) {
  std::mt19937_64 rng(9);
  const SpdMatrix v(oracle::random_spd(4, rng));
  EXPECT_EQ(group_action_generator(Matrix::Zero(4, 4), v).matrix(), Matrix::Identity(4, 4));
  const Matrix w = oracle::random_symmetric(4, rng, -1, 1);
  EXPECT_LE((group_action_generator(w, SpdMatrix::identity(4)).matrix() - Matrix::Identity(4, 4)).norm(), 1e-15);
}

TEST(GroupActionGenerator, OrthogonalOnRandomInputs) {
  std::mt19937_64 rng(10);
  for (int t = 0; t < 300; ++t) {
    const int n = 2 + t % 8;
    const Matrix g = group_action_generator(oracle::random_gaussian(n, n, rng), SpdMatrix(oracle::random_spd(n, rng))).matrix();
    ASSERT_LE((g * g.transpose() - Matrix::Identity(n, n)).norm(), 1e-10);
  }
}

TEST(Translate, IdentityAndSpectrum) {
  std::mt19937_64 rng(11);
  const SpdMatrix u(oracle::random_spd(5, rng));
  EXPECT_EQ(translate(u, OrthogonalMatrix(Matrix::Identity(5, 5))), u);
  for (int t = 0; t < 500; ++t) {
    const int n = 2 + t % 9;
    const SpdMatrix x(oracle::random_spd(n, rng));
    const OrthogonalMatrix g(oracle::random_orthogonal(n, rng));
    const auto y = translate(x, g);
    ASSERT_TRUE(oracle::cholesky_ok(y.matrix()));
    Eigen::SelfAdjointEigenSolver<Matrix> ex(x.matrix()), ey(y.matrix());
    ASSERT_LE(((ex.eigenvalues() - ey.eigenvalues()).array() / ex.eigenvalues().array()).abs().maxCoeff(), 1e-10);
  }
}

TEST(Translate, PreservesSteinDistance) {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 300; ++t) {
    const int n = 2 + t % 9;
    const SpdMatrix x(oracle::random_spd(n, rng)), y(oracle::random_spd(n, rng));
    const OrthogonalMatrix g(oracle::random_orthogonal(n, rng));
    const double d = stein_distance(x, y);
    ASSERT_LE(std::abs(stein_distance(translate(x, g), translate(y, g)) - d), 1e-10 * (1 + d));
  }
}

TEST(SpdConv, OneByOneKernelScales) {
  std::mt19937_64 rng(13);
  const SpdMatrix x(oracle::random_spd(5, rng));
  const ConvKernelFactor f(Matrix::Constant(1, 1, 0.7), 1e-5);
  const Matrix expected = (0.49 + 1e-5) * x.matrix();
  EXPECT_LE((spd_conv(x, f).matrix() - expected).norm(), 1e-14);
  EXPECT_LE((oracle::spd_conv_oracle(x.matrix(), f.kernel()) - expected).norm(), 1e-14);
}

TEST(SpdConv, MatchesBandedOracle) {
  std::mt19937_64 rng(14);
  for (int theta : {1, 3, 5}) {
    for (int n = 6; n <= 16; ++n) {
      for (int rep = 0; rep < 3; ++rep) {
        const SpdMatrix x(oracle::random_spd(n, rng));
        const ConvKernelFactor f(oracle::random_gaussian(theta, theta, rng), 1e-5);
        const Matrix got = spd_conv(x, f).matrix();
        ASSERT_EQ(got.rows(), n - theta + 1);
        ASSERT_LE((got - oracle::spd_conv_oracle(x.matrix(), f.kernel())).norm(), 1e-10);
      }
    }
  }
}

TEST(SpdConv, OutputIsSpd) {
  std::mt19937_64 rng(15);
  for (int t = 0; t < 1000; ++t) {
    const int n = 4 + t % 10;
    const int theta = 1 + 2 * (t % 2);
    const SpdMatrix x(oracle::random_spd(n, rng));
    const ConvKernelFactor f(oracle::random_gaussian(theta, theta, rng), 1e-5);
    ASSERT_TRUE(oracle::cholesky_ok(spd_conv(x, f).matrix()));
  }
}

TEST(SpdConv, MultiChannelSumsChannels) {
  std::mt19937_64 rng(16);
  std::vector<SpdMatrix> xs{SpdMatrix(oracle::random_spd(7, rng)), SpdMatrix(oracle::random_spd(7, rng))};
  std::vector<ConvKernelFactor> fs{ConvKernelFactor(oracle::random_gaussian(3, 3, rng), 1e-5),
                                   ConvKernelFactor(oracle::random_gaussian(3, 3, rng), 1e-5)};
  const Matrix expected = oracle::spd_conv_oracle(xs[0].matrix(), fs[0].kernel()) +
                          oracle::spd_conv_oracle(xs[1].matrix(), fs[1].kernel());
  const auto got = spd_conv(xs, fs);
  EXPECT_LE((got.matrix() - expected).norm(), 1e-10);
  EXPECT_TRUE(oracle::cholesky_ok(got.matrix()));
}

TEST(SpdConv, KernelLargerThanInput) {
  const ConvKernelFactor f(Matrix::Identity(5, 5), 1e-5);
  EXPECT_THROW(spd_conv(SpdMatrix::identity(3), f), DimensionError);
  EXPECT_THROW(ConvKernelFactor(Matrix::Identity(2, 2), 1e-5), ParameterError);
  EXPECT_THROW(ConvKernelFactor(Matrix::Identity(3, 3), 0.0), ParameterError);
}
