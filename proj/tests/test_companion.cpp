#include <gtest/gtest.h>

#include <random>

#include "nlar/companion.hpp"

using namespace nlar;

namespace {

Eigen::VectorXd random_vector(std::mt19937_64& gen, Eigen::Index n) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = normal(gen);
  return z;
}

}  // namespace

TEST(BuildCompanion, SecondOrderLayout) {
  const std::vector<double> pi = {0.75};
  const CompanionForm c = build_companion(pi);
  Eigen::MatrixXd phi(2, 2), a(2, 2);
  phi << 0.75, 0, 1, 0;
  a << 1, -0.75, 0, 1;
  EXPECT_TRUE(c.Phi.isApprox(phi, 0.0));
  EXPECT_TRUE(c.A.isApprox(a, 0.0));
  ASSERT_EQ(c.Pi1.rows(), 1);
  EXPECT_DOUBLE_EQ(c.Pi1(0, 0), 0.75);
  EXPECT_NEAR(c.P(0, 0), 16.0 / 7.0, 1e-12);
  EXPECT_NEAR(c.eta, 0.75, 1e-12);
}

TEST(BuildCompanion, FirstOrderIsDegenerate) {
  const CompanionForm c = build_companion(std::vector<double>{});
  ASSERT_EQ(c.A.rows(), 1);
  EXPECT_DOUBLE_EQ(c.A(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(c.Pi(0, 0), 0.0);
  EXPECT_EQ(c.Pi1.size(), 0);
  EXPECT_DOUBLE_EQ(c.eta, 0.0);
}

TEST(BuildCompanion, ThirdOrderSpectralRadius) {
  const std::vector<double> pi = {0.5, 0.3};
  const CompanionForm c = build_companion(pi);
  Eigen::MatrixXd pi1(2, 2);
  pi1 << 0.5, 0.3, 1, 0;
  EXPECT_TRUE(c.Pi1.isApprox(pi1, 0.0));
  EXPECT_NEAR(spectral_radius(c.Pi1), 0.8520797289396147, 1e-12);
}

TEST(WeightedNorm, LyapunovOracle) {
  Eigen::MatrixXd pi1(2, 2);
  pi1 << 0.5, 0.3, 1, 0;
  const WeightedNorm w = weighted_norm(pi1);
  Eigen::MatrixXd expected(2, 2);
  expected << 4.48717949, 0.96153846, 0.96153846, 1.40384615;
  EXPECT_LT((w.P - expected).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_NEAR(w.eta, 0.88883318219432617, 1e-12);
}

TEST(WeightedNorm, ZeroMatrix) {
  const WeightedNorm w = weighted_norm(Eigen::MatrixXd::Zero(1, 1));
  EXPECT_NEAR(w.P(0, 0), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(w.eta, 0.0);
}

TEST(WeightedNorm, RejectsNonContractive) {
  Eigen::MatrixXd m(1, 1);
  m << 1.0;
  try {
    weighted_norm(m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotContractive);
  }
}

TEST(WeightedNorm, LargeSystemUsesIteration) {
  // 30x30 companion with small coefficients goes through the fixed-point branch.
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(30, 30);
  for (int j = 0; j < 30; ++j) m(0, j) = 0.02;
  for (int i = 1; i < 30; ++i) m(i, i - 1) = 1.0;
  const WeightedNorm w = weighted_norm(m);
  const Eigen::MatrixXd residual = w.P - m.transpose() * w.P * m - Eigen::MatrixXd::Identity(30, 30);
  EXPECT_LE(residual.cwiseAbs().maxCoeff(), 1e-10 * w.P.cwiseAbs().maxCoeff());
  EXPECT_LT(w.eta, 1.0);
}

TEST(TransformZ, Examples) {
  const CompanionForm c2 = build_companion(std::vector<double>{0.75});
  const std::vector<double> x2 = {1.0, 1.0};
  const ZSplit a = transform_z(c2, x2);
  EXPECT_DOUBLE_EQ(a.z1, 0.25);
  EXPECT_DOUBLE_EQ(a.z2(0), 1.0);

  const CompanionForm c1 = build_companion(std::vector<double>{});
  const std::vector<double> x1 = {3.0};
  EXPECT_DOUBLE_EQ(transform_z(c1, x1).z1, 3.0);

  const CompanionForm c3 = build_companion(std::vector<double>{0.5, 0.3});
  const std::vector<double> x3 = {2.0, 1.0, -1.0};
  const ZSplit b = transform_z(c3, x3);
  EXPECT_NEAR(b.z1, 1.8, 1e-15);
  EXPECT_DOUBLE_EQ(b.z2(0), 1.0);
  EXPECT_DOUBLE_EQ(b.z2(1), -1.0);

  const std::vector<double> bad = {1.0};
  EXPECT_THROW(transform_z(c2, bad), Error);
}

TEST(CompanionProperties, ResidualContractionEquivalence) {
  std::mt19937_64 gen(99);
  std::uniform_real_distribution<double> coef(-0.3, 0.3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t p = 2 + trial % 5;
    std::vector<double> pi(p - 1);
    for (auto& v : pi) v = coef(gen);
    if (!remainder_is_stable(pi)) continue;
    const CompanionForm c = build_companion(pi);
    const Eigen::Index n = c.Pi1.rows();
    const Eigen::MatrixXd residual = c.P - c.Pi1.transpose() * c.P * c.Pi1 - Eigen::MatrixXd::Identity(n, n);
    EXPECT_LE(residual.cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_TRUE(((c.A * c.Phi * c.A.inverse()) - c.Pi).cwiseAbs().maxCoeff() <= 1e-10);
    for (int k = 0; k < 1000; ++k) {
      const Eigen::VectorXd z = random_vector(gen, n);
      const double star = star_norm(c, z);
      EXPECT_LE(star_norm(c, c.Pi1 * z), (c.eta + 1e-12) * star);
      EXPECT_LE(z.norm() / c.equivalence, star * (1 + 1e-12));
      EXPECT_LE(star, c.equivalence * z.norm() * (1 + 1e-12));
    }
  }
}

TEST(CompanionProperties, StepMatchesMatrixForm) {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> normal;
  const ModelSpec m({0.5, 0.3}, LstarIntercept{-0.08, 0.08, 2.0, 0.0, 0.0}, NoiseSpec::gaussian(1.0));
  const CompanionForm c = build_companion(m);
  for (int k = 0; k < 100; ++k) {
    std::vector<double> y = {3 * normal(gen), 3 * normal(gen), 3 * normal(gen)};
    const double eps = normal(gen);
    const double direct = step(m, y, eps);
    const Eigen::Map<const Eigen::VectorXd> yv(y.data(), 3);
    const double u = m.filtered(y);
    const Eigen::VectorXd next = c.Phi * yv + Eigen::VectorXd::Unit(3, 0) * (u + nonlinear_part(m, y) + eps);
    EXPECT_NEAR(direct, next(0), 1e-10);
  }
}
