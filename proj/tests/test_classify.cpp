#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "nlar/classify.hpp"
#include "nlar/config.hpp"

using namespace nlar;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorCode::InvalidParameter;
}

std::filesystem::path models_dir() { return NLAR_MODELS_DIR; }

}  // namespace

TEST(Classify, GeometricAtRhoEqualKappa) {
  const RateCertificate c = classify(1.0, SubexponentialMoments{0.5, 1.0});
  EXPECT_EQ(c.rate_class, RateClass::Geometric);
  EXPECT_TRUE(std::isinf(c.moments));
  EXPECT_FALSE(c.trace.empty());
}

TEST(Classify, SubexponentialExponent) {
  const RateCertificate c = classify(1.5, SubexponentialMoments{1.0, 1.0});
  EXPECT_EQ(c.rate_class, RateClass::Subexponential);
  EXPECT_DOUBLE_EQ(c.b3, 0.5);
  EXPECT_NEAR(c.exponent, 1.0 / 3.0, 1e-15);
  EXPECT_TRUE(std::isinf(c.moments));
}

TEST(Classify, PolynomialFourthMoment) {
  const RateCertificate c = classify(1.0, PolynomialMoments{4.0});
  EXPECT_EQ(c.rate_class, RateClass::Polynomial);
  EXPECT_DOUBLE_EQ(c.poly_rate, 3.0);
  EXPECT_DOUBLE_EQ(c.delta_max, 4.0);
  EXPECT_DOUBLE_EQ(c.moments, 3.0);
  EXPECT_NE(c.beta_mixing.find("n^3"), std::string::npos);
}

TEST(Classify, ClauseThreeBoundary) {
  ClassifyExtra ok;
  ok.r = 0.5;
  ok.second_moment = 0.25;
  const RateCertificate c = classify(2.0, PolynomialMoments{4.0}, ok);
  EXPECT_EQ(c.rate_class, RateClass::Polynomial);
  EXPECT_DOUBLE_EQ(c.poly_rate, 1.0);

  ClassifyExtra bad = ok;
  bad.second_moment = 0.4;
  EXPECT_EQ(code_of([&] { classify(2.0, PolynomialMoments{4.0}, bad); }), ErrorCode::NotCovered);

  // 4 r - 6 E[eps^2] = 0 exactly: strict inequality required.
  ClassifyExtra edge = ok;
  edge.r = 0.75;
  edge.second_moment = 0.5;
  EXPECT_EQ(code_of([&] { classify(2.0, PolynomialMoments{4.0}, edge); }), ErrorCode::NotCovered);
  edge.r = 0.75 + 1e-12;
  EXPECT_NO_THROW(classify(2.0, PolynomialMoments{4.0}, edge));

  EXPECT_EQ(code_of([&] { classify(2.0, PolynomialMoments{4.0}); }), ErrorCode::NotCovered);
}

TEST(Classify, NotCoveredCases) {
  EXPECT_EQ(code_of([] { classify(1.5, PolynomialMoments{3.0}); }), ErrorCode::NotCovered);
  EXPECT_EQ(code_of([] { classify(1.0, PolynomialMoments{0.8}); }), ErrorCode::NotCovered);
  EXPECT_EQ(code_of([] { classify(1.0, PolynomialMoments{4.0}, {}, false); }), ErrorCode::NotCovered);
  EXPECT_EQ(classify(0.5, PolynomialMoments{3.0}, {}, false).rate_class, RateClass::Polynomial);
  EXPECT_EQ(classify(1.5, PolynomialMoments{2.0}).rate_class, RateClass::Polynomial);
}

TEST(Classify, Borderline) {
  EXPECT_EQ(code_of([] { classify(1.0 - 1e-10, SubexponentialMoments{1.0, 1.0}); }), ErrorCode::BorderlineAmbiguous);
  ClassifyExtra tol;
  tol.tolerance = 1e-9;
  EXPECT_EQ(classify(1.0 - 1e-10, SubexponentialMoments{1.0, 1.0}, tol).rate_class, RateClass::Geometric);
}

TEST(Classify, BelowKappaIsFlagged) {
  const RateCertificate c = classify(0.5, SubexponentialMoments{1.0, 1.0});
  EXPECT_EQ(c.rate_class, RateClass::Geometric);
  bool flagged = false;
  for (const auto& t : c.trace) flagged = flagged || t.find("not theorem-backed") != std::string::npos;
  EXPECT_TRUE(flagged);
}

TEST(Classify, RhoTwoWithExponentialMoments) {
  ClassifyExtra extra;
  extra.r = 1.0;
  extra.second_moment = 0.25;
  const RateCertificate c = classify(2.0, SubexponentialMoments{1.0, 1.0}, extra);
  EXPECT_EQ(c.rate_class, RateClass::Polynomial);
  EXPECT_DOUBLE_EQ(c.s0, 4.0);
}

TEST(Classify, ExponentMonotoneInRho) {
  for (double k0 : {0.3, 0.7, 1.0}) {
    double prev = std::numeric_limits<double>::infinity();
    for (int i = 1; i < 200; ++i) {
      const double rho = k0 + (2.0 - k0) * i / 200.0;
      const RateCertificate c = classify(rho, SubexponentialMoments{1.0, k0});
      ASSERT_EQ(c.rate_class, RateClass::Subexponential);
      ASSERT_LE(c.exponent, prev);
      ASSERT_DOUBLE_EQ(c.b3, std::min(k0, 2.0 - rho));
      prev = c.exponent;
    }
  }
}

TEST(Classify, TotalOnDomain) {
  ClassifyExtra extra;
  extra.r = 0.3;
  extra.second_moment = 0.1;
  std::vector<MomentClass> classes = {SubexponentialMoments{1.0, 1.0}, SubexponentialMoments{0.5, 0.4},
                                      PolynomialMoments{1.2},           PolynomialMoments{2.0},
                                      PolynomialMoments{3.0},           PolynomialMoments{6.0}};
  for (const auto& m : classes) {
    for (int i = 1; i <= 400; ++i) {
      const double rho = 2.0 * i / 400.0;
      try {
        const RateCertificate c = classify(rho, m, extra);
        EXPECT_FALSE(c.rate.empty());
        EXPECT_FALSE(c.f_norm.empty());
        EXPECT_FALSE(c.beta_mixing.empty());
        EXPECT_FALSE(c.trace.empty());
      } catch (const Error& e) {
        EXPECT_TRUE(e.code() == ErrorCode::NotCovered || e.code() == ErrorCode::BorderlineAmbiguous);
      }
    }
  }
}

TEST(ConditionH, NamedFamiliesPass) {
  const ConditionH a = check_condition_h(HSpec::abs_power(1.5));
  EXPECT_TRUE(a.pass);
  EXPECT_DOUBLE_EQ(a.rho, 1.5);
  EXPECT_DOUBLE_EQ(a.c2, 0.75);
  EXPECT_GT(a.c1, 0.0);
  EXPECT_GT(a.c3, 0.0);

  const ConditionH b = check_condition_h(HSpec::two_abs_power(1.25, 1.25, -4, -8));
  EXPECT_TRUE(b.pass);
  EXPECT_DOUBLE_EQ(b.rho, 1.25);

  for (const HSpec& h : {HSpec::shifted_power(0.7, 1), HSpec::smooth_power(2.0), HSpec::two_shifted_power(0.5, 1.5, 0, 3),
                         HSpec::two_smooth_power(1.0, 0.4, -1, 1)})
    EXPECT_TRUE(check_condition_h(h).pass);
}

TEST(ConditionH, ExponentialFails) {
  const ConditionH c = check_condition_h(HSpec::custom([](double u) { return std::exp(std::abs(u)); }, 2.0));
  EXPECT_FALSE(c.pass);
  EXPECT_FALSE(c.reason.empty());
}

TEST(ConditionH, UnderstatedRhoFails) {
  EXPECT_FALSE(check_condition_h(HSpec::custom([](double u) { return 1.0 + u * u; }, 1.0)).pass);
}

TEST(ClassifyModel, LstarIntercept) {
  const ModelFile t5 = load_model((models_dir() / "fig1_left.toml").string());
  const RateCertificate c = classify_model(t5.model);
  EXPECT_EQ(c.rate_class, RateClass::Polynomial);
  EXPECT_DOUBLE_EQ(c.poly_rate, 3.0);
  ASSERT_TRUE(c.envelope_r.has_value());
  EXPECT_DOUBLE_EQ(*c.envelope_r, 0.04);

  const ModelFile gauss = load_model((models_dir() / "fig1_left_gaussian.toml").string());
  EXPECT_EQ(classify_model(gauss.model).rate_class, RateClass::Geometric);
}

TEST(ClassifyModel, EstarSlopeRhoOneAndHalf) {
  const ModelFile f = load_model((models_dir() / "fig2_left.toml").string());
  const RateCertificate c = classify_model(f.model);
  EXPECT_EQ(c.rate_class, RateClass::Subexponential);
  EXPECT_NEAR(c.exponent, 1.0 / 3.0, 1e-12);
}

TEST(ClassifyModel, RandomWalkHasNoEnvelope) {
  const ModelSpec rw({}, ZeroTerm{}, NoiseSpec::gaussian(1.0));
  EXPECT_EQ(code_of([&] { classify_model(rw); }), ErrorCode::EnvelopeMissing);
}

TEST(ClassifyModel, CustomTerms) {
  CustomTerm bare;
  bare.tilde_g = [](std::span<const double> x) { return -0.1 * x[0]; };
  const ModelSpec m1({}, bare, NoiseSpec::gaussian(1.0));
  EXPECT_EQ(code_of([&] { classify_model(m1); }), ErrorCode::EnvelopeMissing);

  CustomTerm declared = bare;
  declared.g = [](double u) { return (1.0 - 0.5 / (1.0 + std::abs(u))) * u; };
  declared.rho = 1.0;
  const ModelSpec m2({}, declared, NoiseSpec::gaussian(1.0));
  EXPECT_EQ(classify_model(m2).rate_class, RateClass::Geometric);
}

TEST(ClassifyModel, KeyValueOutput) {
  const RateCertificate c = classify(1.5, SubexponentialMoments{1.0, 1.0});
  std::ostringstream os;
  write_key_values(os, c);
  EXPECT_NE(os.str().find("class = Subexponential\n"), std::string::npos);
  EXPECT_NE(os.str().find("moments = inf\n"), std::string::npos);
  std::ostringstream text;
  write_text(text, c);
  EXPECT_EQ(text.str().rfind("class: Subexponential\n", 0), 0u);
}

TEST(ClassifyModel, ImpliedDriftSpecPassesForShippedModels) {
  MonteCarloConfig mc;
  mc.reps = 20000;
  mc.threads = 1;
  for (const auto& entry : std::filesystem::directory_iterator(models_dir())) {
    const ModelFile f = load_model(entry.path().string());
    const RateCertificate cert = classify_model(f.model);
    const ShrinkResult res = verify_drift_autoshrink(f.model, implied_drift_spec(f.model, cert), {}, mc);
    EXPECT_TRUE(res.report.pass) << entry.path().filename() << " (" << to_string(cert.rate_class) << ")";
  }
}
