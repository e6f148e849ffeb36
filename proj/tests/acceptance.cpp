#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "nlar/nlar.hpp"

using namespace nlar;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::filesystem::path models_dir() { return NLAR_MODELS_DIR; }

ModelSpec example1(double rho, double r0 = 0.5) {
  return ModelSpec({}, EstarSlope{SlopeKind::S1, r0, 0.0, HSpec::abs_power(rho)}, NoiseSpec::gaussian(1.0));
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Random stationary varpi of order m: partial autocorrelations uniform on
// (-1, 1) mapped through the Durbin-Levinson recursion.
std::vector<double> random_stable_pi(std::mt19937_64& gen, std::size_t m) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::vector<double> pi;
  for (std::size_t k = 0; k < m; ++k) {
    const double a = unif(gen);
    std::vector<double> next(k + 1);
    for (std::size_t j = 0; j < k; ++j) next[j] = pi[j] - a * pi[k - 1 - j];
    next[k] = a;
    pi = std::move(next);
  }
  return pi;
}

Outcome ac1() {
  std::mt19937_64 gen(20240601);
  std::normal_distribution<double> normal;
  double worst_residual = 0.0, worst_excess = -1.0, largest_p = 0.0;
  int done = 0;
  bool ok = true;
  while (done < 500) {
    const auto pi = random_stable_pi(gen, 1 + static_cast<std::size_t>(done % 5));
    if (!remainder_is_stable(pi)) continue;
    const CompanionForm c = build_companion(pi);
    const Eigen::Index n = c.Pi1.rows();
    const Eigen::MatrixXd res = c.P - c.Pi1.transpose() * c.P * c.Pi1 - Eigen::MatrixXd::Identity(n, n);
    worst_residual = std::max(worst_residual, res.cwiseAbs().maxCoeff());
    largest_p = std::max(largest_p, c.P.cwiseAbs().maxCoeff());
    double ratio = 0.0;
    Eigen::VectorXd z(n);
    for (int k = 0; k < 10000; ++k) {
      for (Eigen::Index i = 0; i < n; ++i) z(i) = normal(gen);
      ratio = std::max(ratio, star_norm(c, c.Pi1 * z) / star_norm(c, z));
    }
    worst_excess = std::max(worst_excess, ratio - c.eta);
    ok = ok && c.eta < 1.0 && ratio <= c.eta + 1e-12;
    ++done;
  }
  ok = ok && worst_residual <= 1e-10;
  return {ok, fmt("500 systems p<=6, max residual %.2e (largest |P| entry %.3g), max(ratio - eta) %.2e", worst_residual,
                  largest_p, worst_excess)};
}

Outcome ac2() {
  bool ok = true;
  std::string d;
  for (double rho : {0.5, 1.0, 2.0}) {
    const auto g = [rho](double u) { return (1.0 - 0.5 / (1.0 + std::pow(std::abs(u), rho))) * u; };
    const EnvelopeCertificate c = check_g_envelope(g, rho);
    ok = ok && c.pass;
    d += fmt("example1 rho=%.1f pass=%d r=%.3g M0=%.3g; ", rho, c.pass, c.r, c.M0);
  }
  const LstarIntercept lstar{-0.08, 0.08, 2.0, 0.0, 0.0};
  const EnvelopeCertificate l = check_g_envelope([&](double u) { return u + eval_intercept(u, lstar); }, 1.0);
  ok = ok && l.pass && l.r >= 0.02 && l.r <= 0.08;
  d += fmt("lstar pass=%d r=%.3g; ", l.pass, l.r);
  const EnvelopeCertificate rw = check_g_envelope([](double u) { return u; }, 1.0);
  ok = ok && !rw.pass;
  d += fmt("g(u)=u pass=%d", rw.pass);
  return {ok, d};
}

MonteCarloConfig mc_reps(std::size_t reps) {
  MonteCarloConfig mc;
  mc.reps = reps;
  return mc;
}

bool tail_ok(const DriftReport& r) {
  // every point on the two outermost shells drifts inward
  const double outer = *std::max_element(r.radius.begin(), r.radius.end());
  for (std::size_t i = 0; i < r.grid.size(); ++i)
    if (r.radius[i] >= outer / 2.0 && r.margins[i] + r.ci_halfwidth[i] > 0.0) return false;
  return true;
}

Outcome ac3() {
  const ModelSpec a = example1(1.0);
  const DriftSpec sa(PolynomialV{4, 0.01, 1}, PolyPhi{0.01, 0.75}, build_companion(a));
  const DriftReport ra = verify_drift(a, sa, {}, mc_reps(200000));

  // With s1 = 0.01 the z2 term outgrows the z1 decrease up to |x| ~ 100 in the
  // cone z1/z2 ~ 0.3-0.5, so the grid runs out to 1000 to see the tail.
  const ModelFile f = load_model((models_dir() / "fig1_left.toml").string());
  const DriftSpec sb(PolynomialV{4, 0.01, 1}, PolyPhi{0.001, 0.75}, build_companion(f.model));
  DriftGrid wide;
  wide.shells = {1, 2, 5, 10, 20, 50, 100, 200, 500, 1000};
  const DriftReport rb = verify_drift(f.model, sb, wide, mc_reps(200000));

  const bool ok = ra.pass && tail_ok(ra) && rb.pass && tail_ok(rb);
  return {ok, fmt("example1: pass=%d C=%g b=%.3g; fig1_left t(5): pass=%d C=%g b=%.3g guard=%d", ra.pass,
                  ra.suggested_C_radius, ra.suggested_b, rb.pass, rb.suggested_C_radius, rb.suggested_b,
                  rb.heavy_tail_guard)};
}

Outcome ac4() {
  const ModelSpec rw({}, ZeroTerm{}, NoiseSpec::gaussian(1.0));
  const CompanionForm c = build_companion(rw);
  std::vector<DriftSpec> specs;
  for (double k : {1e-6, 1e-3, 0.01, 0.1}) {
    specs.emplace_back(PolynomialV{2, 0.01, 1}, PolyPhi{k, 0.5}, c);
    specs.emplace_back(PolynomialV{4, 0.01, 1}, PolyPhi{k, 0.75}, c);
    specs.emplace_back(SubexponentialV{0.1, 0.1, 1.0}, GeometricPhi{k}, c);
    specs.emplace_back(SubexponentialV{0.1, 0.1, 0.5}, SubexpPhi{k, 1.0, 0.0}, c);
  }
  bool ok = true;
  for (const auto& s : specs) ok = ok && !verify_drift(rw, s, {}, mc_reps(20000)).pass;

  // quadratic V: E V(x + eps) - V(x) + phi(V(x)) = E[eps^2] + phi(1 + x^2)
  const DriftSpec q(PolynomialV{2, 0.01, 1}, PolyPhi{1e-6, 0.5}, c);
  const DriftReport r = verify_drift(rw, q, {}, mc_reps(200000));
  int checked = 0, covered = 0;
  for (std::size_t i = 0; i < r.grid.size(); ++i) {
    if (r.radius[i] < 10.0) continue;
    const double x = r.grid[i][0];
    const double analytic = 1.0 + 1e-6 * std::sqrt(1.0 + x * x);
    ++checked;
    if (std::abs(r.margins[i] - analytic) <= r.ci_halfwidth[i]) ++covered;
    ok = ok && r.margins[i] > 0.0;
  }
  ok = ok && covered == checked;
  return {ok, fmt("%zu drift specs all fail; analytic margin inside CI at %d/%d points with |x|>=10", specs.size(),
                  covered, checked)};
}

Outcome ac5() {
  bool ok = true;
  std::string d;
  const RateCertificate g = classify(1.0, SubexponentialMoments{1.0, 1.0});
  ok = ok && g.rate_class == RateClass::Geometric;
  const RateCertificate s = classify(1.5, SubexponentialMoments{1.0, 1.0});
  ok = ok && s.rate_class == RateClass::Subexponential && s.b3 == 0.5 && std::abs(s.exponent - 1.0 / 3.0) < 1e-15;
  const RateCertificate p = classify(1.0, PolynomialMoments{4.0});
  ok = ok && p.rate_class == RateClass::Polynomial && p.poly_rate == 3.0;
  ClassifyExtra e3;
  e3.r = 0.5;
  e3.second_moment = 0.25;
  const RateCertificate c3 = classify(2.0, PolynomialMoments{4.0}, e3);
  ok = ok && c3.rate_class == RateClass::Polynomial;
  d = fmt("rho=1/exp -> %s; rho=1.5 -> %s b3=%g exp=%.4f; rho=1/s0=4 -> %s n^%g; clause iii (0.25) -> %s",
          to_string(g.rate_class).c_str(), to_string(s.rate_class).c_str(), s.b3, s.exponent,
          to_string(p.rate_class).c_str(), p.poly_rate, to_string(c3.rate_class).c_str());
  auto not_covered = [](const std::function<void()>& fn) {
    try {
      fn();
    } catch (const Error& err) {
      return err.code() == ErrorCode::NotCovered;
    }
    return false;
  };
  e3.second_moment = 0.4;
  const bool nc1 = not_covered([&] { classify(2.0, PolynomialMoments{4.0}, e3); });
  const bool nc2 = not_covered([] { classify(1.5, PolynomialMoments{3.0}); });
  ok = ok && nc1 && nc2;
  d += fmt("; clause iii (0.4) NotCovered=%d; rho=1.5/s0=3 NotCovered=%d", nc1, nc2);
  return {ok, d};
}

Outcome ac6() {
  const ModelFile f1 = load_model((models_dir() / "fig1_left.toml").string());
  const Trajectory t1 = simulate(f1.model, 100000, 500, f1.run.seed);
  const auto r1 = acf(t1.y, 3);
  const ModelFile left = load_model((models_dir() / "fig2_left.toml").string());
  const ModelFile right = load_model((models_dir() / "fig2_right.toml").string());
  const auto al = acf(simulate(left.model, 100000, 500, left.run.seed).y, 20);
  const auto ar = acf(simulate(right.model, 100000, 500, right.run.seed).y, 20);
  bool faster = true;
  for (std::size_t k = 1; k <= 20; ++k) faster = faster && ar[k] < al[k];
  const bool ok = r1[1] >= 0.98 && r1[3] >= 0.95 && faster;
  return {ok, fmt("fig1_left ACF(1)=%.4f ACF(3)=%.4f; fig2 lag 1/20 left %.3f/%.3f right %.3f/%.3f", r1[1], r1[3],
                  al[1], al[20], ar[1], ar[20])};
}

Outcome ac7() {
  const std::vector<std::size_t> horizons = {1, 2, 3, 5, 7, 10, 15, 20, 30, 50, 70, 100, 150, 200, 300, 500};
  EnsembleConfig cfg;
  cfg.reps = 10000;
  const std::vector<double> x0 = {5.0};
  std::vector<double> poly, geo;
  bool ok = true;
  std::string d;
  for (double rho : {0.5, 1.0, 1.5}) {
    const MixingReport r = ensemble_tv(example1(rho), x0, horizons, cfg);
    ok = ok && r.noise_floor <= 0.05;
    try {
      const MixingFit fit = fit_mixing_rate(r);
      poly.push_back(fit.poly_exponent);
      geo.push_back(fit.geometric_rate);
      d += fmt("rho=%.1f n^-%.3f / %.3f^n floor=%.4f; ", rho, fit.poly_exponent, fit.geometric_rate, r.noise_floor);
    } catch (const Error& e) {
      ok = false;
      d += fmt("rho=%.1f fit failed (%s); ", rho, e.what());
    }
  }
  if (poly.size() == 3) ok = ok && poly[0] > poly[1] && poly[1] > poly[2] && geo[0] < geo[1] && geo[1] < geo[2];

  const ModelSpec rw({}, ZeroTerm{}, NoiseSpec::gaussian(1.0));
  const std::vector<double> zero = {0.0};
  EnsembleConfig rcfg;
  rcfg.reps = 1000;
  bool insufficient = false;
  try {
    fit_mixing_rate(ensemble_tv(rw, zero, {1, 2, 5, 10, 20, 50, 100, 200, 500}, rcfg));
  } catch (const Error& e) {
    insufficient = e.code() == ErrorCode::InsufficientDecay;
  }
  ok = ok && insufficient;
  d += fmt("random walk InsufficientDecay=%d", insufficient);
  return {ok, d};
}

Outcome ac8() {
  const double a = 0.6;
  CustomTerm term;
  term.tilde_g = [a](std::span<const double> x) { return (a - 1.0) * x[0]; };
  term.g = [a](double u) { return a * u; };
  term.rho = 1.0;
  const ModelSpec m({}, term, NoiseSpec::gaussian(1.0));
  DriftGrid grid;
  grid.shells.clear();
  for (int i = 0; i < 25; ++i) grid.shells.push_back(std::pow(10.0, 2.0 * i / 24.0));
  const DriftSpec spec(PolynomialV{2, 0.01, 1}, PolyPhi{0.01, 0.5}, build_companion(m));
  const DriftReport r = verify_drift(m, spec, grid, mc_reps(200000));
  int covered = 0;
  for (std::size_t i = 0; i < r.grid.size(); ++i) {
    const double x = r.grid[i][0];
    if (std::abs(r.expected_V[i] - (2.0 + a * a * x * x)) <= r.ci_halfwidth[i]) ++covered;
  }
  return {r.grid.size() == 50 && covered >= 47, fmt("%d/%zu grid points inside the 99%% CI", covered, r.grid.size())};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"AC1 companion/norm", ac1},   {"AC2 envelope", ac2},      {"AC3 drift positive", ac3},
      {"AC4 drift negative", ac4},   {"AC5 classifier", ac5},    {"AC6 ACF bands", ac6},
      {"AC7 mixing separation", ac7}, {"AC8 oracle equivalence", ac8},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = fn();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s %s (%.1f s): %s\n", out.pass ? "PASS" : "FAIL", name, secs, out.detail.c_str());
    std::fflush(stdout);
    if (!out.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
