#pragma once

// Lyapunov functions, drift-rate shapes and a Monte Carlo check of the drift
// condition  E[V(y_1) | y_0 = x] <= V(x) - phi(V(x)) + b 1_C(x).

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "nlar/companion.hpp"
#include "nlar/envelope.hpp"
#include "nlar/error.hpp"
#include "nlar/model.hpp"
#include "nlar/rng.hpp"

namespace nlar {

/// V = 1/2 exp(b1 |z1|^b3) + 1/2 exp(b2 ||z2||_*^b3)   (p >= 2)
/// V = exp(b1 |x|^b3)                                   (p = 1)
struct SubexponentialV {
  double b1 = 0.1;
  double b2 = 0.1;
  double b3 = 1.0;
};

/// V = 1 + |z1|^s0 + s1 ||z2||_*^(alpha s0), alpha = 1 - rho/s0   (p >= 2)
/// V = 1 + |x|^s0                                                 (p = 1)
struct PolynomialV {
  double s0 = 4.0;
  double s1 = 0.01;
  double rho = 1.0;

  double alpha() const { return 1.0 - rho / s0; }
};

/// phi(v) = lambda v
struct GeometricPhi {
  double lambda = 0.01;
};
/// phi(v) = c (v + v0) / ln(v + v0)^alpha; concave increasing on [1, inf) iff
/// ln(1 + v0) >= alpha + 1.
struct SubexpPhi {
  double c = 0.01;
  double alpha = 1.0;
  double v0 = 0.0;
};
/// phi(v) = c v^alpha
struct PolyPhi {
  double c = 0.01;
  double alpha = 0.5;
};

using LyapunovV = std::variant<SubexponentialV, PolynomialV>;
using DriftPhi = std::variant<GeometricPhi, SubexpPhi, PolyPhi>;

/// Smallest v0 making the subexponential phi concave and increasing on [1, inf).
inline double min_subexp_offset(double alpha) { return std::exp(alpha + 1.0) - 1.0; }

class DriftSpec {
 public:
  DriftSpec(LyapunovV v, DriftPhi phi, CompanionForm companion)
      : v_(v), phi_(phi), companion_(std::move(companion)) {
    if (const auto* s = std::get_if<SubexponentialV>(&v_)) {
      require(s->b1 > 0.0 && s->b2 > 0.0, ErrorCode::InvalidParameter, "b1, b2 must be positive");
      require(s->b3 > 0.0 && s->b3 <= 1.0, ErrorCode::InvalidParameter, "b3 must lie in (0,1]");
    } else {
      const auto& q = std::get<PolynomialV>(v_);
      require(q.rho > 0.0 && q.s0 > q.rho, ErrorCode::InvalidParameter, "polynomial V needs s0 > rho > 0");
      require(q.s1 > 0.0, ErrorCode::InvalidParameter, "s1 must be positive");
    }
    if (auto* s = std::get_if<SubexpPhi>(&phi_)) {
      require(s->c > 0.0 && s->alpha > 0.0, ErrorCode::InvalidParameter, "subexponential phi needs c, alpha > 0");
      if (s->v0 <= 0.0) s->v0 = min_subexp_offset(s->alpha);
      require(std::log(1.0 + s->v0) >= s->alpha + 1.0 - 1e-12, ErrorCode::InvalidParameter,
              "v0 too small: phi is not concave on [1, inf)");
    } else if (const auto* g = std::get_if<GeometricPhi>(&phi_)) {
      require(g->lambda > 0.0, ErrorCode::InvalidParameter, "lambda must be positive");
    } else {
      const auto& q = std::get<PolyPhi>(phi_);
      require(q.c > 0.0 && q.c <= 1.0, ErrorCode::InvalidParameter, "polynomial phi needs c in (0,1]");
      require(q.alpha >= 0.0 && q.alpha < 1.0, ErrorCode::InvalidParameter, "polynomial phi needs alpha in [0,1)");
    }
  }

  const LyapunovV& v() const { return v_; }
  const DriftPhi& phi() const { return phi_; }
  const CompanionForm& companion() const { return companion_; }
  std::size_t p() const { return companion_.p(); }

 private:
  LyapunovV v_;
  DriftPhi phi_;
  CompanionForm companion_;
};

/// Evaluates V from the split (z1, ||z2||_*); shared by eval_V and the verifier.
inline double eval_V_split(const LyapunovV& v, std::size_t p, double z1, double z2norm) {
  if (const auto* s = std::get_if<SubexponentialV>(&v)) {
    if (p == 1) return std::exp(s->b1 * std::pow(std::abs(z1), s->b3));
    return 0.5 * std::exp(s->b1 * std::pow(std::abs(z1), s->b3)) +
           0.5 * std::exp(s->b2 * std::pow(z2norm, s->b3));
  }
  const auto& q = std::get<PolynomialV>(v);
  if (p == 1) return 1.0 + std::pow(std::abs(z1), q.s0);
  return 1.0 + std::pow(std::abs(z1), q.s0) + q.s1 * std::pow(z2norm, q.alpha() * q.s0);
}

namespace detail {

// V splits as z1_part(z1) + z2_part(||z2||_*); the verifier evaluates the
// deterministic z2 part once per grid point.
inline double z1_part(const LyapunovV& v, std::size_t p, double z1) {
  if (const auto* s = std::get_if<SubexponentialV>(&v)) {
    const double a = std::abs(z1);
    const double e = std::exp(s->b1 * (s->b3 == 1.0 ? a : s->b3 == 0.5 ? std::sqrt(a) : std::pow(a, s->b3)));
    return p == 1 ? e : 0.5 * e;
  }
  const auto& q = std::get<PolynomialV>(v);
  const double a = std::abs(z1);
  return 1.0 + (q.s0 == 4.0 ? (a * a) * (a * a) : q.s0 == 2.0 ? a * a : std::pow(a, q.s0));
}

inline double z2_part(const LyapunovV& v, std::size_t p, double z2norm) {
  if (p == 1) return 0.0;
  return eval_V_split(v, p, 0.0, z2norm) - z1_part(v, p, 0.0);
}

}  // namespace detail

inline double eval_V(const DriftSpec& spec, std::span<const double> x) {
  require(x.size() == spec.p(), ErrorCode::DimensionMismatch, "state length must equal p");
  const ZSplit z = transform_z(spec.companion(), x);
  return eval_V_split(spec.v(), spec.p(), z.z1, star_norm(spec.companion(), z.z2));
}

inline double eval_phi(const DriftPhi& phi, double v) {
  require(v >= 1.0, ErrorCode::DomainError, "phi is defined on [1, inf)");
  return std::visit(
      [v](const auto& f) -> double {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, GeometricPhi>) {
          return f.lambda * v;
        } else if constexpr (std::is_same_v<T, SubexpPhi>) {
          const double w = v + f.v0;
          return f.c * w / std::pow(std::log(w), f.alpha);
        } else {
          return f.c * std::pow(v, f.alpha);
        }
      },
      phi);
}

inline double eval_phi(const DriftSpec& spec, double v) { return eval_phi(spec.phi(), v); }

/// The drift rate that falls out of the subexponential Lyapunov bound,
/// phi_1(v) = c_phi/2 (1 + ln v)^-alpha v with alpha = rho/b3 - 1.
inline double proof_phi(double v, double c_phi, double alpha) {
  return 0.5 * c_phi * std::pow(1.0 + std::log(v), -alpha) * v;
}

// ---------------------------------------------------------------------------
// Remainder decay of g~ against the scalar tail map g

struct DecayFit {
  bool passes = false;
  /// Slope of log max-shell eps* against log |x|; -inf when eps* vanishes in the tail.
  double slope = 0.0;
  std::vector<double> radii;
  std::vector<double> shell_max;
};

struct DecayGrid {
  std::size_t shells = 25;
  std::size_t directions = 64;
  double r_min = 1.0;
  double r_max = 1e6;
  double margin = 0.05;
  std::uint64_t seed = 20240917;
};

namespace detail {

inline std::vector<double> random_direction(CounterRng& rng, std::size_t p) {
  std::normal_distribution<double> normal;
  std::vector<double> d(p);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& v : d) {
      v = normal(rng);
      norm += v * v;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (auto& v : d) v /= norm;
  return d;
}

inline double least_squares_slope(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace detail

/// Fits the decay order of eps*(x) = |u + g~(x) - g(u)| / |x| on log-spaced
/// shells. Passes iff the fitted slope is at most -d - margin. Shells where the
/// remainder vanishes (exactly zero, e.g. after Gaussian underflow) count as
/// faster-than-any-power decay.
inline DecayFit check_epsilon_decay(const ModelSpec& model, const std::function<double(double)>& g, double d,
                                    const DecayGrid& grid = {}) {
  require(d > 0.0, ErrorCode::InvalidParameter, "decay order d must be positive");
  require(static_cast<bool>(g), ErrorCode::InvalidParameter, "g must be callable");
  const std::size_t p = model.p();
  CounterRng rng(grid.seed, 0);
  DecayFit fit;
  const double lo = std::log(grid.r_min), hi = std::log(grid.r_max);
  std::vector<double> x(p);
  for (std::size_t s = 0; s < grid.shells; ++s) {
    const double radius =
        std::exp(lo + (hi - lo) * static_cast<double>(s) / static_cast<double>(std::max<std::size_t>(grid.shells - 1, 1)));
    double worst = 0.0;
    const std::size_t dirs = p == 1 ? 2 : grid.directions;
    for (std::size_t k = 0; k < dirs; ++k) {
      if (p == 1) {
        x[0] = k == 0 ? radius : -radius;
      } else {
        const auto dir = detail::random_direction(rng, p);
        for (std::size_t i = 0; i < p; ++i) x[i] = radius * dir[i];
      }
      const double u = model.filtered(x);
      const double rem = std::abs(u + nonlinear_part(model, x) - g(u)) / radius;
      worst = std::max(worst, rem);
    }
    fit.radii.push_back(radius);
    fit.shell_max.push_back(worst);
  }

  const double tiny = std::numeric_limits<double>::min();
  std::vector<double> lx, ly;
  for (std::size_t s = 0; s < fit.radii.size(); ++s) {
    if (fit.shell_max[s] > tiny) {
      lx.push_back(std::log(fit.radii[s]));
      ly.push_back(std::log(fit.shell_max[s]));
    }
  }
  const bool vanishes_in_tail = fit.shell_max.back() <= tiny;
  if (lx.size() < 2 || vanishes_in_tail) {
    fit.slope = -std::numeric_limits<double>::infinity();
  } else {
    fit.slope = detail::least_squares_slope(lx, ly);
  }
  fit.passes = fit.slope <= -d - grid.margin;
  return fit;
}

// ---------------------------------------------------------------------------
// Monte Carlo drift verification

struct DriftGrid {
  std::vector<double> shells = {1, 2, 5, 10, 20, 50, 100};
  std::size_t directions = 32;
  bool axis_points = true;
  /// Number of outermost shells that must satisfy the drift for a pass.
  std::size_t min_tail_shells = 2;
  std::uint64_t direction_seed = 11;
};

struct MonteCarloConfig {
  std::size_t reps = 200000;
  std::uint64_t seed = 1;
  /// Normal quantile for the two-sided confidence interval (99%).
  double z = 2.5758293035489004;
  /// Optional relative target for ci / V(x); 0 disables the adaptive loop.
  double target_relative_ci = 0.0;
  std::size_t max_reps = 3200000;
  std::size_t threads = 0;
  std::size_t blocks = 32;
  /// Averages each draw with its mirror image, (V(gbar + eps) + V(gbar - eps)) / 2,
  /// when the error law is symmetric (Gaussian, scaled t). Unbiased; removes the
  /// first-order noise term from the variance.
  bool antithetic = true;
};

struct DriftReport {
  std::vector<std::vector<double>> grid;
  std::vector<double> radius;
  std::vector<double> V;
  std::vector<double> expected_V;
  std::vector<double> margins;
  std::vector<double> ci_halfwidth;
  std::vector<std::size_t> reps_used;
  double suggested_b = 0.0;
  double suggested_C_radius = 0.0;
  bool pass = false;
  bool heavy_tail_guard = false;
  bool budget_exceeded = false;
  /// alpha = rho/b3 - 1 of the proof's drift rate, when V is subexponential and rho is known.
  std::optional<double> proof_alpha;

  bool point_passes(std::size_t i) const {
    return radius[i] > suggested_C_radius ? margins[i] + ci_halfwidth[i] <= 0.0 : margins[i] <= suggested_b;
  }
};

inline std::vector<std::vector<double>> drift_grid_points(std::size_t p, const DriftGrid& grid,
                                                          std::vector<double>* radii = nullptr) {
  std::vector<std::vector<double>> pts;
  CounterRng rng(grid.direction_seed, 0);
  for (double r : grid.shells) {
    auto push = [&](std::vector<double> x) {
      pts.push_back(std::move(x));
      if (radii) radii->push_back(r);
    };
    if (p == 1) {
      push({r});
      push({-r});
      continue;
    }
    for (std::size_t k = 0; k < grid.directions; ++k) {
      auto d = detail::random_direction(rng, p);
      for (auto& v : d) v *= r;
      push(std::move(d));
    }
    if (grid.axis_points) {
      for (std::size_t i = 0; i < p; ++i) {
        for (double sign : {1.0, -1.0}) {
          std::vector<double> x(p, 0.0);
          x[i] = sign * r;
          push(std::move(x));
        }
      }
    }
  }
  return pts;
}

/// Polynomial degree of V for the heavy-tail guard (infinite for exponential V).
inline double lyapunov_degree(const LyapunovV& v) {
  if (const auto* q = std::get_if<PolynomialV>(&v)) return q->s0;
  return std::numeric_limits<double>::infinity();
}

namespace detail {

struct PointEstimate {
  double mean = 0.0;
  double halfwidth = 0.0;
};

/// Mean and CLT half-width, or median-of-means with a MAD-based spread.
inline PointEstimate summarize(const std::vector<double>& samples, double z, bool robust, std::size_t blocks) {
  const std::size_t n = samples.size();
  if (!robust) {
    double mean = 0.0, m2 = 0.0;
    std::size_t k = 0;
    for (double s : samples) {
      ++k;
      const double delta = s - mean;
      mean += delta / static_cast<double>(k);
      m2 += delta * (s - mean);
    }
    const double var = n > 1 ? m2 / static_cast<double>(n - 1) : 0.0;
    return {mean, z * std::sqrt(var / static_cast<double>(n))};
  }
  blocks = std::max<std::size_t>(std::min(blocks, n), 1);
  std::vector<double> means(blocks, 0.0);
  const std::size_t per = n / blocks;
  for (std::size_t b = 0; b < blocks; ++b) {
    double s = 0.0;
    for (std::size_t i = b * per; i < (b + 1) * per; ++i) s += samples[i];
    means[b] = s / static_cast<double>(per);
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size();
    return m % 2 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
  };
  const double med = median(means);
  std::vector<double> dev(blocks);
  for (std::size_t b = 0; b < blocks; ++b) dev[b] = std::abs(means[b] - med);
  const double sigma_block = 1.482602218505602 * median(dev);
  // Asymptotic sd of a sample median is sqrt(pi/2) times the sd of the mean.
  const double se = 1.2533141373155003 * sigma_block / std::sqrt(static_cast<double>(blocks));
  return {med, z * se};
}

template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(n, 1));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += threads) fn(i);
    });
  for (auto& th : pool) th.join();
}

}  // namespace detail

/// For every grid state x, estimates E[V(y_1) | y_0 = x] by Monte Carlo and
/// reports margin = estimate - V(x) + phi(V(x)). The C radius is the smallest
/// shell radius R such that every point on shells beyond R has
/// margin + ci <= 0; b is the largest margin + ci inside. The check passes when
/// at least `min_tail_shells` outer shells lie beyond R.
///
/// Each grid point draws from its own stream (seed, point index), so the
/// report does not depend on the thread count.
inline DriftReport verify_drift(const ModelSpec& model, const DriftSpec& spec, const DriftGrid& grid = {},
                                const MonteCarloConfig& mc = {}) {
  require(model.p() == spec.p(), ErrorCode::DimensionMismatch, "model and drift spec disagree on p");
  require(mc.reps >= 2, ErrorCode::InvalidParameter, "need at least two Monte Carlo reps");
  const std::size_t p = model.p();
  DriftReport report;
  report.grid = drift_grid_points(p, grid, &report.radius);
  const std::size_t n = report.grid.size();
  report.V.resize(n);
  report.expected_V.resize(n);
  report.margins.resize(n);
  report.ci_halfwidth.resize(n);
  report.reps_used.resize(n);

  if (const auto* poly = std::get_if<PolynomialMoments>(&model.noise().moments()))
    report.heavy_tail_guard = poly->s0 < 4.0 * lyapunov_degree(spec.v());
  if (const auto* sub = std::get_if<SubexponentialV>(&spec.v())) {
    if (const auto rho = declared_rho(model)) report.proof_alpha = *rho / sub->b3 - 1.0;
  }

  const CompanionForm& comp = spec.companion();
  const bool mirror = mc.antithetic && !std::holds_alternative<CustomNoise>(model.noise().kind());
  std::vector<char> exceeded(n, 0);
  detail::parallel_for(n, mc.threads, [&](std::size_t i) {
    const std::vector<double>& x = report.grid[i];
    const ZSplit z = transform_z(comp, x);
    const double v_here = eval_V_split(spec.v(), p, z.z1, star_norm(comp, z.z2));
    // The noise only enters the first coordinate of A y_1; z2(y_1) = Pi1 z2 + z1 iota.
    Eigen::VectorXd z2_next;
    double z2_next_norm = 0.0;
    if (p > 1) {
      z2_next = comp.Pi1 * z.z2;
      z2_next(0) += z.z1;
      z2_next_norm = star_norm(comp, z2_next);
    }
    // u_1 = u_0 + g~(x) + eps, i.e. z1(y_1) = gbar(x) + eps.
    const double gbar = z.z1 + nonlinear_part(model, x);

    const double z2_const = detail::z2_part(spec.v(), p, z2_next_norm);

    NoiseSampler noise(model.noise(), CounterRng(mc.seed, i));
    std::vector<double> samples;
    std::size_t reps = mc.reps;
    detail::PointEstimate est;
    for (;;) {
      samples.reserve(reps);
      while (samples.size() < reps) {
        const double eps = noise();
        double f = detail::z1_part(spec.v(), p, gbar + eps);
        if (mirror) f = 0.5 * (f + detail::z1_part(spec.v(), p, gbar - eps));
        samples.push_back(f + z2_const);
      }
      est = detail::summarize(samples, mc.z, report.heavy_tail_guard, mc.blocks);
      if (mc.target_relative_ci <= 0.0 || est.halfwidth <= mc.target_relative_ci * v_here) break;
      if (reps >= mc.max_reps) {
        exceeded[i] = 1;
        break;
      }
      reps = std::min(2 * reps, mc.max_reps);
    }
    report.V[i] = v_here;
    report.expected_V[i] = est.mean;
    report.margins[i] = est.mean - v_here + eval_phi(spec.phi(), v_here);
    report.ci_halfwidth[i] = est.halfwidth;
    report.reps_used[i] = samples.size();
  });
  report.budget_exceeded = std::any_of(exceeded.begin(), exceeded.end(), [](char c) { return c != 0; });

  // Smallest shell radius beyond which every point drifts inward.
  std::vector<double> shells = grid.shells;
  std::sort(shells.begin(), shells.end());
  double c_radius = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (report.margins[i] + report.ci_halfwidth[i] > 0.0) c_radius = std::max(c_radius, report.radius[i]);
  report.suggested_C_radius = c_radius;
  double b = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (report.radius[i] <= c_radius) b = std::max(b, report.margins[i] + report.ci_halfwidth[i]);
  report.suggested_b = b;
  const auto tail = static_cast<std::size_t>(std::count_if(shells.begin(), shells.end(), [&](double r) { return r > c_radius; }));
  report.pass = tail >= std::max<std::size_t>(grid.min_tail_shells, 1);
  return report;
}

/// Halves the small constants (phi's c together with the z2 weight b2 or s1)
/// until the drift check passes or the constants reach `floor`.
struct ShrinkResult {
  DriftSpec spec;
  DriftReport report;
  int halvings = 0;
};

inline ShrinkResult verify_drift_autoshrink(const ModelSpec& model, DriftSpec spec, const DriftGrid& grid = {},
                                            const MonteCarloConfig& mc = {}, double floor = 1e-6) {
  int halvings = 0;
  for (;;) {
    DriftReport report = verify_drift(model, spec, grid, mc);
    if (report.pass) return {std::move(spec), std::move(report), halvings};
    LyapunovV v = spec.v();
    DriftPhi phi = spec.phi();
    bool shrunk = false;
    auto halve = [&](double& c) {
      if (c / 2.0 >= floor) {
        c /= 2.0;
        shrunk = true;
      }
    };
    std::visit([&](auto& f) {
      using T = std::decay_t<decltype(f)>;
      if constexpr (std::is_same_v<T, GeometricPhi>) halve(f.lambda);
      else halve(f.c);
    }, phi);
    if (auto* s = std::get_if<SubexponentialV>(&v)) halve(s->b2);
    else halve(std::get<PolynomialV>(v).s1);
    if (!shrunk) return {std::move(spec), std::move(report), halvings};
    spec = DriftSpec(v, phi, spec.companion());
    ++halvings;
  }
}

/// CSV with columns x1..xp, margin, ci, pass.
inline void write_drift_csv(std::ostream& os, const DriftReport& report) {
  const std::size_t p = report.grid.empty() ? 0 : report.grid.front().size();
  for (std::size_t j = 0; j < p; ++j) os << 'x' << (j + 1) << ',';
  os << "margin,ci,pass\n";
  os.precision(17);
  for (std::size_t i = 0; i < report.grid.size(); ++i) {
    for (double v : report.grid[i]) os << v << ',';
    os << report.margins[i] << ',' << report.ci_halfwidth[i] << ',' << (report.point_passes(i) ? 1 : 0) << '\n';
  }
}

}  // namespace nlar
