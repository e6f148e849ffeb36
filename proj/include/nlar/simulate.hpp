#pragma once

// Trajectory simulation, sample autocorrelations, and ensemble total-variation
// diagnostics for comparing observed convergence with a rate certificate.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "nlar/drift.hpp"
#include "nlar/error.hpp"
#include "nlar/model.hpp"
#include "nlar/rng.hpp"

namespace nlar {

/// Stable text description of a model, used for fingerprints. Custom terms and
/// custom noise contribute only their labels.
inline std::string describe(const ModelSpec& model) {
  std::ostringstream os;
  os.precision(17);
  os << "pi:";
  for (double v : model.pi()) os << ' ' << v;
  os << ";term:";
  auto h_text = [&os](const HSpec& h) {
    os << " h(" << static_cast<int>(h.family()) << ',' << h.rho1() << ',' << h.rho2() << ',' << h.a1() << ','
       << h.a2() << ')';
  };
  std::visit(
      [&](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, ZeroTerm>) os << " zero";
        else if constexpr (std::is_same_v<T, LstarIntercept>)
          os << " lstar " << t.nu1 << ' ' << t.nu2 << ' ' << t.b << ' ' << t.a1 << ' ' << t.a2;
        else if constexpr (std::is_same_v<T, EstarSlope>) {
          os << " estar " << static_cast<int>(t.kind) << ' ' << t.r0 << ' ' << t.nu;
          h_text(t.h);
        } else if constexpr (std::is_same_v<T, GeneralEstar>) {
          os << " general_estar " << static_cast<int>(t.kind) << ' ' << t.r0 << ' ' << t.gamma;
          for (double v : t.theta) os << ' ' << v;
          h_text(t.h);
        } else os << " custom " << t.label;
      },
      model.nonlinear());
  os << ";noise:";
  std::visit(
      [&](const auto& k) {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, Gaussian>) os << " gaussian " << k.variance;
        else if constexpr (std::is_same_v<T, ScaledStudentT>) os << " t " << k.df << ' ' << k.variance;
        else os << " custom " << k.label;
      },
      model.noise().kind());
  return os.str();
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t model_fingerprint(const ModelSpec& model) { return fnv1a(describe(model)); }

struct Trajectory {
  std::vector<double> y;
  std::vector<double> u;
  /// I(u_{t-1}) or S(u_{t-1}); NaN for models without a time-varying coefficient.
  std::vector<double> coefficient;
  std::uint64_t seed = 0;
  std::size_t burn_in = 0;
  std::uint64_t fingerprint = 0;

  std::size_t size() const { return y.size(); }
};

/// Simulates n observations after discarding burn_in. The chain starts from
/// `init` = (y_0, y_{-1}, ..., y_{-p+1}) when given and from zeros otherwise;
/// with the default burn-in the zero start acts as a stationary warm-up. One
/// rng stream (seed, 0) drives every draw, so the output is a pure function of
/// (model, n, burn_in, seed, init).
inline Trajectory simulate(const ModelSpec& model, std::size_t n, std::size_t burn_in, std::uint64_t seed,
                           std::optional<std::vector<double>> init = std::nullopt) {
  require(n >= 1, ErrorCode::InvalidParameter, "n must be at least 1");
  const std::size_t p = model.p();
  std::vector<double> hist = init.value_or(std::vector<double>(p, 0.0));
  require(hist.size() == p, ErrorCode::HistoryLengthMismatch,
          "initial state has " + std::to_string(hist.size()) + " values, model needs " + std::to_string(p));

  Trajectory out;
  out.seed = seed;
  out.burn_in = burn_in;
  out.fingerprint = model_fingerprint(model);
  out.y.reserve(n);
  out.u.reserve(n);
  out.coefficient.reserve(n);

  NoiseSampler noise(model.noise(), CounterRng(seed, 0));
  for (std::size_t t = 0; t < burn_in + n; ++t) {
    const double eps = noise();
    const StepDetail d = step_detail(model, hist, eps);
    std::rotate(hist.rbegin(), hist.rbegin() + 1, hist.rend());
    hist[0] = d.y;
    if (t >= burn_in) {
      out.y.push_back(d.y);
      out.u.push_back(d.u);
      out.coefficient.push_back(d.coefficient);
    }
  }
  return out;
}

/// Sample autocorrelations r_k = sum (x_t - m)(x_{t+k} - m) / sum (x_t - m)^2,
/// k = 0..max_lag.
inline std::vector<double> acf(std::span<const double> series, std::size_t max_lag) {
  const std::size_t n = series.size();
  require(max_lag < n, ErrorCode::InvalidParameter, "max_lag must be below the series length");
  double mean = 0.0;
  for (double v : series) mean += v;
  mean /= static_cast<double>(n);
  double c0 = 0.0;
  for (double v : series) c0 += (v - mean) * (v - mean);
  if (!(c0 > 0.0)) throw Error(ErrorCode::DegenerateSeries, "series has zero sample variance");
  std::vector<double> r(max_lag + 1);
  r[0] = 1.0;
  for (std::size_t k = 1; k <= max_lag; ++k) {
    double ck = 0.0;
    for (std::size_t t = 0; t + k < n; ++t) ck += (series[t] - mean) * (series[t + k] - mean);
    r[k] = ck / c0;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Ensemble TV

struct ReferenceConfig {
  std::size_t size = 1000000;
  std::size_t thin = 10;
  std::size_t burn_in = 10000;
};

struct EnsembleConfig {
  std::size_t reps = 10000;
  std::uint64_t seed = 1;
  std::size_t threads = 0;
  /// Runs the stationary-start calibration that measures the noise floor.
  bool calibrate = true;
  /// Upper bound on total simulated transitions.
  double max_steps = 5e9;
};

inline std::vector<std::size_t> default_horizons() { return {1, 2, 5, 10, 20, 50, 100, 200, 500}; }

struct MixingReport {
  std::vector<std::size_t> horizons;
  std::vector<double> tv;
  /// Sampling half-width of each estimate: 1/2 sum_k sqrt(q_k (1 - q_k) / reps).
  std::vector<double> ci;
  /// Mean TV of the stationary-start calibration run (0 when not calibrated).
  double noise_floor = 0.0;
  std::vector<double> floor_tv;
  std::size_t reps = 0;
  std::size_t bins = 0;
};

/// Stationary reference sample: one long chain, thinned; each entry is a full
/// state (y_t, ..., y_{t-p+1}).
struct ReferenceSample {
  std::vector<std::vector<double>> states;
  std::vector<double> first;  // sorted first coordinates
};

inline ReferenceSample reference_sample(const ModelSpec& model, const ReferenceConfig& cfg, std::uint64_t seed) {
  require(cfg.size >= 1 && cfg.thin >= 1, ErrorCode::InvalidParameter, "reference size and thinning must be positive");
  const std::size_t p = model.p();
  ReferenceSample ref;
  ref.states.reserve(cfg.size);
  std::vector<double> hist(p, 0.0);
  NoiseSampler noise(model.noise(), CounterRng(seed, 0));
  const std::size_t total = cfg.burn_in + cfg.size * cfg.thin;
  for (std::size_t t = 0; t < total; ++t) {
    const double y = step(model, hist, noise());
    std::rotate(hist.rbegin(), hist.rbegin() + 1, hist.rend());
    hist[0] = y;
    if (t >= cfg.burn_in && (t - cfg.burn_in + 1) % cfg.thin == 0) ref.states.push_back(hist);
  }
  ref.first.reserve(ref.states.size());
  for (const auto& s : ref.states) ref.first.push_back(s[0]);
  std::sort(ref.first.begin(), ref.first.end());
  return ref;
}

namespace detail {

/// Half L1 distance between the binned empirical laws of `sample` and the
/// sorted reference, on ceil(reps^(1/3)) quantile bins of the pooled sample.
/// Returns {tv, sampling half-width}.
inline std::pair<double, double> binned_tv(std::vector<double> sample, const std::vector<double>& ref_sorted) {
  const std::size_t m = sample.size();
  const auto bins = static_cast<std::size_t>(std::ceil(std::cbrt(static_cast<double>(m)) - 1e-9));
  std::sort(sample.begin(), sample.end());
  std::vector<double> pooled;
  pooled.reserve(m + ref_sorted.size());
  std::merge(sample.begin(), sample.end(), ref_sorted.begin(), ref_sorted.end(), std::back_inserter(pooled));

  std::vector<double> edges;  // interior cut points
  for (std::size_t k = 1; k < bins; ++k) {
    const std::size_t idx = std::min(pooled.size() - 1, k * pooled.size() / bins);
    if (edges.empty() || pooled[idx] > edges.back()) edges.push_back(pooled[idx]);
  }
  auto counts = [&edges](const std::vector<double>& sorted) {
    std::vector<double> c(edges.size() + 1);
    std::size_t prev = 0;
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const auto pos =
          static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), edges[k]) - sorted.begin());
      c[k] = static_cast<double>(pos - prev);
      prev = pos;
    }
    c.back() = static_cast<double>(sorted.size() - prev);
    for (double& v : c) v /= static_cast<double>(sorted.size());
    return c;
  };
  const std::vector<double> ps = counts(sample);
  const std::vector<double> qs = counts(ref_sorted);
  double tv = 0.0, half = 0.0;
  for (std::size_t k = 0; k < ps.size(); ++k) {
    tv += std::abs(ps[k] - qs[k]);
    half += std::sqrt(qs[k] * (1.0 - qs[k]) / static_cast<double>(m));
  }
  return {std::clamp(0.5 * tv, 0.0, 1.0), 0.5 * half};
}

/// Runs reps chains and records y at each horizon; start(i) gives chain i's state.
template <class Start>
std::vector<std::vector<double>> run_ensemble(const ModelSpec& model, const std::vector<std::size_t>& horizons,
                                              std::size_t reps, std::uint64_t seed, std::uint64_t stream_offset,
                                              std::size_t threads, Start&& start) {
  std::vector<std::vector<double>> at(horizons.size(), std::vector<double>(reps));
  const std::size_t last = horizons.back();
  parallel_for(reps, threads, [&](std::size_t i) {
    std::vector<double> hist = start(i);
    NoiseSampler noise(model.noise(), CounterRng(seed, stream_offset + i));
    std::size_t h = 0;
    for (std::size_t t = 1; t <= last; ++t) {
      const double y = step(model, hist, noise());
      std::rotate(hist.rbegin(), hist.rbegin() + 1, hist.rend());
      hist[0] = y;
      if (t == horizons[h]) at[h++][i] = y;
    }
  });
  return at;
}

}  // namespace detail

/// For each horizon n, the TV distance between the law of y_n (chains started
/// at x0) and the first-coordinate marginal of a long-run reference sample.
/// Replication i uses rng stream 1 + i; the calibration run starts each chain
/// from a reference state and uses streams 2^32 + i.
inline MixingReport ensemble_tv(const ModelSpec& model, std::span<const double> x0,
                                std::vector<std::size_t> horizons = default_horizons(),
                                const EnsembleConfig& cfg = {}, const ReferenceConfig& ref_cfg = {}) {
  require(cfg.reps >= 1000, ErrorCode::InvalidParameter, "ensemble_tv needs at least 1000 replications");
  require(x0.size() == model.p(), ErrorCode::HistoryLengthMismatch, "x0 length must equal p");
  require(!horizons.empty() && horizons.front() >= 1, ErrorCode::InvalidParameter, "horizons must be positive");
  for (std::size_t i = 1; i < horizons.size(); ++i)
    require(horizons[i] > horizons[i - 1], ErrorCode::InvalidParameter, "horizons must be strictly increasing");
  const double steps = static_cast<double>(ref_cfg.burn_in) +
                       static_cast<double>(ref_cfg.size) * static_cast<double>(ref_cfg.thin) +
                       static_cast<double>(cfg.reps) * static_cast<double>(horizons.back()) * (cfg.calibrate ? 2 : 1);
  if (steps > cfg.max_steps)
    throw Error(ErrorCode::BudgetExceeded,
                "ensemble needs " + std::to_string(steps) + " transitions, budget is " + std::to_string(cfg.max_steps));

  const ReferenceSample ref = reference_sample(model, ref_cfg, cfg.seed);
  const std::vector<double> start(x0.begin(), x0.end());

  MixingReport report;
  report.horizons = horizons;
  report.reps = cfg.reps;
  report.bins = static_cast<std::size_t>(std::ceil(std::cbrt(static_cast<double>(cfg.reps)) - 1e-9));

  const auto at = detail::run_ensemble(model, horizons, cfg.reps, cfg.seed, 1, cfg.threads,
                                       [&start](std::size_t) { return start; });
  for (const auto& sample : at) {
    const auto [tv, half] = detail::binned_tv(sample, ref.first);
    report.tv.push_back(tv);
    report.ci.push_back(half);
  }

  if (cfg.calibrate) {
    const std::size_t nref = ref.states.size();
    const auto cal = detail::run_ensemble(model, horizons, cfg.reps, cfg.seed, std::uint64_t{1} << 32, cfg.threads,
                                          [&](std::size_t i) {
                                            // spread the starts evenly over the reference chain
                                            return ref.states[(i * nref) / cfg.reps];
                                          });
    double sum = 0.0;
    for (const auto& sample : cal) {
      report.floor_tv.push_back(detail::binned_tv(sample, ref.first).first);
      sum += report.floor_tv.back();
    }
    report.noise_floor = sum / static_cast<double>(cal.size());
  }
  return report;
}

// ---------------------------------------------------------------------------
// Rate fitting

enum class DecayClass { Polynomial, Geometric };

inline std::string to_string(DecayClass c) { return c == DecayClass::Polynomial ? "Polynomial" : "Geometric"; }

struct MixingFit {
  DecayClass class_guess = DecayClass::Polynomial;
  /// Magnitude of the preferred fit's slope.
  double exponent = 0.0;
  /// log-log slope magnitude (TV ~ n^-exponent).
  double poly_exponent = 0.0;
  /// exp(log-linear slope) (TV ~ rate^n).
  double geometric_rate = 1.0;
  double rss_poly = 0.0;
  double rss_geometric = 0.0;
  /// R^2 of the preferred fit.
  double goodness = 0.0;
  std::size_t points = 0;
};

struct FitOptions {
  /// Horizons with tv > floor_multiple * noise_floor are used, and the floor is
  /// subtracted before taking logs.
  double floor_multiple = 1.5;
  std::size_t min_points = 4;
  /// The last usable TV must be below this fraction of the first.
  double min_decay = 0.5;
};

/// Least squares of log(tv - floor) against log n and against n.
inline MixingFit fit_mixing_rate(const MixingReport& report, const FitOptions& opt = {}) {
  require(report.tv.size() == report.horizons.size(), ErrorCode::DimensionMismatch, "tv and horizons differ in length");
  std::vector<double> logn, n, logtv;
  for (std::size_t i = 0; i < report.tv.size(); ++i) {
    const double excess = report.tv[i] - report.noise_floor;
    if (report.tv[i] > opt.floor_multiple * report.noise_floor && excess > 0.0) {
      n.push_back(static_cast<double>(report.horizons[i]));
      logn.push_back(std::log(n.back()));
      logtv.push_back(std::log(excess));
    }
  }
  if (n.size() < opt.min_points)
    throw Error(ErrorCode::InsufficientDecay,
                "only " + std::to_string(n.size()) + " horizons lie above the noise floor");
  if (!(logtv.back() - logtv.front() < std::log(opt.min_decay)))
    throw Error(ErrorCode::InsufficientDecay, "TV does not decay materially over the usable horizons");

  auto fit = [&logtv](const std::vector<double>& x) {
    const auto m = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      mx += x[i];
      my += logtv[i];
    }
    mx /= m;
    my /= m;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      sxx += (x[i] - mx) * (x[i] - mx);
      sxy += (x[i] - mx) * (logtv[i] - my);
      syy += (logtv[i] - my) * (logtv[i] - my);
    }
    const double slope = sxy / sxx;
    double rss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = logtv[i] - (my + slope * (x[i] - mx));
      rss += r * r;
    }
    const double r2 = syy > 0.0 ? 1.0 - rss / syy : 1.0;
    return std::tuple{slope, rss, r2};
  };
  const auto [sp, rp, r2p] = fit(logn);
  const auto [sg, rg, r2g] = fit(n);

  MixingFit out;
  out.points = n.size();
  out.poly_exponent = -sp;
  out.geometric_rate = std::exp(sg);
  out.rss_poly = rp;
  out.rss_geometric = rg;
  if (rp <= rg) {
    out.class_guess = DecayClass::Polynomial;
    out.exponent = std::abs(sp);
    out.goodness = r2p;
  } else {
    out.class_guess = DecayClass::Geometric;
    out.exponent = std::abs(sg);
    out.goodness = r2g;
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV

/// Columns: t,y,u,coefficient (t counts from 1 after burn-in; coefficient is
/// empty when the model has none).
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  os.precision(17);
  os << "t,y,u,coefficient\n";
  for (std::size_t t = 0; t < traj.size(); ++t) {
    os << t + 1 << ',' << traj.y[t] << ',' << traj.u[t] << ',';
    if (!std::isnan(traj.coefficient[t])) os << traj.coefficient[t];
    os << '\n';
  }
}

/// Columns: lag,value.
inline void write_acf_csv(std::ostream& os, std::span<const double> values) {
  os.precision(17);
  os << "lag,value\n";
  for (std::size_t k = 0; k < values.size(); ++k) os << k << ',' << values[k] << '\n';
}

/// Columns: horizon,tv,ci.
inline void write_mixing_csv(std::ostream& os, const MixingReport& report) {
  os.precision(17);
  os << "horizon,tv,ci\n";
  for (std::size_t i = 0; i < report.horizons.size(); ++i)
    os << report.horizons[i] << ',' << report.tv[i] << ',' << report.ci[i] << '\n';
}

}  // namespace nlar
