#pragma once

// Maps (tail exponent rho, error moment class) to an ergodicity-rate
// certificate: geometric, subexponential r(n) = exp(k n^(b3/rho)), or
// polynomial r(n) = n^(delta-1), together with the implied beta-mixing rate
// and the order of finite stationary moments.

#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "nlar/companion.hpp"
#include "nlar/drift.hpp"
#include "nlar/envelope.hpp"
#include "nlar/error.hpp"
#include "nlar/model.hpp"

namespace nlar {

enum class RateClass { Geometric, Subexponential, Polynomial };

inline std::string to_string(RateClass c) {
  switch (c) {
    case RateClass::Geometric: return "Geometric";
    case RateClass::Subexponential: return "Subexponential";
    case RateClass::Polynomial: return "Polynomial";
  }
  return "Unknown";
}

struct RateCertificate {
  RateClass rate_class = RateClass::Geometric;
  double rho = 0.0;
  /// Subexponential: b3 = kappa0 ^ (2 - rho) and the rate exponent b3 / rho.
  double b3 = 0.0;
  double exponent = 0.0;
  /// Polynomial: s0 and the admissible delta range [1, s0/rho]; r(n) = n^(delta-1).
  double s0 = 0.0;
  double delta_max = 0.0;
  /// Fastest polynomial rate n^(s0/rho - 1); also the beta-mixing exponent.
  double poly_rate = 0.0;
  std::string rate;
  std::string f_norm;
  std::string beta_mixing;
  /// Order of guaranteed finite stationary moments; +inf for "all orders".
  double moments = std::numeric_limits<double>::infinity();
  std::optional<double> envelope_r;
  std::vector<std::string> trace;
};

struct ClassifyExtra {
  /// Envelope constant r (needed when rho = 2).
  std::optional<double> r;
  /// E[eps^2] (needed when rho = 2).
  std::optional<double> second_moment;
  /// |rho - kappa0| <= tolerance claims the borderline geometric case.
  double tolerance = 0.0;
  /// Within this band (but outside tolerance) the borderline is ambiguous.
  double ambiguity_band = 1e-8;
};

namespace detail {

inline std::string num(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

inline RateCertificate polynomial_certificate(double rho, double s0, std::string clause) {
  RateCertificate cert;
  cert.rate_class = RateClass::Polynomial;
  cert.rho = rho;
  cert.s0 = s0;
  cert.delta_max = s0 / rho;
  cert.poly_rate = s0 / rho - 1.0;
  cert.rate = "r(n) = n^(delta-1), delta in [1, " + num(cert.delta_max) + "]; fastest n^" + num(cert.poly_rate);
  cert.f_norm = "f = V^(1 - delta*" + num(rho) + "/" + num(s0) + ")";
  cert.beta_mixing = "n^" + num(cert.poly_rate) + " beta(n) -> 0";
  cert.moments = s0 - rho;
  cert.trace.push_back(std::move(clause));
  cert.trace.push_back("moments: finite up to order s0 - rho = " + num(cert.moments));
  return cert;
}

}  // namespace detail

/// Clause dispatch. Throws NotCovered when no clause applies and
/// BorderlineAmbiguous when rho is within the ambiguity band of kappa0 but not
/// within the configured tolerance.
inline RateCertificate classify(double rho, const MomentClass& moments, const ClassifyExtra& extra = {},
                                bool mean_zero = true) {
  require(rho > 0.0 && rho <= 2.0, ErrorCode::InvalidParameter, "rho must lie in (0,2]");
  using detail::num;

  if (const auto* sub = std::get_if<SubexponentialMoments>(&moments)) {
    const double k0 = sub->kappa0;
    require(k0 > 0.0 && k0 <= 1.0, ErrorCode::InvalidParameter, "kappa0 must lie in (0,1]");
    require(mean_zero, ErrorCode::NotCovered, "exponential-moment errors must have mean zero");
    const double gap = std::abs(rho - k0);
    if (gap <= extra.tolerance) {
      RateCertificate cert;
      cert.rate_class = RateClass::Geometric;
      cert.rho = rho;
      cert.b3 = k0;
      cert.rate = "r(n) = exp(c n) for some c > 0";
      cert.f_norm = "f = V";
      cert.beta_mixing = "r~^n beta(n) -> 0 for some r~ > 1";
      cert.trace.push_back("subexponential-moment errors with rho = kappa0 = " + num(k0) +
                           ": borderline geometric case, b3 = kappa0");
      cert.trace.push_back("moments: all orders");
      return cert;
    }
    if (gap < extra.ambiguity_band)
      throw Error(ErrorCode::BorderlineAmbiguous,
                  "|rho - kappa0| = " + num(gap) + " is within the ambiguity band but exceeds the tolerance");
    if (rho < k0) {
      RateCertificate cert;
      cert.rate_class = RateClass::Geometric;
      cert.rho = rho;
      cert.b3 = k0;
      cert.rate = "r(n) = exp(c n) for some c > 0";
      cert.f_norm = "f = V";
      cert.beta_mixing = "r~^n beta(n) -> 0 for some r~ > 1";
      cert.trace.push_back("rho < kappa0: geometric; this case is asserted without proof for higher orders and "
                           "is not theorem-backed here");
      cert.trace.push_back("moments: all orders");
      return cert;
    }
    if (rho < 2.0) {
      RateCertificate cert;
      cert.rate_class = RateClass::Subexponential;
      cert.rho = rho;
      cert.b3 = std::min(k0, 2.0 - rho);
      cert.exponent = cert.b3 / rho;
      cert.rate = "r(n) = exp(k n^" + num(cert.exponent) + "), 0 < k < (1-delta) (c*" + num(rho) + "/" +
                  num(cert.b3) + ")^" + num(cert.exponent);
      cert.f_norm = "f = V^delta, delta in (0,1)";
      cert.beta_mixing = "exp(k~ n^" + num(cert.exponent) + ") beta(n) -> 0, 0 < k~ < (c*" + num(rho) + "/(2*" +
                         num(cert.b3) + "))^" + num(cert.exponent);
      cert.trace.push_back("subexponential-moment errors with kappa0 = " + num(k0) + " < rho = " + num(rho) +
                           " < 2: b3 = kappa0 ^ (2 - rho) = " + num(cert.b3));
      cert.trace.push_back("drift rate phi shape: alpha = rho/b3 - 1 = " + num(rho / cert.b3 - 1.0));
      cert.trace.push_back("moments: all orders");
      return cert;
    }
    // rho = 2 lies outside the exponential-moment result; every polynomial
    // moment exists, so try the rho = 2 polynomial clause with s0 = 4.
    const PolynomialMoments fallback{4.0};
    RateCertificate cert = classify(rho, fallback, extra, mean_zero);
    cert.trace.insert(cert.trace.begin(), "rho = 2 with exponential moments: polynomial clause with s0 = 4");
    return cert;
  }

  const double s0 = std::get<PolynomialMoments>(moments).s0;
  require(s0 > rho, ErrorCode::NotCovered, "moment order s0 = " + num(s0) + " must exceed rho = " + num(rho));
  require(mean_zero || rho < 1.0, ErrorCode::NotCovered, "errors must have mean zero when rho >= 1");
  if (rho < 1.0) return detail::polynomial_certificate(rho, s0, "clause (i): 0 < rho < 1 and s0 > rho");
  if (rho < 2.0) {
    if (s0 == 2.0 || s0 >= 4.0)
      return detail::polynomial_certificate(rho, s0, "clause (ii): 1 <= rho < 2 and s0 = 2 or s0 >= 4");
    throw Error(ErrorCode::NotCovered,
                "1 <= rho < 2 needs s0 = 2 or s0 >= 4 (got rho = " + num(rho) + ", s0 = " + num(s0) + ")");
  }
  require(s0 >= 4.0, ErrorCode::NotCovered, "rho = 2 needs s0 >= 4");
  require(extra.r.has_value() && extra.second_moment.has_value(), ErrorCode::NotCovered,
          "rho = 2 needs the envelope r and E[eps^2]");
  const double lhs = s0 * *extra.r - 0.5 * s0 * (s0 - 1.0) * *extra.second_moment;
  if (!(lhs > 0.0))
    throw Error(ErrorCode::NotCovered, "rho = 2: s0 r - s0 (s0-1) E[eps^2] / 2 = " + num(lhs) + " is not positive");
  RateCertificate cert = detail::polynomial_certificate(
      rho, s0, "clause (iii): rho = 2, s0 >= 4, s0 r - s0 (s0-1) E[eps^2]/2 = " + num(lhs) + " > 0");
  cert.envelope_r = extra.r;
  return cert;
}

// ---------------------------------------------------------------------------
// Condition (h) on the ESTAR denominator

struct ConditionH {
  bool pass = false;
  double rho = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;
  double M0 = 0.0;
  std::string reason;
};

struct ConditionHGrid {
  std::size_t points = 20000;
  double u_max = 1e6;
  /// Constants are taken as suprema over |u| >= u_ref.
  double u_ref = 10.0;
  /// Growth tolerance for "bounded": sup over the last decade may exceed the
  /// sup over the previous decade by at most this factor.
  double growth = 1.05;
};

/// Numerically certifies c1 h(u) <= |u|^rho and |u|^(rho+c2) <= c3 h(u)^2 for
/// |u| >= M0 with c2 = rho/2. c1 = 1 / sup h/|u|^rho and c3 = sup |u|^(rho+c2)/h^2
/// over |u| >= u_ref; both ratios must stay bounded up to u_max; M0 is the
/// smallest grid radius from which both inequalities hold onward.
inline ConditionH check_condition_h(const HSpec& h, const ConditionHGrid& grid = {}) {
  ConditionH out;
  out.rho = h.rho();
  out.c2 = out.rho / 2.0;
  const double rho = out.rho;

  std::vector<double> mags;
  const double lo = std::log(1e-3), hi = std::log(grid.u_max);
  for (std::size_t i = 0; i < grid.points; ++i)
    mags.push_back(std::exp(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(grid.points - 1)));

  double sup1 = 0.0, sup3 = 0.0;
  double sup1_last = 0.0, sup1_prev = 0.0, sup3_last = 0.0, sup3_prev = 0.0;
  const double last_decade = grid.u_max / 10.0, prev_decade = grid.u_max / 100.0;
  struct Pt {
    double a, r1, r3;
  };
  std::vector<Pt> pts;
  for (double a : mags) {
    for (double u : {a, -a}) {
      const double hv = h(u);
      if (!(hv > 0.0) || !std::isfinite(hv)) {
        out.reason = "h is not positive and finite at u = " + detail::num(u);
        return out;
      }
      const double r1 = hv / std::pow(a, rho);
      const double r3 = std::pow(a, rho + out.c2) / (hv * hv);
      pts.push_back({a, r1, r3});
      if (a >= grid.u_ref) {
        sup1 = std::max(sup1, r1);
        sup3 = std::max(sup3, r3);
      }
      if (a >= last_decade) {
        sup1_last = std::max(sup1_last, r1);
        sup3_last = std::max(sup3_last, r3);
      } else if (a >= prev_decade) {
        sup1_prev = std::max(sup1_prev, r1);
        sup3_prev = std::max(sup3_prev, r3);
      }
    }
  }
  if (sup1_last > grid.growth * sup1_prev) {
    out.reason = "h(u)/|u|^rho keeps growing: c1 h(u) <= |u|^rho fails";
    return out;
  }
  if (sup3_last > grid.growth * sup3_prev) {
    out.reason = "|u|^(rho+c2)/h(u)^2 keeps growing: |u|^(rho+c2) <= c3 h(u)^2 fails";
    return out;
  }
  out.c1 = 1.0 / sup1;
  out.c3 = sup3;
  double m0 = grid.u_ref;
  std::sort(pts.begin(), pts.end(), [](const Pt& a, const Pt& b) { return a.a < b.a; });
  for (auto it = pts.rbegin(); it != pts.rend(); ++it) {
    if (out.c1 * it->r1 <= 1.0 + 1e-12 && it->r3 <= out.c3 * (1.0 + 1e-12)) m0 = it->a;
    else break;
  }
  out.M0 = m0;
  out.pass = true;
  return out;
}

// ---------------------------------------------------------------------------
// Model-level dispatch

inline void write_text(std::ostream& os, const RateCertificate& cert);

/// Classifies a model: the LSTAR intercept has rho = 1 with r = min(-nu1, nu2)/2;
/// the slope families take rho from condition (h) with r = c1 r0 / 2; custom
/// terms need an envelope certificate (or a declared g and rho, which are then
/// certified numerically).
inline RateCertificate classify_model(const ModelSpec& model, const ClassifyExtra& extra_in = {}) {
  ClassifyExtra extra = extra_in;
  extra.second_moment = extra.second_moment ? extra.second_moment : model.noise().variance();
  std::vector<std::string> trace;
  double rho = 0.0;
  using detail::num;

  std::visit(
      [&](const auto& term) {
        using T = std::decay_t<decltype(term)>;
        if constexpr (std::is_same_v<T, ZeroTerm>) {
          throw Error(ErrorCode::EnvelopeMissing, "pure unit-root model: g(u) = u admits no envelope");
        } else if constexpr (std::is_same_v<T, LstarIntercept>) {
          rho = 1.0;
          extra.r = extra.r ? extra.r : std::min(-term.nu1, term.nu2) / 2.0;
          trace.push_back("LSTAR intercept: rho = 1, envelope r = min(-nu1, nu2)/2 = " + num(*extra.r));
        } else if constexpr (std::is_same_v<T, EstarSlope> || std::is_same_v<T, GeneralEstar>) {
          const ConditionH ch = check_condition_h(term.h);
          if (!ch.pass) throw Error(ErrorCode::NotCovered, "condition (h) fails: " + ch.reason);
          rho = ch.rho;
          extra.r = extra.r ? extra.r : ch.c1 * term.r0 / 2.0;
          trace.push_back(std::string(std::is_same_v<T, EstarSlope> ? "ESTAR slope" : "general ESTAR") +
                          ": condition (h) holds with rho = " + num(rho) + ", c1 = " + num(ch.c1) +
                          ", c3 = " + num(ch.c3) + ", M0 = " + num(ch.M0) + "; envelope r = c1 r0/2 = " +
                          num(*extra.r));
          if constexpr (std::is_same_v<T, GeneralEstar>)
            trace.push_back("remainder exp(-gamma|y|^2) theta'y decays faster than any power of |y|");
        } else {
          EnvelopeCertificate env;
          if (term.envelope) {
            env = *term.envelope;
          } else if (term.g && term.rho) {
            env = check_g_envelope(term.g, *term.rho);
            trace.push_back("custom term: envelope certified numerically from declared g and rho");
          } else {
            throw Error(ErrorCode::EnvelopeMissing, "custom term needs an envelope certificate or declared g and rho");
          }
          if (!env.pass) throw Error(ErrorCode::NotCovered, "custom term fails the envelope check");
          rho = env.rho;
          extra.r = extra.r ? extra.r : env.r;
          trace.push_back("custom term: rho = " + num(rho) + ", r = " + num(env.r) + ", M0 = " + num(env.M0));
        }
      },
      model.nonlinear());

  RateCertificate cert = classify(rho, model.noise().moments(), extra, model.noise().mean_zero());
  cert.envelope_r = extra.r;
  if (const auto* t = std::get_if<ScaledStudentT>(&model.noise().kind()); t && cert.rate_class == RateClass::Polynomial)
    cert.trace.push_back("t(" + num(t->df) + ") errors have finite moments of every order s0 < " + num(t->df) +
                         "; reported for s0 = " + num(cert.s0) + ", taking s0 up to df gives n^(" + num(t->df) +
                         "/rho - 1 - delta) for any delta > 0");
  trace.insert(trace.end(), cert.trace.begin(), cert.trace.end());
  cert.trace = std::move(trace);
  return cert;
}

/// Drift specification suggested by a certificate, with the default small
/// constants b1 = b2 = min(beta0/4, 0.1), s1 = 0.01, c = 0.01.
inline DriftSpec implied_drift_spec(const ModelSpec& model, const RateCertificate& cert) {
  CompanionForm comp = build_companion(model);
  if (cert.rate_class == RateClass::Polynomial) {
    PolynomialV v{cert.s0, 0.01, cert.rho};
    return DriftSpec(v, PolyPhi{0.01, v.alpha()}, std::move(comp));
  }
  double beta0 = 1.0;
  if (const auto* sub = std::get_if<SubexponentialMoments>(&model.noise().moments())) beta0 = sub->beta0;
  const double b = std::min(beta0 / 4.0, 0.1);
  if (cert.rate_class == RateClass::Geometric)
    return DriftSpec(SubexponentialV{b, b, cert.b3}, GeometricPhi{0.01}, std::move(comp));
  return DriftSpec(SubexponentialV{b, b, cert.b3}, SubexpPhi{0.01, cert.rho / cert.b3 - 1.0, 0.0}, std::move(comp));
}

inline void write_text(std::ostream& os, const RateCertificate& cert) {
  os << "class: " << to_string(cert.rate_class) << '\n';
  os << "rho: " << cert.rho << '\n';
  os << "rate: " << cert.rate << '\n';
  os << "f-norm: " << cert.f_norm << '\n';
  os << "beta-mixing: " << cert.beta_mixing << '\n';
  os << "moments: " << (std::isinf(cert.moments) ? std::string("all orders") : "up to order " + detail::num(cert.moments))
     << '\n';
  if (cert.envelope_r) os << "envelope r: " << *cert.envelope_r << '\n';
  os << "trace:\n";
  for (const auto& t : cert.trace) os << "  - " << t << '\n';
}

/// One `key = value` per line; stable key set.
inline void write_key_values(std::ostream& os, const RateCertificate& cert) {
  os.precision(17);
  os << "class = " << to_string(cert.rate_class) << '\n';
  os << "rho = " << cert.rho << '\n';
  os << "b3 = " << cert.b3 << '\n';
  os << "exponent = " << cert.exponent << '\n';
  os << "s0 = " << cert.s0 << '\n';
  os << "delta_max = " << cert.delta_max << '\n';
  os << "poly_rate = " << cert.poly_rate << '\n';
  os << "moments = " << (std::isinf(cert.moments) ? std::string("inf") : detail::num(cert.moments)) << '\n';
  os << "envelope_r = " << (cert.envelope_r ? detail::num(*cert.envelope_r) : std::string("none")) << '\n';
}

}  // namespace nlar
