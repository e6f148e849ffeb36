#pragma once

// Higher-order nonlinear autoregressions with a single unit root:
//   y_t = pi_1 y_{t-1} + ... + pi_{p-1} y_{t-p+1} + u_{t-1} + g~(y_{t-1..t-p}) + eps_t,
// where u_t = y_t - pi_1 y_{t-1} - ... - pi_{p-1} y_{t-p+1} is the filtered process.

#include <cmath>
#include <complex>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "nlar/envelope.hpp"
#include "nlar/error.hpp"
#include "nlar/rng.hpp"

namespace nlar {

inline constexpr double kUnitRootTolerance = 1e-10;
inline constexpr double kStabilityMargin = 1e-8;

// ---------------------------------------------------------------------------
// Linear part

/// Roots of 1 - c_1 z - ... - c_k z^k, via the eigenvalues of the companion
/// matrix of c (the roots are their reciprocals).
inline std::vector<std::complex<double>> inverse_roots(std::span<const double> coeffs) {
  const auto k = static_cast<Eigen::Index>(coeffs.size());
  if (k == 0) return {};
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index j = 0; j < k; ++j) c(0, j) = coeffs[static_cast<std::size_t>(j)];
  for (Eigen::Index i = 1; i < k; ++i) c(i, i - 1) = 1.0;
  const Eigen::VectorXcd ev = c.eigenvalues();
  return {ev.data(), ev.data() + ev.size()};
}

/// True when every root of 1 - pi_1 z - ... lies outside the unit circle by the
/// stability margin (inverse roots strictly inside 1 - margin). Ties are rejected.
inline bool remainder_is_stable(std::span<const double> pi) {
  for (const auto& lambda : inverse_roots(pi))
    if (std::abs(lambda) >= 1.0 - kStabilityMargin) return false;
  return true;
}

/// Splits phi(z) = 1 - phi_1 z - ... - phi_p z^p as (1 - z) varpi(z) and returns
/// the coefficients pi_j = -(phi_{j+1} + ... + phi_p) of varpi.
inline std::vector<double> decompose_unit_root(std::span<const double> phi) {
  require(!phi.empty(), ErrorCode::InvalidParameter, "phi must have at least one coefficient");
  const double at_one = 1.0 - std::accumulate(phi.begin(), phi.end(), 0.0);
  require(std::abs(at_one) <= kUnitRootTolerance, ErrorCode::NoUnitRoot,
          "phi(1) = " + std::to_string(at_one) + " is not zero");
  const std::size_t p = phi.size();
  std::vector<double> pi(p - 1, 0.0);
  for (std::size_t j = 1; j < p; ++j)
    for (std::size_t i = j + 1; i <= p; ++i) pi[j - 1] -= phi[i - 1];
  require(remainder_is_stable(pi), ErrorCode::UnstableRemainder,
          "varpi(z) has a root on or inside the unit circle");
  return pi;
}

/// Coefficients of (1 - z)(1 - pi_1 z - ...), returned as phi_1..phi_p.
inline std::vector<double> compose_unit_root(std::span<const double> pi) {
  const std::size_t p = pi.size() + 1;
  std::vector<double> phi(p, 0.0);
  // varpi has coefficients w_0 = 1, w_j = -pi_j; phi(z) = varpi(z) - z varpi(z).
  auto w = [&](std::size_t j) { return j == 0 ? 1.0 : (j <= pi.size() ? -pi[j - 1] : 0.0); };
  for (std::size_t j = 1; j <= p; ++j) phi[j - 1] = -(w(j) - w(j - 1));
  return phi;
}

// ---------------------------------------------------------------------------
// Transition functions

inline double logistic(double u, double b, double a) { return 1.0 / (1.0 + std::exp(-b * (u - a))); }

/// Denominator family for the ESTAR slopes. The six named families all grow
/// like |u|^rho; their effective rho is rho for (i)-(iii) and max(rho1, rho2)
/// for (iv)-(vi).
class HSpec {
 public:
  enum class Family { AbsPower, ShiftedPower, SmoothPower, TwoAbsPower, TwoShiftedPower, TwoSmoothPower, Custom };

  /// (i) 1 + |u - a|^rho
  static HSpec abs_power(double rho, double a = 0.0) { return single(Family::AbsPower, rho, a); }
  /// (ii) (1 + |u - a|)^rho
  static HSpec shifted_power(double rho, double a = 0.0) { return single(Family::ShiftedPower, rho, a); }
  /// (iii) (1 + (u - a)^2)^(rho/2)
  static HSpec smooth_power(double rho, double a = 0.0) { return single(Family::SmoothPower, rho, a); }
  /// (iv) 1 + |u - a1|^rho1 + |u - a2|^rho2
  static HSpec two_abs_power(double rho1, double rho2, double a1, double a2) {
    return pair(Family::TwoAbsPower, rho1, rho2, a1, a2);
  }
  /// (v) 1 + (1 + |u - a1|)^rho1 + (1 + |u - a2|)^rho2
  static HSpec two_shifted_power(double rho1, double rho2, double a1, double a2) {
    return pair(Family::TwoShiftedPower, rho1, rho2, a1, a2);
  }
  /// (vi) 1 + (1 + (u - a1)^2)^(rho1/2) + (1 + (u - a2)^2)^(rho2/2)
  static HSpec two_smooth_power(double rho1, double rho2, double a1, double a2) {
    return pair(Family::TwoSmoothPower, rho1, rho2, a1, a2);
  }
  /// User-supplied h with a declared growth order; admissibility is checked
  /// numerically by check_condition_h, never assumed.
  static HSpec custom(std::function<double(double)> h, double declared_rho) {
    require(static_cast<bool>(h), ErrorCode::InvalidParameter, "custom h must be callable");
    require(declared_rho > 0.0 && declared_rho <= 2.0, ErrorCode::InvalidParameter,
            "declared rho must lie in (0,2]");
    HSpec s;
    s.family_ = Family::Custom;
    s.rho1_ = declared_rho;
    s.fn_ = std::make_shared<std::function<double(double)>>(std::move(h));
    return s;
  }

  double operator()(double u) const {
    switch (family_) {
      case Family::AbsPower: return 1.0 + std::pow(std::abs(u - a1_), rho1_);
      case Family::ShiftedPower: return std::pow(1.0 + std::abs(u - a1_), rho1_);
      case Family::SmoothPower: return std::pow(1.0 + (u - a1_) * (u - a1_), 0.5 * rho1_);
      case Family::TwoAbsPower:
        return 1.0 + std::pow(std::abs(u - a1_), rho1_) + std::pow(std::abs(u - a2_), rho2_);
      case Family::TwoShiftedPower:
        return 1.0 + std::pow(1.0 + std::abs(u - a1_), rho1_) + std::pow(1.0 + std::abs(u - a2_), rho2_);
      case Family::TwoSmoothPower:
        return 1.0 + std::pow(1.0 + (u - a1_) * (u - a1_), 0.5 * rho1_) +
               std::pow(1.0 + (u - a2_) * (u - a2_), 0.5 * rho2_);
      case Family::Custom: return (*fn_)(u);
    }
    return 0.0;
  }

  Family family() const { return family_; }
  bool is_pair() const {
    return family_ == Family::TwoAbsPower || family_ == Family::TwoShiftedPower || family_ == Family::TwoSmoothPower;
  }
  double rho() const { return is_pair() ? std::max(rho1_, rho2_) : rho1_; }
  double rho1() const { return rho1_; }
  double rho2() const { return rho2_; }
  double a1() const { return a1_; }
  double a2() const { return a2_; }

 private:
  static void check_rho(double r) {
    require(r > 0.0 && r <= 2.0, ErrorCode::InvalidParameter, "h exponent must lie in (0,2]");
  }
  static HSpec single(Family f, double rho, double a) {
    check_rho(rho);
    HSpec s;
    s.family_ = f;
    s.rho1_ = rho;
    s.a1_ = a;
    return s;
  }
  static HSpec pair(Family f, double rho1, double rho2, double a1, double a2) {
    check_rho(rho1);
    check_rho(rho2);
    HSpec s;
    s.family_ = f;
    s.rho1_ = rho1;
    s.rho2_ = rho2;
    s.a1_ = a1;
    s.a2_ = a2;
    return s;
  }

  Family family_ = Family::AbsPower;
  double rho1_ = 1.0;
  double rho2_ = 1.0;
  double a1_ = 0.0;
  double a2_ = 0.0;
  std::shared_ptr<const std::function<double(double)>> fn_;
};

enum class SlopeKind { S1, S2 };

/// Logistic smooth-transition intercept, taking values in (nu1, nu2).
struct LstarIntercept {
  double nu1 = -0.08;
  double nu2 = 0.08;
  double b = 2.0;
  double a1 = 0.0;
  double a2 = 0.0;

  void validate() const {
    require(b > 0.0, ErrorCode::InvalidParameter, "LSTAR slope b must be positive");
    require(a1 <= a2, ErrorCode::InvalidParameter, "LSTAR locations need a1 <= a2");
    require(nu1 < 0.0 && nu2 > 0.0, ErrorCode::InvalidParameter, "LSTAR intercepts need nu1 < 0 < nu2");
  }
};

/// u_t - nu = S(u_{t-1}) (u_{t-1} - nu) + eps_t with an ESTAR-type slope.
struct EstarSlope {
  SlopeKind kind = SlopeKind::S1;
  double r0 = 0.5;
  double nu = 0.0;
  HSpec h = HSpec::abs_power(1.0);

  void validate() const { require(r0 > 0.0, ErrorCode::InvalidParameter, "ESTAR r0 must be positive"); }
};

/// u_t = S(u_{t-1}) u_{t-1} + exp(-gamma |y|^2) theta'y + eps_t, y = y_{t-1..t-p}.
struct GeneralEstar {
  SlopeKind kind = SlopeKind::S1;
  double r0 = 0.5;
  HSpec h = HSpec::abs_power(1.0);
  double gamma = 1.0;
  std::vector<double> theta;

  void validate(std::size_t p) const {
    require(r0 > 0.0, ErrorCode::InvalidParameter, "ESTAR r0 must be positive");
    require(gamma > 0.0, ErrorCode::InvalidParameter, "gamma must be positive");
    require(theta.size() == p, ErrorCode::InvalidParameter, "theta must have length p");
  }
};

/// No nonlinear part: a pure unit-root autoregression.
struct ZeroTerm {};

/// Arbitrary g~ : R^p -> R. The tail map g and its rho are declared by the
/// user (or an envelope certificate is attached); neither is inferred.
struct CustomTerm {
  std::function<double(std::span<const double>)> tilde_g;
  std::function<double(double)> g;
  std::optional<double> rho;
  std::optional<EnvelopeCertificate> envelope;
  std::string label = "custom";
};

using NonlinearTerm = std::variant<ZeroTerm, LstarIntercept, EstarSlope, GeneralEstar, CustomTerm>;

inline double eval_intercept(double u, const LstarIntercept& params) {
  return params.nu1 * logistic(u, params.b, params.a1) + params.nu2 * (1.0 - logistic(u, params.b, params.a2));
}

inline double eval_slope(double u, SlopeKind kind, double r0, const HSpec& h) {
  const double ratio = r0 / h(u);
  return kind == SlopeKind::S1 ? 1.0 - ratio : std::exp(-ratio);
}

// ---------------------------------------------------------------------------
// Errors

struct Gaussian {
  double variance = 1.0;
};
struct ScaledStudentT {
  double df = 5.0;
  double variance = 1.0;
};
struct CustomNoise {
  std::function<double(CounterRng&)> sampler;
  std::optional<double> variance;
  bool mean_zero = true;
  std::string label = "custom";
};

/// E exp(beta0 |eps|^kappa0) < infinity.
struct SubexponentialMoments {
  double beta0 = 1.0;
  double kappa0 = 1.0;
};
/// E |eps|^s0 < infinity only.
struct PolynomialMoments {
  double s0 = 2.0;
};
using MomentClass = std::variant<SubexponentialMoments, PolynomialMoments>;

class NoiseSpec {
 public:
  using Kind = std::variant<Gaussian, ScaledStudentT, CustomNoise>;

  static NoiseSpec gaussian(double variance, std::optional<MomentClass> moments = std::nullopt) {
    require(variance > 0.0, ErrorCode::InvalidParameter, "Gaussian variance must be positive");
    return NoiseSpec(Gaussian{variance}, moments.value_or(SubexponentialMoments{1.0, 1.0}));
  }

  /// Student t(df) rescaled to the requested variance. Default moment class is
  /// MomentOnly(4) when df > 4 and MomentOnly(2) otherwise.
  static NoiseSpec student_t(double df, double variance, std::optional<double> s0 = std::nullopt) {
    require(df > 2.0, ErrorCode::RescaleUndefined, "t variance needs df > 2, got df = " + std::to_string(df));
    require(variance > 0.0, ErrorCode::InvalidParameter, "t variance must be positive");
    const double order = s0.value_or(df > 4.0 ? 4.0 : 2.0);
    require(order > 0.0 && order < df, ErrorCode::InvalidParameter, "t moment order s0 must lie in (0, df)");
    return NoiseSpec(ScaledStudentT{df, variance}, PolynomialMoments{order});
  }

  static NoiseSpec custom(CustomNoise noise, MomentClass moments) {
    require(static_cast<bool>(noise.sampler), ErrorCode::InvalidParameter, "custom noise needs a sampler");
    return NoiseSpec(std::move(noise), moments);
  }

  const Kind& kind() const { return kind_; }
  const MomentClass& moments() const { return moments_; }

  bool mean_zero() const {
    if (const auto* c = std::get_if<CustomNoise>(&kind_)) return c->mean_zero;
    return true;
  }

  std::optional<double> variance() const {
    return std::visit(
        [](const auto& k) -> std::optional<double> {
          using T = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<T, CustomNoise>) return k.variance;
          else return k.variance;
        },
        kind_);
  }

 private:
  NoiseSpec(Kind kind, MomentClass moments) : kind_(std::move(kind)), moments_(moments) {
    if (const auto* sub = std::get_if<SubexponentialMoments>(&moments_)) {
      require(sub->beta0 > 0.0, ErrorCode::InvalidParameter, "beta0 must be positive");
      require(sub->kappa0 > 0.0 && sub->kappa0 <= 1.0, ErrorCode::InvalidParameter, "kappa0 must lie in (0,1]");
      require(!std::holds_alternative<ScaledStudentT>(kind_), ErrorCode::InvalidParameter,
              "Student t errors have no exponential moments");
      require(mean_zero(), ErrorCode::InvalidParameter, "exponential-moment errors must be mean zero");
    } else {
      const auto& poly = std::get<PolynomialMoments>(moments_);
      require(poly.s0 > 0.0, ErrorCode::InvalidParameter, "s0 must be positive");
    }
  }

  Kind kind_;
  MomentClass moments_;
};

/// One error draw. Student t is built as N(0,1) / sqrt(chi2(df)/df), then
/// scaled by sqrt(variance (df-2)/df).
inline double sample_error(const NoiseSpec& noise, CounterRng& rng) {
  return std::visit(
      [&rng](const auto& k) -> double {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, Gaussian>) {
          std::normal_distribution<double> normal(0.0, std::sqrt(k.variance));
          return normal(rng);
        } else if constexpr (std::is_same_v<T, ScaledStudentT>) {
          require(k.df > 2.0, ErrorCode::RescaleUndefined, "t variance needs df > 2");
          std::normal_distribution<double> normal;
          std::chi_squared_distribution<double> chi2(k.df);
          const double z = normal(rng);
          const double t = z / std::sqrt(chi2(rng) / k.df);
          return t * std::sqrt(k.variance * (k.df - 2.0) / k.df);
        } else {
          return k.sampler(rng);
        }
      },
      noise.kind());
}

/// Stateful error stream: owns the rng and keeps the distribution objects
/// alive, so paired normal draws are not discarded. The sequence is a pure
/// function of (noise, seed, stream).
class NoiseSampler {
 public:
  NoiseSampler(const NoiseSpec& noise, CounterRng rng) : noise_(&noise), rng_(rng) {
    if (const auto* t = std::get_if<ScaledStudentT>(&noise.kind())) {
      require(t->df > 2.0, ErrorCode::RescaleUndefined, "t variance needs df > 2");
      chi2_ = std::chi_squared_distribution<double>(t->df);
      t_scale_ = std::sqrt(t->variance * (t->df - 2.0) / t->df);
      df_ = t->df;
    } else if (const auto* g = std::get_if<Gaussian>(&noise.kind())) {
      sd_ = std::sqrt(g->variance);
    }
  }

  double operator()() {
    switch (noise_->kind().index()) {
      case 0: return sd_ * normal_(rng_);
      case 1: {
        const double z = normal_(rng_);
        return z / std::sqrt(chi2_(rng_) / df_) * t_scale_;
      }
      default: return std::get<CustomNoise>(noise_->kind()).sampler(rng_);
    }
  }

  CounterRng& rng() { return rng_; }

 private:
  const NoiseSpec* noise_;
  CounterRng rng_;
  std::normal_distribution<double> normal_;
  std::chi_squared_distribution<double> chi2_;
  double sd_ = 1.0;
  double df_ = 1.0;
  double t_scale_ = 1.0;
};

// ---------------------------------------------------------------------------
// Model

class ModelSpec {
 public:
  ModelSpec(std::vector<double> pi, NonlinearTerm nonlinear, NoiseSpec noise)
      : p_(pi.size() + 1), pi_(std::move(pi)), nonlinear_(std::move(nonlinear)), noise_(std::move(noise)) {
    require(remainder_is_stable(pi_), ErrorCode::UnstableRemainder,
            "varpi(z) has a root on or inside the unit circle");
    std::visit(
        [this](const auto& term) {
          using T = std::decay_t<decltype(term)>;
          if constexpr (std::is_same_v<T, LstarIntercept>) term.validate();
          else if constexpr (std::is_same_v<T, EstarSlope>) term.validate();
          else if constexpr (std::is_same_v<T, GeneralEstar>) term.validate(p_);
          else if constexpr (std::is_same_v<T, CustomTerm>)
            require(static_cast<bool>(term.tilde_g), ErrorCode::InvalidParameter, "custom term needs g~");
        },
        nonlinear_);
  }

  /// Builds the model from the full AR polynomial phi_1..phi_p (one unit root).
  static ModelSpec from_phi(std::span<const double> phi, NonlinearTerm nonlinear, NoiseSpec noise) {
    return ModelSpec(decompose_unit_root(phi), std::move(nonlinear), std::move(noise));
  }

  std::size_t p() const { return p_; }
  const std::vector<double>& pi() const { return pi_; }
  const NonlinearTerm& nonlinear() const { return nonlinear_; }
  const NoiseSpec& noise() const { return noise_; }

  /// u = x_1 - pi_1 x_2 - ... - pi_{p-1} x_p.
  double filtered(std::span<const double> x) const {
    double u = x[0];
    for (std::size_t j = 0; j < pi_.size(); ++j) u -= pi_[j] * x[j + 1];
    return u;
  }

 private:
  std::size_t p_;
  std::vector<double> pi_;
  NonlinearTerm nonlinear_;
  NoiseSpec noise_;
};

/// Result of one transition: the new observation, the new filtered value, and
/// the time-varying coefficient (I(u_{t-1}) or S(u_{t-1}); NaN when absent).
struct StepDetail {
  double y = 0.0;
  double u = 0.0;
  double coefficient = std::nan("");
};

/// g~(x): the nonlinear part in y_t = Phi-part + u_{t-1} + g~(x) + eps.
inline double nonlinear_part(const ModelSpec& model, std::span<const double> x) {
  require(x.size() == model.p(), ErrorCode::DimensionMismatch, "state length must equal p");
  const double u = model.filtered(x);
  return std::visit(
      [&](const auto& term) -> double {
        using T = std::decay_t<decltype(term)>;
        if constexpr (std::is_same_v<T, ZeroTerm>) {
          return 0.0;
        } else if constexpr (std::is_same_v<T, LstarIntercept>) {
          return eval_intercept(u, term);
        } else if constexpr (std::is_same_v<T, EstarSlope>) {
          const double s = eval_slope(u, term.kind, term.r0, term.h);
          return (1.0 - s) * term.nu + (s - 1.0) * u;
        } else if constexpr (std::is_same_v<T, GeneralEstar>) {
          const double s = eval_slope(u, term.kind, term.r0, term.h);
          double sq = 0.0, lin = 0.0;
          for (std::size_t i = 0; i < x.size(); ++i) {
            sq += x[i] * x[i];
            lin += term.theta[i] * x[i];
          }
          return (s - 1.0) * u + std::exp(-term.gamma * sq) * lin;
        } else {
          return term.tilde_g(x);
        }
      },
      model.nonlinear());
}

/// One transition from history = (y_{t-1}, ..., y_{t-p}) with error eps.
inline StepDetail step_detail(const ModelSpec& model, std::span<const double> history, double eps) {
  require(history.size() == model.p(), ErrorCode::HistoryLengthMismatch,
          "history has " + std::to_string(history.size()) + " values, model needs " + std::to_string(model.p()));
  const double u_prev = model.filtered(history);
  StepDetail out;
  std::visit(
      [&](const auto& term) {
        using T = std::decay_t<decltype(term)>;
        if constexpr (std::is_same_v<T, ZeroTerm>) {
          out.u = u_prev + eps;
        } else if constexpr (std::is_same_v<T, LstarIntercept>) {
          out.coefficient = eval_intercept(u_prev, term);
          out.u = u_prev + out.coefficient + eps;
        } else if constexpr (std::is_same_v<T, EstarSlope>) {
          out.coefficient = eval_slope(u_prev, term.kind, term.r0, term.h);
          out.u = term.nu + out.coefficient * (u_prev - term.nu) + eps;
        } else if constexpr (std::is_same_v<T, GeneralEstar>) {
          out.coefficient = eval_slope(u_prev, term.kind, term.r0, term.h);
          double sq = 0.0, lin = 0.0;
          for (std::size_t i = 0; i < history.size(); ++i) {
            sq += history[i] * history[i];
            lin += term.theta[i] * history[i];
          }
          out.u = out.coefficient * u_prev + std::exp(-term.gamma * sq) * lin + eps;
        } else {
          out.u = u_prev + term.tilde_g(history) + eps;
        }
      },
      model.nonlinear());
  // y_t = u_t + pi_1 y_{t-1} + ... + pi_{p-1} y_{t-p+1}
  out.y = out.u;
  for (std::size_t j = 0; j < model.pi().size(); ++j) out.y += model.pi()[j] * history[j];
  return out;
}

inline double step(const ModelSpec& model, std::span<const double> history, double eps) {
  return step_detail(model, history, eps).y;
}

/// The scalar tail map g with u + g~(x) = g(u) + remainder; exact (zero
/// remainder) for the intercept and slope families.
inline std::function<double(double)> envelope_map(const ModelSpec& model) {
  return std::visit(
      [](const auto& term) -> std::function<double(double)> {
        using T = std::decay_t<decltype(term)>;
        if constexpr (std::is_same_v<T, ZeroTerm>) {
          return [](double u) { return u; };
        } else if constexpr (std::is_same_v<T, LstarIntercept>) {
          return [term](double u) { return u + eval_intercept(u, term); };
        } else if constexpr (std::is_same_v<T, EstarSlope>) {
          return [term](double u) {
            const double s = eval_slope(u, term.kind, term.r0, term.h);
            return (1.0 - s) * term.nu + s * u;
          };
        } else if constexpr (std::is_same_v<T, GeneralEstar>) {
          return [term](double u) { return eval_slope(u, term.kind, term.r0, term.h) * u; };
        } else {
          return term.g;
        }
      },
      model.nonlinear());
}

/// The tail exponent rho implied by the nonlinear family: 1 for the LSTAR
/// intercept, the effective exponent of h for the slope families, and the
/// declared (or certified) value for custom terms.
inline std::optional<double> declared_rho(const ModelSpec& model) {
  return std::visit(
      [](const auto& term) -> std::optional<double> {
        using T = std::decay_t<decltype(term)>;
        if constexpr (std::is_same_v<T, LstarIntercept>) return 1.0;
        else if constexpr (std::is_same_v<T, EstarSlope> || std::is_same_v<T, GeneralEstar>) return term.h.rho();
        else if constexpr (std::is_same_v<T, CustomTerm>) {
          if (term.rho) return term.rho;
          if (term.envelope) return term.envelope->rho;
          return std::nullopt;
        } else return std::nullopt;
      },
      model.nonlinear());
}

}  // namespace nlar
