#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "nlar/error.hpp"

namespace nlar {

/// Numerical certificate that a scalar map g obeys the tail envelope
///   |g(u)| <= (1 - r |u|^-rho) |u|   for |u| >= M0,
///   |g(u)| <= K0                     for |u| <= M0,
/// on a dense grid. `worst_margin` is the smallest slack of the envelope
/// inequality over the tail grid (non-negative when `pass`), attained at `worst_u`.
struct EnvelopeCertificate {
  double r = 0.0;
  double M0 = 0.0;
  double K0 = 0.0;
  double rho = 0.0;
  bool pass = false;
  double worst_margin = 0.0;
  double worst_u = 0.0;
};

struct EnvelopeGrid {
  std::vector<double> m0_candidates = {0.5, 1, 2, 5, 10, 20, 50};
  double r_min = 1e-6;
  double r_max = 10.0;
  std::size_t points = 100000;
  double u_min = 1e-3;
  double u_max = 1e6;
};

namespace detail {

inline std::vector<double> envelope_points(const EnvelopeGrid& grid) {
  const std::size_t half = std::max<std::size_t>(grid.points / 2, 2);
  std::vector<double> u;
  u.reserve(2 * half + grid.m0_candidates.size() * 2 + 1);
  const double lo = std::log(grid.u_min);
  const double hi = std::log(grid.u_max);
  for (std::size_t i = 0; i < half; ++i) {
    const double m = std::exp(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(half - 1));
    u.push_back(m);
    u.push_back(-m);
  }
  for (double m : grid.m0_candidates) {
    u.push_back(m);
    u.push_back(-m);
  }
  u.push_back(0.0);
  std::sort(u.begin(), u.end());
  return u;
}

}  // namespace detail

/// Searches the M0 candidates for the envelope constants. For each M0 the
/// largest admissible r on the grid is min (|u| - |g(u)|) |u|^(rho-1) over
/// |u| >= M0, clipped to [r_min, r_max] and to r < M0^rho. Among candidates
/// that admit some r >= r_min, the smallest M0 whose r reaches half of the best
/// r over all candidates is reported.
inline EnvelopeCertificate check_g_envelope(const std::function<double(double)>& g, double rho,
                                            const EnvelopeGrid& grid = {}) {
  require(rho > 0.0 && rho <= 2.0, ErrorCode::InvalidParameter, "envelope rho must lie in (0,2]");
  require(!grid.m0_candidates.empty(), ErrorCode::InvalidParameter, "no M0 candidates");
  const std::vector<double> u = detail::envelope_points(grid);
  std::vector<double> gu(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) gu[i] = g(u[i]);

  struct Candidate {
    double M0, r, K0, worst_u;
  };
  std::vector<Candidate> cands;
  for (double m0 : grid.m0_candidates) {
    double r_best = std::numeric_limits<double>::infinity();
    double worst_u = m0;
    double k0 = 0.0;
    bool finite = true;
    for (std::size_t i = 0; i < u.size(); ++i) {
      const double a = std::abs(u[i]);
      if (!std::isfinite(gu[i])) {
        finite = false;
        worst_u = u[i];
        break;
      }
      if (a <= m0) k0 = std::max(k0, std::abs(gu[i]));
      if (a >= m0) {
        const double admissible = (a - std::abs(gu[i])) * std::pow(a, rho - 1.0);
        if (admissible < r_best) {
          r_best = admissible;
          worst_u = u[i];
        }
      }
    }
    if (!finite) r_best = -std::numeric_limits<double>::infinity();
    r_best = std::min({r_best, grid.r_max, std::pow(m0, rho) * (1.0 - 1e-9)});
    cands.push_back({m0, r_best, k0, worst_u});
  }

  double best_r = -std::numeric_limits<double>::infinity();
  for (const auto& c : cands) best_r = std::max(best_r, c.r);

  EnvelopeCertificate cert;
  cert.rho = rho;
  if (!(best_r >= grid.r_min)) {
    const Candidate& last = cands.back();
    cert.pass = false;
    cert.M0 = last.M0;
    cert.K0 = last.K0;
    cert.r = std::max(last.r, 0.0);
    cert.worst_u = last.worst_u;
    const double a = std::abs(last.worst_u);
    const double bound = (1.0 - grid.r_min * std::pow(a, -rho)) * a;
    cert.worst_margin = bound - std::abs(g(last.worst_u));
    return cert;
  }
  for (const auto& c : cands) {
    if (c.r >= grid.r_min && c.r >= 0.5 * best_r) {
      cert.pass = true;
      cert.M0 = c.M0;
      cert.r = c.r;
      cert.K0 = c.K0;
      cert.worst_u = c.worst_u;
      break;
    }
  }
  double slack = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = std::abs(u[i]);
    if (a < cert.M0) continue;
    const double s = (1.0 - cert.r * std::pow(a, -rho)) * a - std::abs(gu[i]);
    if (s < slack) {
      slack = s;
      cert.worst_u = u[i];
    }
  }
  cert.worst_margin = slack;
  return cert;
}

}  // namespace nlar
