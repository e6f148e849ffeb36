#pragma once

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "nlar/error.hpp"
#include "nlar/model.hpp"

namespace nlar {

/// Quadratic norm ||z||_* = sqrt(z'Pz) under which Pi1 contracts by eta.
struct WeightedNorm {
  Eigen::MatrixXd P;
  double eta = 0.0;
};

/// Companion-form matrices of the filtered recursion, plus the weighted norm.
///   Phi: companion of (pi_1..pi_{p-1}, 0)
///   A:   maps y to (u, y_{t-1}, ..., y_{t-p+1})
///   Pi = A Phi A^{-1} = [[0, 0'], [iota, Pi1]]
struct CompanionForm {
  Eigen::MatrixXd Phi;
  Eigen::MatrixXd A;
  Eigen::MatrixXd Pi;
  Eigen::MatrixXd Pi1;
  Eigen::MatrixXd P;
  double eta = 0.0;
  /// c with c^{-1}|z| <= ||z||_* <= c|z|.
  double equivalence = 1.0;

  std::size_t p() const { return static_cast<std::size_t>(A.rows()); }
};

struct ZSplit {
  double z1 = 0.0;
  Eigen::VectorXd z2;
};

inline double spectral_radius(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  return m.eigenvalues().cwiseAbs().maxCoeff();
}

/// Solves P = M'PM + I. Direct Kronecker solve up to 25x25, fixed-point
/// iteration beyond.
inline Eigen::MatrixXd solve_discrete_lyapunov(const Eigen::MatrixXd& m) {
  const Eigen::Index n = m.rows();
  if (n == 0) return Eigen::MatrixXd(0, 0);
  if (n <= 25) {
    const Eigen::MatrixXd mt = m.transpose();
    Eigen::MatrixXd kron(n * n, n * n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) kron.block(i * n, j * n, n, n) = mt(i, j) * mt;
    const Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(n * n, n * n) - kron;
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
    const Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(eye.data(), n * n);
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(lhs);
    Eigen::VectorXd vec = lu.solve(rhs);
    // iterative refinement: near-unit roots make lhs ill-conditioned
    for (int pass = 0; pass < 3; ++pass) vec += lu.solve(rhs - lhs * vec);
    Eigen::MatrixXd p = Eigen::Map<Eigen::MatrixXd>(vec.data(), n, n);
    return 0.5 * (p + p.transpose());
  }
  Eigen::MatrixXd p = Eigen::MatrixXd::Identity(n, n);
  for (int iter = 0; iter < 1000000; ++iter) {
    Eigen::MatrixXd next = m.transpose() * p * m + Eigen::MatrixXd::Identity(n, n);
    const double change = (next - p).cwiseAbs().maxCoeff();
    p = std::move(next);
    if (change <= 1e-12 * std::max(1.0, p.cwiseAbs().maxCoeff())) break;
  }
  return 0.5 * (p + p.transpose());
}

/// P from the discrete Lyapunov equation P = Pi1'P Pi1 + I, so that
/// ||Pi1 z||_*^2 = ||z||_*^2 - |z|^2 <= (1 - 1/lambda_max(P)) ||z||_*^2.
inline WeightedNorm weighted_norm(const Eigen::MatrixXd& pi1) {
  require(pi1.rows() == pi1.cols(), ErrorCode::DimensionMismatch, "Pi1 must be square");
  WeightedNorm out;
  if (pi1.size() == 0) {
    out.P = Eigen::MatrixXd(0, 0);
    return out;
  }
  const double radius = spectral_radius(pi1);
  require(radius < 1.0 - kStabilityMargin, ErrorCode::NotContractive,
          "spectral radius " + std::to_string(radius) + " is not below one");
  out.P = solve_discrete_lyapunov(pi1);
  const double lmax = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(out.P).eigenvalues().maxCoeff();
  out.eta = std::sqrt(std::max(0.0, 1.0 - 1.0 / lmax));
  return out;
}

inline CompanionForm build_companion(std::span<const double> pi) {
  const auto p = static_cast<Eigen::Index>(pi.size() + 1);
  CompanionForm c;
  c.Phi = Eigen::MatrixXd::Zero(p, p);
  c.A = Eigen::MatrixXd::Identity(p, p);
  for (Eigen::Index j = 0; j + 1 < p; ++j) {
    c.Phi(0, j) = pi[static_cast<std::size_t>(j)];
    c.A(0, j + 1) = -pi[static_cast<std::size_t>(j)];
  }
  for (Eigen::Index i = 1; i < p; ++i) c.Phi(i, i - 1) = 1.0;

  c.Pi = Eigen::MatrixXd::Zero(p, p);
  if (p > 1) {
    c.Pi(1, 0) = 1.0;
    for (Eigen::Index j = 0; j + 1 < p; ++j) c.Pi(1, j + 1) = pi[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 2; i < p; ++i) c.Pi(i, i - 1) = 1.0;
  }
  c.Pi1 = c.Pi.bottomRightCorner(p - 1, p - 1);

  const WeightedNorm norm = weighted_norm(c.Pi1);
  c.P = norm.P;
  c.eta = norm.eta;
  if (c.P.size() > 0) {
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(c.P).eigenvalues();
    c.equivalence = std::max(std::sqrt(ev.maxCoeff()), 1.0 / std::sqrt(ev.minCoeff()));
  }
  return c;
}

inline CompanionForm build_companion(const ModelSpec& model) { return build_companion(model.pi()); }

inline ZSplit transform_z(const CompanionForm& companion, std::span<const double> x) {
  require(x.size() == companion.p(), ErrorCode::DimensionMismatch, "state length must equal p");
  const Eigen::VectorXd z = companion.A * Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  return {z(0), z.tail(z.size() - 1)};
}

inline double star_norm(const CompanionForm& companion, const Eigen::VectorXd& z2) {
  require(z2.size() == companion.P.rows(), ErrorCode::DimensionMismatch, "z2 length must equal p-1");
  if (z2.size() == 0) return 0.0;
  return std::sqrt(std::max(0.0, z2.dot(companion.P * z2)));
}

}  // namespace nlar
