#pragma once

#include <cmath>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "arcover/errors.hpp"

namespace arcover {

/// Throws unless 0 <= psi < 1.
inline void check_psi(double psi, const char* where) {
  if (!(psi >= 0.0 && psi < 1.0)) {
    throw DomainError(std::string(where) + ": psi must lie in [0,1), got " + std::to_string(psi));
  }
}

/// Stationary AR(1) correlation matrix G(psi): entry (i,j) = psi^|i-j|.
inline Eigen::MatrixXd ar1_covariance(double psi, int n) {
  check_psi(psi, "ar1_covariance");
  if (n < 1) throw DomainError("ar1_covariance: n must be >= 1");
  Eigen::VectorXd powers(n);
  powers(0) = 1.0;
  for (int k = 1; k < n; ++k) powers(k) = powers(k - 1) * psi;
  Eigen::MatrixXd g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = powers(std::abs(i - j));
  return g;
}

/// Exact inverse of G(psi): tridiagonal, diagonal (1, 1+psi^2, ..., 1+psi^2, 1)
/// and off-diagonal -psi, all scaled by 1/(1-psi^2).
inline Eigen::MatrixXd ar1_precision(double psi, int n) {
  check_psi(psi, "ar1_precision");
  if (n < 1) throw DomainError("ar1_precision: n must be >= 1");
  if (n == 1) return Eigen::MatrixXd::Identity(1, 1);
  const double scale = 1.0 / (1.0 - psi * psi);
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    q(i, i) = (i == 0 || i == n - 1) ? scale : (1.0 + psi * psi) * scale;
    if (i + 1 < n) q(i, i + 1) = q(i + 1, i) = -psi * scale;
  }
  return q;
}

/// log|G(psi)| = (n-1) log(1-psi^2).
inline double ar1_logdet(double psi, int n) {
  check_psi(psi, "ar1_logdet");
  if (n < 1) throw DomainError("ar1_logdet: n must be >= 1");
  return (n - 1) * std::log1p(-psi * psi);
}

/// Prais-Winsten whitening W with W'W = G(psi)^{-1}:
/// (Wv)_1 = v_1, (Wv)_t = (v_t - psi v_{t-1}) / sqrt(1-psi^2).
/// Works column-wise on matrices. `out` may not alias `in`.
template <typename In, typename Out>
void whiten(double psi, const Eigen::MatrixBase<In>& in, Eigen::MatrixBase<Out>& out) {
  const Eigen::Index n = in.rows();
  const double inv_s = 1.0 / std::sqrt(1.0 - psi * psi);
  out.derived().resize(n, in.cols());
  for (Eigen::Index c = 0; c < in.cols(); ++c) {
    out(0, c) = in(0, c);
    for (Eigen::Index t = 1; t < n; ++t) out(t, c) = (in(t, c) - psi * in(t - 1, c)) * inv_s;
  }
}

inline Eigen::VectorXd whiten(double psi, const Eigen::VectorXd& v) {
  Eigen::VectorXd out(v.size());
  whiten(psi, v, out);
  return out;
}

inline Eigen::MatrixXd whiten(double psi, const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  whiten(psi, m, out);
  return out;
}

/// W' u for the whitening operator above.
inline Eigen::VectorXd whiten_transpose(double psi, const Eigen::VectorXd& u) {
  const Eigen::Index n = u.size();
  const double inv_s = 1.0 / std::sqrt(1.0 - psi * psi);
  Eigen::VectorXd out(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    double acc = (t == 0) ? u(0) : u(t) * inv_s;
    if (t + 1 < n) acc -= psi * inv_s * u(t + 1);
    out(t) = acc;
  }
  return out;
}

/// One draw of e ~ N(0, G(psi)) by the stationary recursion
/// e_1 ~ N(0,1), e_t = psi e_{t-1} + sqrt(1-psi^2) u_t.
template <typename Urng>
Eigen::VectorXd simulate_edagger(double psi, int n, Urng& rng) {
  check_psi(psi, "simulate_edagger");
  if (n < 1) throw DomainError("simulate_edagger: n must be >= 1");
  std::normal_distribution<double> normal(0.0, 1.0);
  const double s = std::sqrt(1.0 - psi * psi);
  Eigen::VectorXd e(n);
  e(0) = normal(rng);
  for (int t = 1; t < n; ++t) e(t) = psi * e(t - 1) + s * normal(rng);
  return e;
}

}  // namespace arcover
