#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <json.hpp>

#include "arcover/errors.hpp"
#include "arcover/problem.hpp"
#include "arcover/psi_estimators.hpp"
#include "arcover/student_t.hpp"

namespace arcover {

/// Durbin-Watson statistic sum (r_i - r_{i-1})^2 / sum r_i^2, in [0, 4].
inline double dw_statistic(const Eigen::VectorXd& r) {
  if (r.size() < 2) throw DomainError("dw_statistic: need at least 2 residuals");
  const double denom = r.squaredNorm();
  if (!(denom > 0.0)) throw DegenerateResidualsError("dw_statistic: residual vector is zero");
  double num = 0.0;
  for (Eigen::Index i = 1; i < r.size(); ++i) {
    const double d = r(i) - r(i - 1);
    num += d * d;
  }
  return num / denom;
}

/// The n x n first-difference matrix B with d = r'Br / r'r.
inline Eigen::MatrixXd dw_matrix(int n) {
  if (n < 2) throw DomainError("dw_matrix: n must be >= 2");
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    b(i, i) = (i == 0 || i == n - 1) ? 1.0 : 2.0;
    if (i + 1 < n) b(i, i + 1) = b(i + 1, i) = -1.0;
  }
  return b;
}

/// Eigenvalues (ascending) of Q'BQ, Q an orthonormal basis of the orthogonal
/// complement of col(X). Under psi = 0 the DW statistic is distributed as
/// z'(Q'BQ)z / z'z with z ~ N(0, I_m).
inline Eigen::VectorXd residual_spectrum(const Problem& problem) {
  const Eigen::MatrixXd& qp = problem.q_perp();
  // B q for each column in O(n).
  Eigen::MatrixXd bq(qp.rows(), qp.cols());
  const Eigen::Index n = qp.rows();
  for (Eigen::Index c = 0; c < qp.cols(); ++c) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double acc = 0.0;
      if (i > 0) acc += qp(i, c) - qp(i - 1, c);
      if (i + 1 < n) acc += qp(i, c) - qp(i + 1, c);
      bq(i, c) = acc;
    }
  }
  Eigen::MatrixXd k = qp.transpose() * bq;
  k = 0.5 * (k + k.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(k, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw NumericError("residual_spectrum: eigendecomposition failed");
  return eig.eigenvalues();
}

/// P(sum_j lambda_j z_j^2 > 0), z_j iid N(0,1), by Imhof's inversion formula
///   P = 1/2 + (1/pi) int_0^inf sin(theta(u)) / (u rho(u)) du,
///   theta(u) = (1/2) sum arctan(lambda_j u),  rho(u) = prod (1 + lambda_j^2 u^2)^{1/4}.
///
/// The range is truncated at U where the integrand's envelope guarantees a tail
/// below tol/100, and [0, U] is covered by geometrically growing panels, each
/// integrated by adaptive Gauss-Kronrod.
inline double imhof_prob_positive(std::span<const double> lambdas, double tol = 1e-8) {
  std::vector<double> w;
  w.reserve(lambdas.size());
  double max_abs = 0.0;
  for (double l : lambdas) {
    if (!std::isfinite(l)) throw DomainError("imhof_prob_positive: non-finite weight");
    if (l != 0.0) {
      w.push_back(l);
      max_abs = std::max(max_abs, std::abs(l));
    }
  }
  if (w.empty()) throw DomainError("imhof_prob_positive: all weights are zero");
  if (std::all_of(w.begin(), w.end(), [](double l) { return l > 0.0; })) return 1.0;
  if (std::all_of(w.begin(), w.end(), [](double l) { return l < 0.0; })) return 0.0;

  const double half_sum = 0.5 * std::accumulate(w.begin(), w.end(), 0.0);
  auto integrand = [&w, half_sum](double u) {
    if (u == 0.0) return half_sum;
    double theta = 0.0;
    double log_rho = 0.0;
    for (double l : w) {
      const double lu = l * u;
      theta += std::atan(lu);
      log_rho += std::log1p(lu * lu);
    }
    return std::sin(0.5 * theta) / (u * std::exp(0.25 * log_rho));
  };

  // |integrand| <= u^{-1-k/2} / prod |lambda_j|^{1/2}, so the tail beyond U is
  // at most (2/k) U^{-k/2} / prod |lambda_j|^{1/2}; pick U to make it tail_tol.
  const double k = static_cast<double>(w.size());
  double sum_log_abs = 0.0;
  for (double l : w) sum_log_abs += std::log(std::abs(l));
  const double tail_tol = 1e-2 * tol * std::numbers::pi;
  const double log_u = (2.0 / k) * (std::log(2.0 / k) - std::log(tail_tol) - 0.5 * sum_log_abs);
  const double upper = std::exp(log_u);

  using Quadrature = boost::math::quadrature::gauss_kronrod<double, 31>;
  double lo = 0.0;
  double hi = 0.5 / max_abs;
  double total = 0.0;
  int panels = 0;
  while (lo < upper) {
    hi = std::min(hi, upper);
    double err = 0.0;
    const double piece = Quadrature::integrate(integrand, lo, hi, 15, 1e-12, &err);
    if (!std::isfinite(piece)) throw NumericError("imhof_prob_positive: quadrature produced a non-finite value");
    if (err > tol) {
      throw NumericError("imhof_prob_positive: panel [" + std::to_string(lo) + ", " + std::to_string(hi) +
                         "] error estimate " + std::to_string(err) + " exceeds tolerance");
    }
    total += piece;
    lo = hi;
    hi *= 2.0;
    if (++panels > 2000) throw NumericError("imhof_prob_positive: too many panels");
  }
  const double p = 0.5 + total / std::numbers::pi;
  return std::clamp(p, 0.0, 1.0);
}

/// Null CDF P(d <= c | psi = 0) from the residual spectrum.
inline double dw_null_cdf(double c, std::span<const double> spectrum) {
  if (spectrum.empty()) throw DomainError("dw_null_cdf: empty spectrum");
  const auto [mn, mx] = std::minmax_element(spectrum.begin(), spectrum.end());
  if (c < *mn) return 0.0;
  if (c >= *mx) return 1.0;
  std::vector<double> shifted(spectrum.begin(), spectrum.end());
  for (double& v : shifted) v -= c;
  return 1.0 - imhof_prob_positive(shifted);
}

inline double dw_null_cdf(double c, const Eigen::VectorXd& spectrum) {
  return dw_null_cdf(c, std::span<const double>(spectrum.data(), static_cast<std::size_t>(spectrum.size())));
}

/// c with P(d <= c | psi = 0) = alpha_tilde, by bisection over the spectrum's range.
inline double dw_critical_value(double alpha_tilde, const Eigen::VectorXd& spectrum) {
  if (!(alpha_tilde > 0.0 && alpha_tilde < 1.0)) throw DomainError("dw_critical_value: alpha_tilde must lie in (0,1)");
  if (spectrum.size() == 0) throw DomainError("dw_critical_value: empty spectrum");
  double lo = spectrum.minCoeff();
  double hi = spectrum.maxCoeff();
  if (hi - lo <= 0.0) return lo;
  for (int iter = 0; iter < 200 && hi - lo > 1e-13; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (dw_null_cdf(mid, spectrum) < alpha_tilde) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

inline double dw_critical_value(double alpha_tilde, const Problem& problem) {
  return dw_critical_value(alpha_tilde, residual_spectrum(problem));
}

/// psi_hat / ((1/(n-2)) sum_{t>=2} (r_t - psi_hat r_{t-1})^2 / sum_{s<n} r_s^2)^{1/2},
/// psi_hat the raw sample autocorrelation.
inline double tstat_pretest(const Eigen::VectorXd& r) {
  const Eigen::Index n = r.size();
  if (n < 3) throw DomainError("tstat_pretest: need at least 3 residuals");
  const double psi = psi_hat_sample(r);
  double num = 0.0;
  double lagged = 0.0;
  for (Eigen::Index t = 1; t < n; ++t) {
    const double d = r(t) - psi * r(t - 1);
    num += d * d;
    lagged += r(t - 1) * r(t - 1);
  }
  if (!(lagged > 0.0) || !(num > 0.0)) throw DegenerateResidualsError("tstat_pretest: zero denominator");
  return psi / std::sqrt(num / static_cast<double>(n - 2) / lagged);
}

enum class PretestFamily { DurbinWatson, TStat };

inline std::string_view to_string(PretestFamily f) {
  return f == PretestFamily::DurbinWatson ? "durbin-watson" : "t-stat";
}

inline PretestFamily parse_pretest_family(std::string_view s) {
  if (s == "durbin-watson" || s == "dw") return PretestFamily::DurbinWatson;
  if (s == "t-stat" || s == "tstat") return PretestFamily::TStat;
  throw DomainError("unknown pretest family '" + std::string(s) + "'");
}

/// A configured pretest of psi = 0 against psi > 0.
///
/// DurbinWatson rejects when d <= critical_value. TStat rejects when the
/// t-statistic exceeds critical_value = z_{1 - alpha_tilde}.
struct PretestSpec {
  PretestFamily family = PretestFamily::DurbinWatson;
  double alpha_tilde = 0.05;
  double critical_value = 0.0;
  Eigen::VectorXd spectrum;  // empty for TStat
  int n = 0;
  int p = 0;

  /// Whether the null psi = 0 is rejected for OLS residuals r.
  bool rejects(const Eigen::VectorXd& r) const {
    if (family == PretestFamily::DurbinWatson) return dw_statistic(r) <= critical_value;
    return tstat_pretest(r) > critical_value;
  }
};

inline PretestSpec make_dw_pretest(const Problem& problem, double alpha_tilde) {
  PretestSpec spec;
  spec.family = PretestFamily::DurbinWatson;
  spec.alpha_tilde = alpha_tilde;
  spec.spectrum = residual_spectrum(problem);
  spec.critical_value = dw_critical_value(alpha_tilde, spec.spectrum);
  spec.n = problem.n();
  spec.p = problem.p();
  return spec;
}

inline PretestSpec make_tstat_pretest(const Problem& problem, double alpha_tilde) {
  if (!(alpha_tilde > 0.0 && alpha_tilde < 1.0)) throw DomainError("alpha_tilde must lie in (0,1)");
  PretestSpec spec;
  spec.family = PretestFamily::TStat;
  spec.alpha_tilde = alpha_tilde;
  spec.critical_value = normal_quantile(1.0 - alpha_tilde);
  spec.n = problem.n();
  spec.p = problem.p();
  return spec;
}

inline PretestSpec make_pretest(PretestFamily family, const Problem& problem, double alpha_tilde) {
  return family == PretestFamily::DurbinWatson ? make_dw_pretest(problem, alpha_tilde)
                                               : make_tstat_pretest(problem, alpha_tilde);
}

/// Cache format: {n, p, alpha_tilde, critical_value, spectrum[]} (+ family).
inline nlohmann::json pretest_to_json(const PretestSpec& spec) {
  nlohmann::json j;
  j["n"] = spec.n;
  j["p"] = spec.p;
  j["family"] = std::string(to_string(spec.family));
  j["alpha_tilde"] = spec.alpha_tilde;
  j["critical_value"] = spec.critical_value;
  j["spectrum"] = std::vector<double>(spec.spectrum.data(), spec.spectrum.data() + spec.spectrum.size());
  return j;
}

inline PretestSpec pretest_from_json(const nlohmann::json& j) {
  PretestSpec spec;
  try {
    spec.n = j.at("n").get<int>();
    spec.p = j.at("p").get<int>();
    spec.family = parse_pretest_family(j.value("family", std::string("durbin-watson")));
    spec.alpha_tilde = j.at("alpha_tilde").get<double>();
    spec.critical_value = j.at("critical_value").get<double>();
    const auto values = j.at("spectrum").get<std::vector<double>>();
    spec.spectrum = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed pretest cache: ") + e.what());
  }
  if (spec.family == PretestFamily::DurbinWatson && spec.spectrum.size() != spec.n - spec.p) {
    throw DimensionMismatchError("pretest cache spectrum length does not equal n - p");
  }
  return spec;
}

}  // namespace arcover
