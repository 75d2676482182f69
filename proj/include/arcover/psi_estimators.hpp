#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "arcover/ar1.hpp"
#include "arcover/errors.hpp"
#include "arcover/gls.hpp"
#include "arcover/problem.hpp"

namespace arcover {

enum class PsiEstimatorKind { SampleAcf, ML, REML };

inline std::string_view to_string(PsiEstimatorKind kind) {
  switch (kind) {
    case PsiEstimatorKind::SampleAcf: return "sample-acf";
    case PsiEstimatorKind::ML: return "ml";
    case PsiEstimatorKind::REML: return "reml";
  }
  return "?";
}

inline PsiEstimatorKind parse_estimator_kind(std::string_view s) {
  if (s == "sample-acf" || s == "acf" || s == "sample") return PsiEstimatorKind::SampleAcf;
  if (s == "ml") return PsiEstimatorKind::ML;
  if (s == "reml") return PsiEstimatorKind::REML;
  throw DomainError("unknown estimator kind '" + std::string(s) + "'");
}

/// Upper end of the search interval is 1 - kPsiEpsilon.
inline constexpr double kPsiEpsilon = 1e-6;
inline constexpr int kCriterionGridPoints = 129;
inline constexpr double kRefineTolerance = 1e-6;

/// r = (I - X(X'X)^{-1}X') v.
inline Eigen::VectorXd ols_residuals(const Problem& problem, const Eigen::VectorXd& v) {
  check_length(problem, v, "data");
  const Eigen::VectorXd coef = problem.q().transpose() * v;
  return v - problem.q() * coef;
}

/// Sample lag-1 autocorrelation sum r_t r_{t-1} / sum r_t^2. May be negative.
inline double psi_hat_sample(const Eigen::VectorXd& r) {
  const double denom = r.squaredNorm();
  if (!(denom > 0.0)) throw DegenerateResidualsError("psi_hat_sample: residual vector is zero");
  const Eigen::Index n = r.size();
  double num = 0.0;
  for (Eigen::Index t = 1; t < n; ++t) num += r(t) * r(t - 1);
  return num / denom;
}

namespace detail {

inline void check_fit(double s, double scale2, const char* where) {
  // Residual norm below 1e-12 of the data norm counts as an exact fit.
  if (!(s > 1e-24 * scale2)) {
    throw DegenerateFitError(std::string(where) + ": data are fitted exactly, likelihood is unbounded");
  }
}

struct CriterionTerms {
  double s = 0.0;            // GLS residual quadratic form S(beta_hat(psi), psi)
  double logdet_g = 0.0;     // log|G(psi)|
  double logdet_xtgx = 0.0;  // log|X'G^{-1}(psi)X|
};

inline CriterionTerms criterion_terms(double psi, const Eigen::VectorXd& data, const Problem& problem) {
  check_psi(psi, "criterion");
  check_length(problem, data, "data");
  const Eigen::MatrixXd wx = whiten(psi, problem.x());
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(wx);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(wx.rows(), wx.cols());
  Eigen::VectorXd wy = whiten(psi, data);
  const Eigen::VectorXd proj = q.transpose() * wy;
  wy.noalias() -= q * proj;
  CriterionTerms terms;
  terms.s = wy.squaredNorm();
  terms.logdet_g = ar1_logdet(psi, problem.n());
  terms.logdet_xtgx = 2.0 * qr.matrixQR().diagonal().cwiseAbs().array().log().sum();
  return terms;
}

}  // namespace detail

/// -(n/2) log(S/n) - (1/2) log|G(psi)|.
inline double ml_criterion(double psi, const Eigen::VectorXd& data, const Problem& problem) {
  const auto t = detail::criterion_terms(psi, data, problem);
  detail::check_fit(t.s, data.squaredNorm(), "ml_criterion");
  const double n = problem.n();
  return -0.5 * n * std::log(t.s / n) - 0.5 * t.logdet_g;
}

/// -(m/2) log(S/m) - (1/2) log|G(psi)| - (1/2) log|X'G^{-1}(psi)X|.
inline double reml_criterion(double psi, const Eigen::VectorXd& data, const Problem& problem) {
  const auto t = detail::criterion_terms(psi, data, problem);
  detail::check_fit(t.s, data.squaredNorm(), "reml_criterion");
  const double m = problem.m();
  return -0.5 * m * std::log(t.s / m) - 0.5 * t.logdet_g - 0.5 * t.logdet_xtgx;
}

/// Criterion evaluated on the search grid, with the refined maximizer.
struct CriterionProfile {
  std::vector<double> grid;
  std::vector<double> values;
  double argmax = 0.0;
  double max_value = -std::numeric_limits<double>::infinity();
};

/// Estimator of psi for a fixed design.
///
/// ML/REML maximize the profiled criterion over [0, 1 - eps]: a uniform grid
/// first, then golden-section search on the cell pair bracketing the best grid
/// point. The design-only parts of the criterion (whitened-design QR factors,
/// log-determinants) are cached per grid point, so evaluating a new data vector
/// on the grid costs O(np) per point.
///
/// The search works on log(S(psi)/S(0)) rather than log S(psi): the two differ
/// by a psi-independent constant, and the ratio form makes the argmax exactly
/// invariant under scaling the data by a power of two.
class PsiEstimator {
 public:
  PsiEstimator(const Problem& problem, PsiEstimatorKind kind, int grid_points = kCriterionGridPoints,
               double epsilon = kPsiEpsilon)
      : problem_(&problem), kind_(kind), upper_(1.0 - epsilon) {
    if (grid_points < 3) throw DomainError("PsiEstimator: need at least 3 grid points");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw DomainError("PsiEstimator: epsilon must lie in (0,1)");
    if (kind_ == PsiEstimatorKind::SampleAcf) return;
    grid_.resize(grid_points);
    for (int i = 0; i < grid_points; ++i) grid_[i] = upper_ * i / (grid_points - 1);
    grid_q_.reserve(grid_points);
    grid_penalty_.reserve(grid_points);
    for (double psi : grid_) {
      auto [q, penalty] = design_terms(psi);
      grid_q_.push_back(std::move(q));
      grid_penalty_.push_back(penalty);
    }
  }

  PsiEstimatorKind kind() const noexcept { return kind_; }
  const Problem& problem() const noexcept { return *problem_; }
  double upper() const noexcept { return upper_; }
  const std::vector<double>& grid() const noexcept { return grid_; }

  /// Raw sample autocorrelation of OLS residuals (unclamped).
  double raw_sample_acf(const Eigen::VectorXd& data) const {
    return psi_hat_sample(ols_residuals(*problem_, data));
  }

  /// Estimate in [0, 1 - eps].
  double estimate(const Eigen::VectorXd& data) const {
    if (kind_ == PsiEstimatorKind::SampleAcf) return std::clamp(raw_sample_acf(data), 0.0, upper_);
    return search(data, nullptr);
  }

  /// Full criterion profile on the grid, plus refined argmax and its value.
  CriterionProfile profile(const Eigen::VectorXd& data) const {
    if (kind_ == PsiEstimatorKind::SampleAcf) throw DomainError("profile: sample ACF has no criterion");
    CriterionProfile out;
    out.argmax = search(data, &out.values);
    out.grid = grid_;
    const double shift = constant_shift(data);
    for (double& v : out.values) v += shift;
    out.max_value = relative_objective(out.argmax, data, ols_rss(data)) + shift;
    return out;
  }

 private:
  /// Exponent k in -(k/2) log S: n for ML, m for REML.
  double exponent() const noexcept {
    return kind_ == PsiEstimatorKind::ML ? problem_->n() : problem_->m();
  }

  /// Q factor of W(psi)X and the design-only penalty term of the criterion.
  std::pair<Eigen::MatrixXd, double> design_terms(double psi) const {
    const Eigen::MatrixXd wx = whiten(psi, problem_->x());
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(wx);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(wx.rows(), wx.cols());
    double penalty = -0.5 * ar1_logdet(psi, problem_->n());
    if (kind_ == PsiEstimatorKind::REML) {
      penalty -= qr.matrixQR().diagonal().cwiseAbs().array().log().sum();
    }
    return {std::move(q), penalty};
  }

  static double residual_ss(double psi, const Eigen::MatrixXd& q, const Eigen::VectorXd& data) {
    Eigen::VectorXd wy(data.size());
    whiten(psi, data, wy);
    const Eigen::VectorXd proj = q.transpose() * wy;
    wy.noalias() -= q * proj;
    return wy.squaredNorm();
  }

  double ols_rss(const Eigen::VectorXd& data) const {
    check_length(*problem_, data, "data");
    const double s0 = residual_ss(0.0, problem_->q(), data);
    detail::check_fit(s0, data.squaredNorm(), "estimate_psi");
    return s0;
  }

  /// Criterion minus its value-independent constant -(k/2) log(S(0)/k).
  double constant_shift(const Eigen::VectorXd& data) const {
    const double k = exponent();
    return -0.5 * k * std::log(ols_rss(data) / k);
  }

  double relative_objective(double psi, const Eigen::VectorXd& data, double s0) const {
    auto [q, penalty] = design_terms(psi);
    const double s = residual_ss(psi, q, data);
    detail::check_fit(s, data.squaredNorm(), "estimate_psi");
    return -0.5 * exponent() * std::log(s / s0) + penalty;
  }

  double search(const Eigen::VectorXd& data, std::vector<double>* values) const {
    const double s0 = ols_rss(data);
    const double k = exponent();
    const auto count = static_cast<int>(grid_.size());
    int best = 0;
    double best_value = -std::numeric_limits<double>::infinity();
    if (values) values->resize(count);
    for (int i = 0; i < count; ++i) {
      const double s = residual_ss(grid_[i], grid_q_[i], data);
      detail::check_fit(s, data.squaredNorm(), "estimate_psi");
      const double value = -0.5 * k * std::log(s / s0) + grid_penalty_[i];
      if (values) (*values)[i] = value;
      if (value > best_value) {
        best_value = value;
        best = i;
      }
    }

    // Golden-section search on [grid[best-1], grid[best+1]].
    double lo = grid_[std::max(best - 1, 0)];
    double hi = grid_[std::min(best + 1, count - 1)];
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - inv_phi * (hi - lo);
    double x2 = lo + inv_phi * (hi - lo);
    double f1 = relative_objective(x1, data, s0);
    double f2 = relative_objective(x2, data, s0);
    while (hi - lo > kRefineTolerance) {
      if (f1 >= f2) {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - inv_phi * (hi - lo);
        f1 = relative_objective(x1, data, s0);
      } else {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + inv_phi * (hi - lo);
        f2 = relative_objective(x2, data, s0);
      }
    }
    const double refined = f1 >= f2 ? x1 : x2;
    const double refined_value = std::max(f1, f2);
    if (refined_value < best_value) return grid_[best];
    return std::clamp(refined, 0.0, upper_);
  }

  const Problem* problem_;
  PsiEstimatorKind kind_;
  double upper_;
  std::vector<double> grid_;
  std::vector<Eigen::MatrixXd> grid_q_;
  std::vector<double> grid_penalty_;
};

/// One-shot estimate; builds the grid cache on every call, so loops should
/// hold a PsiEstimator instead.
inline double estimate_psi(PsiEstimatorKind kind, const Eigen::VectorXd& data, const Problem& problem) {
  return PsiEstimator(problem, kind).estimate(data);
}

}  // namespace arcover
