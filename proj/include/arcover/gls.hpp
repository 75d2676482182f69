#pragma once

#include <cmath>
#include <cstdlib>

#include <Eigen/Dense>

#include "arcover/ar1.hpp"
#include "arcover/errors.hpp"
#include "arcover/problem.hpp"

namespace arcover {

/// Closed interval [center - half_width, center + half_width].
struct Interval {
  double center = 0.0;
  double half_width = 0.0;

  double lower() const noexcept { return center - half_width; }
  double upper() const noexcept { return center + half_width; }
  bool contains(double x) const noexcept { return std::abs(x - center) <= half_width; }
};

/// Per-psi GLS quantities for a fixed problem.
///
/// GLS at psi is OLS on the whitened system WX, Wy with W'W = G(psi)^{-1}.
/// With WX = QR (thin), the cache holds
///   b(psi)' = a'(X'G^{-1}X)^{-1} X'G^{-1}   (so b'X = a'),
///   v(psi)  = a'(X'G^{-1}X)^{-1} a,
/// and evaluates w(e, psi) = |We - QQ'We|^2 / m.
class GlsCache {
 public:
  GlsCache(const Problem& problem, double psi) : problem_(&problem), psi_(psi) {
    check_psi(psi, "gls_cache");
    const int p = problem.p();
    Eigen::MatrixXd wx = whiten(psi, problem.x());
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(wx);
    const Eigen::MatrixXd r = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
    if (solve_relative_error(r) > kMaxSolveRelativeError) {
      throw IllConditionedError("X'G^{-1}(psi)X is numerically singular at psi = " + std::to_string(psi));
    }
    q_ = qr.householderQ() * Eigen::MatrixXd::Identity(wx.rows(), p);

    Eigen::MatrixXd r_inv = r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
    xtgx_inv_ = r_inv * r_inv.transpose();
    // g = R^{-T} a; then b'e = g'Q'We and v = |g|^2.
    const Eigen::VectorXd g = r.transpose().triangularView<Eigen::Lower>().solve(problem.a());
    v_ = g.squaredNorm();
    b_ = whiten_transpose(psi, q_ * g);
    half_width_factor_ = problem.t_crit() * std::sqrt(v_);
  }

  double psi() const noexcept { return psi_; }
  const Eigen::MatrixXd& xtgx_inv() const noexcept { return xtgx_inv_; }
  const Eigen::VectorXd& b() const noexcept { return b_; }
  double v() const noexcept { return v_; }
  /// t_{m,1-alpha/2} v(psi)^{1/2}.
  double half_width_factor() const noexcept { return half_width_factor_; }
  const Problem& problem() const noexcept { return *problem_; }

  /// GLS residual quadratic form S = e'G^{-1}(I - X(X'G^{-1}X)^{-1}X'G^{-1})e.
  double residual_quadratic_form(const Eigen::VectorXd& e) const {
    Eigen::VectorXd we(e.size());
    whiten(psi_, e, we);
    const Eigen::VectorXd proj = q_.transpose() * we;
    we.noalias() -= q_ * proj;
    return we.squaredNorm();
  }

  double w(const Eigen::VectorXd& e) const { return residual_quadratic_form(e) / problem_->m(); }

  /// |b'e| <= t v^{1/2} w^{1/2}.
  bool covers(const Eigen::VectorXd& e) const {
    return std::abs(b_.dot(e)) <= half_width_factor_ * std::sqrt(w(e));
  }

  /// J(psi) for an observed response y.
  Interval interval(const Eigen::VectorXd& y) const {
    return Interval{b_.dot(y), half_width_factor_ * std::sqrt(w(y))};
  }

 private:
  const Problem* problem_;
  double psi_;
  Eigen::MatrixXd q_;
  Eigen::MatrixXd xtgx_inv_;
  Eigen::VectorXd b_;
  double v_ = 0.0;
  double half_width_factor_ = 0.0;
};

inline GlsCache gls_cache(const Problem& problem, double psi) { return GlsCache(problem, psi); }

inline void check_length(const Problem& problem, const Eigen::VectorXd& v, const char* what) {
  if (v.size() != problem.n()) {
    throw DimensionMismatchError(std::string(what) + " has length " + std::to_string(v.size()) +
                                 ", expected n = " + std::to_string(problem.n()));
  }
}

/// w(e, psi) = (1/m) e'G^{-1}(I - X(X'G^{-1}X)^{-1}X'G^{-1}) e.
inline double w_statistic(const Eigen::VectorXd& edagger, double psi, const Problem& problem) {
  check_length(problem, edagger, "edagger");
  return GlsCache(problem, psi).w(edagger);
}

/// h(e, psi_tilde): whether theta lies in J(psi_tilde), expressed through e.
inline bool coverage_indicator(const Eigen::VectorXd& edagger, double psi_tilde, const Problem& problem) {
  check_length(problem, edagger, "edagger");
  return GlsCache(problem, psi_tilde).covers(edagger);
}

/// J(psi_tilde) = [a'beta_hat(psi_tilde) +- t v^{1/2} sigma_hat(psi_tilde)].
inline Interval confidence_interval(const Eigen::VectorXd& y, double psi_tilde, const Problem& problem) {
  check_length(problem, y, "y");
  return GlsCache(problem, psi_tilde).interval(y);
}

}  // namespace arcover
