#pragma once

#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

#include <Eigen/Dense>

#include "arcover/errors.hpp"
#include "arcover/student_t.hpp"

namespace arcover {

/// Largest tolerated estimate of the relative error of a least-squares solve.
inline constexpr double kMaxSolveRelativeError = 1e-6;

/// Estimated relative error (condition number times machine epsilon) of a
/// least-squares solve against the given triangular factor.
inline double solve_relative_error(const Eigen::MatrixXd& r) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(r);
  const auto& s = svd.singularValues();
  const double smin = s(s.size() - 1);
  if (!(smin > 0.0)) return std::numeric_limits<double>::infinity();
  return s(0) / smin * std::numeric_limits<double>::epsilon();
}

/// The fixed inputs of every computation: design X (n x p, full column rank,
/// n > p), nonzero contrast a defining theta = a'beta, and level alpha.
class Problem {
 public:
  Problem(Eigen::MatrixXd x, Eigen::VectorXd a, double alpha)
      : x_(std::move(x)), a_(std::move(a)), alpha_(alpha) {
    const auto n = x_.rows();
    const auto p = x_.cols();
    if (p < 1) throw DimensionMismatchError("design matrix has no columns");
    if (a_.size() != p) {
      std::ostringstream os;
      os << "contrast has length " << a_.size() << " but design has " << p << " columns";
      throw DimensionMismatchError(os.str());
    }
    if (n <= p) {
      std::ostringstream os;
      os << "need n > p, got n=" << n << ", p=" << p;
      throw DimensionMismatchError(os.str());
    }
    if (!x_.allFinite() || !a_.allFinite()) throw DomainError("design or contrast has non-finite entries");
    if (a_.isZero(0.0)) throw DomainError("contrast a must be nonzero");
    if (!(alpha_ > 0.0 && alpha_ < 1.0)) throw DomainError("alpha must lie in (0,1)");

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> pivoted(x_);
    if (pivoted.rank() < p) {
      std::ostringstream os;
      os << "design matrix is rank deficient (rank " << pivoted.rank() << " < " << p << ")";
      throw RankDeficientError(os.str());
    }

    Eigen::HouseholderQR<Eigen::MatrixXd> qr(x_);
    r_ = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
    if (solve_relative_error(r_) > kMaxSolveRelativeError) {
      throw IllConditionedError("design matrix is too ill-conditioned for a reliable solve");
    }
    const Eigen::MatrixXd q_full = qr.householderQ();
    q_ = q_full.leftCols(p);
    q_perp_ = q_full.rightCols(n - p);
    t_crit_ = t_quantile(static_cast<int>(n - p), 1.0 - alpha_ / 2.0);
  }

  const Eigen::MatrixXd& x() const noexcept { return x_; }
  const Eigen::VectorXd& a() const noexcept { return a_; }
  double alpha() const noexcept { return alpha_; }
  int n() const noexcept { return static_cast<int>(x_.rows()); }
  int p() const noexcept { return static_cast<int>(x_.cols()); }
  /// Residual degrees of freedom n - p.
  int m() const noexcept { return n() - p(); }
  /// t_{m, 1-alpha/2}.
  double t_crit() const noexcept { return t_crit_; }

  /// Orthonormal basis of the column space of X (n x p).
  const Eigen::MatrixXd& q() const noexcept { return q_; }
  /// Orthonormal basis of its orthogonal complement (n x m).
  const Eigen::MatrixXd& q_perp() const noexcept { return q_perp_; }
  /// R factor of X = QR.
  const Eigen::MatrixXd& r() const noexcept { return r_; }

 private:
  Eigen::MatrixXd x_;
  Eigen::VectorXd a_;
  double alpha_;
  Eigen::MatrixXd q_;
  Eigen::MatrixXd q_perp_;
  Eigen::MatrixXd r_;
  double t_crit_ = 0.0;
};

}  // namespace arcover
