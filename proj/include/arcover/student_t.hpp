#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include "arcover/errors.hpp"

namespace arcover {

/// CDF of Student's t with m degrees of freedom, through the regularized
/// incomplete beta function.
inline double t_cdf(int m, double t) {
  if (m < 1) throw DomainError("t_cdf: degrees of freedom must be >= 1");
  if (std::isnan(t)) throw DomainError("t_cdf: argument is NaN");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double df = m;
  const double x = df / (df + t * t);
  const double tail = 0.5 * boost::math::ibeta(0.5 * df, 0.5, x);
  return t >= 0 ? 1.0 - tail : tail;
}

/// Quantile t_{m,p}: solves t_cdf(m, t) = p by bracketing on the positive
/// half-line followed by TOMS 748 refinement to absolute tolerance 1e-10 in t.
inline double t_quantile(int m, double p) {
  if (m < 1) throw DomainError("t_quantile: degrees of freedom must be >= 1");
  if (!(p > 0.0 && p < 1.0)) throw DomainError("t_quantile: probability must lie in (0,1)");
  if (p == 0.5) return 0.0;
  if (p < 0.5) return -t_quantile(m, 1.0 - p);

  // Upper tail computed directly so that p close to 1 keeps full resolution.
  const double q = 1.0 - p;
  auto upper_tail_gap = [m, q](double t) {
    const double df = m;
    return 0.5 * boost::math::ibeta(0.5 * df, 0.5, df / (df + t * t)) - q;
  };

  double lo = 0.0;
  double hi = 1.0;
  while (upper_tail_gap(hi) > 0.0) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e300) throw NumericError("t_quantile: failed to bracket the quantile");
  }
  if (upper_tail_gap(hi) == 0.0) return hi;

  std::uintmax_t max_iter = 200;
  auto tol = [](double a, double b) { return std::abs(b - a) <= 1e-12 * std::max(1.0, std::abs(a)); };
  const std::pair<double, double> bracket =
      boost::math::tools::toms748_solve(upper_tail_gap, lo, hi, tol, max_iter);
  return 0.5 * (bracket.first + bracket.second);
}

/// Standard normal quantile.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_quantile: probability must lie in (0,1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

}  // namespace arcover
