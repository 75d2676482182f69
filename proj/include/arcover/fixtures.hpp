#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "arcover/rng.hpp"

namespace arcover::fixtures {

/// A named synthetic design with its contrast.
struct Design {
  std::string name;
  Eigen::MatrixXd x;
  Eigen::VectorXd a;
};

/// Portable standard normal stream (SplitMix64 + Box-Muller), identical on
/// every platform, used only to build the noise covariates below.
class PortableNormal {
 public:
  explicit PortableNormal(std::uint64_t seed) : state_(seed) {}
  double operator()() {
    const double u1 = (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
    const double u2 = (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t next() { return mix64(state_++); }
  std::uint64_t state_;
};

/// Intercept only, n = 20; theta is the mean.
inline Design intercept_n20() {
  return {"intercept_n20", Eigen::MatrixXd::Ones(20, 1), Eigen::VectorXd::Ones(1)};
}

/// Intercept, linear trend and a seasonal covariate, n = 20; theta = beta_3.
inline Design seasonal_n20() {
  const int n = 20;
  Eigen::MatrixXd x(n, 3);
  for (int t = 0; t < n; ++t) {
    x(t, 0) = 1.0;
    x(t, 1) = (t + 1) / static_cast<double>(n);
    x(t, 2) = std::sin(2.0 * std::numbers::pi * (t + 1) / 4.0 + 0.3);
  }
  Eigen::VectorXd a = Eigen::VectorXd::Zero(3);
  a(2) = 1.0;
  return {"seasonal_n20", x, a};
}

/// Intercept, linear trend and two noise covariates, n = 25; theta is the trend slope.
inline Design trending_n25() {
  const int n = 25;
  PortableNormal normal(20250611);
  Eigen::MatrixXd x(n, 4);
  for (int t = 0; t < n; ++t) {
    x(t, 0) = 1.0;
    x(t, 1) = t + 1.0;
  }
  for (int c = 2; c < 4; ++c)
    for (int t = 0; t < n; ++t) x(t, c) = normal();
  Eigen::VectorXd a = Eigen::VectorXd::Zero(4);
  a(1) = 1.0;
  return {"trending_n25", x, a};
}

/// Small n = 10, p = 3 design for unit checks; theta = beta_3.
inline Design small_n10() {
  const int n = 10;
  PortableNormal normal(7);
  Eigen::MatrixXd x(n, 3);
  for (int t = 0; t < n; ++t) {
    x(t, 0) = 1.0;
    x(t, 1) = t + 1.0;
    x(t, 2) = normal();
  }
  Eigen::VectorXd a = Eigen::VectorXd::Zero(3);
  a(2) = 1.0;
  return {"small_n10", x, a};
}

/// The designs with n >= 20 used by the coverage checks.
inline std::vector<Design> coverage_designs() { return {intercept_n20(), seasonal_n20(), trending_n25()}; }

inline std::vector<Design> all_designs() {
  return {intercept_n20(), seasonal_n20(), trending_n25(), small_n10()};
}

}  // namespace arcover::fixtures
