#pragma once

// Independent dense-matrix reference computations. Nothing here goes through
// the closed-form precision, the whitening transform or the cached QR factors
// used by the library.

#include <cmath>

#include <Eigen/Dense>

namespace arcover::oracle {

inline Eigen::MatrixXd dense_g(double psi, int n) {
  Eigen::MatrixXd g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = std::pow(psi, std::abs(i - j));
  return g;
}

struct DenseGls {
  Eigen::VectorXd beta;
  Eigen::VectorXd b;  // b' = a'(X'G^-1X)^-1 X'G^-1
  double v = 0.0;
  double s = 0.0;  // residual quadratic form
  double logdet_g = 0.0;
  double logdet_xtgx = 0.0;
};

inline DenseGls dense_gls(const Eigen::MatrixXd& x, const Eigen::VectorXd& a, const Eigen::VectorXd& y, double psi) {
  const int n = static_cast<int>(x.rows());
  const Eigen::MatrixXd g = dense_g(psi, n);
  const Eigen::MatrixXd gi = g.fullPivLu().inverse();
  const Eigen::MatrixXd xtgx = x.transpose() * gi * x;
  const Eigen::MatrixXd xtgx_inv = xtgx.fullPivLu().inverse();
  DenseGls out;
  out.beta = xtgx_inv * x.transpose() * gi * y;
  out.b = (a.transpose() * xtgx_inv * x.transpose() * gi).transpose();
  out.v = a.dot(xtgx_inv * a);
  const Eigen::VectorXd resid = y - x * out.beta;
  out.s = resid.dot(gi * resid);
  out.logdet_g = std::log(g.fullPivLu().determinant());
  out.logdet_xtgx = std::log(xtgx.fullPivLu().determinant());
  return out;
}

inline double dense_ml(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double psi) {
  const auto fit = dense_gls(x, Eigen::VectorXd::Ones(x.cols()), y, psi);
  const double n = static_cast<double>(x.rows());
  return -0.5 * n * std::log(fit.s / n) - 0.5 * fit.logdet_g;
}

inline double dense_reml(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double psi) {
  const auto fit = dense_gls(x, Eigen::VectorXd::Ones(x.cols()), y, psi);
  const double m = static_cast<double>(x.rows() - x.cols());
  return -0.5 * m * std::log(fit.s / m) - 0.5 * fit.logdet_g - 0.5 * fit.logdet_xtgx;
}

/// OLS residual projector I - X(X'X)^{-1}X' by normal equations.
inline Eigen::MatrixXd dense_residual_projector(const Eigen::MatrixXd& x) {
  const Eigen::Index n = x.rows();
  return Eigen::MatrixXd::Identity(n, n) - x * (x.transpose() * x).inverse() * x.transpose();
}

}  // namespace arcover::oracle
