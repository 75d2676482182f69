#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "arcover/fixtures.hpp"
#include "arcover/pretest.hpp"
#include "arcover/rng.hpp"
#include "oracles.hpp"

namespace arcover {
namespace {

Problem design(const fixtures::Design& d) { return Problem(d.x, d.a, 0.05); }

TEST(DwStatistic, DirectArithmetic) {
  EXPECT_EQ(dw_statistic(Eigen::Vector4d(1, 1, 1, 1)), 0.0);
  EXPECT_DOUBLE_EQ(dw_statistic(Eigen::Vector4d(1, -1, 1, -1)), 3.0);
  EXPECT_DOUBLE_EQ(dw_statistic(Eigen::Vector3d(1, 0, -1)), 1.0);
  EXPECT_THROW(dw_statistic(Eigen::Vector3d::Zero()), DegenerateResidualsError);
}

TEST(DwStatistic, QuadraticFormAndBounds) {
  Engine rng(5);
  std::normal_distribution<double> z;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + trial % 30;
    Eigen::VectorXd r(n);
    for (int i = 0; i < n; ++i) r(i) = z(rng) + (trial % 3 == 0 ? 0.0 : 0.3 * i);
    const double d = dw_statistic(r);
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 4.0);
    EXPECT_NEAR(d, r.dot(dw_matrix(n) * r) / r.squaredNorm(), 1e-12);
    EXPECT_NEAR(dw_statistic(-3.0 * r), d, 1e-12);
  }
}

TEST(ResidualSpectrum, OneDimensionalResidualSpace) {
  const int n = 6;
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, n - 1);
  x.topRows(n - 1) = Eigen::MatrixXd::Identity(n - 1, n - 1);
  const Problem p(x, Eigen::VectorXd::Ones(n - 1), 0.05);
  const Eigen::VectorXd spec = residual_spectrum(p);
  ASSERT_EQ(spec.size(), 1);
  Eigen::VectorXd q = Eigen::VectorXd::Zero(n);
  q(n - 1) = 1.0;
  EXPECT_NEAR(spec(0), q.dot(dw_matrix(n) * q), 1e-12);
}

TEST(ResidualSpectrum, BoundsAndTrace) {
  for (const auto& d : fixtures::all_designs()) {
    const Problem p = design(d);
    const Eigen::VectorXd spec = residual_spectrum(p);
    ASSERT_EQ(spec.size(), p.m());
    EXPECT_GE(spec.minCoeff(), -1e-12) << d.name;
    EXPECT_LE(spec.maxCoeff(), 4.0 + 1e-12) << d.name;
    // Oracle: trace(Q'BQ) = trace(M B) with M the dense residual projector.
    const double trace = (oracle::dense_residual_projector(p.x()) * dw_matrix(p.n())).trace();
    EXPECT_NEAR(spec.sum(), trace, 1e-9) << d.name;
  }
}

TEST(ResidualSpectrum, InvariantUnderColumnOperations) {
  const auto d = fixtures::trending_n25();
  const Problem p = design(d);
  Eigen::MatrixXd mix(4, 4);
  mix << 1, 2, 0, 0, 0, 1, 0, 0, 0.5, 0, 3, 1, 0, -1, 0, 2;
  const Problem q(d.x * mix, Eigen::VectorXd::Ones(4), 0.05);
  EXPECT_LT((residual_spectrum(p) - residual_spectrum(q)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Imhof, ClosedForms) {
  const std::vector<double> pos{2.0};
  EXPECT_EQ(imhof_prob_positive(pos), 1.0);
  const std::vector<double> sym{1.0, -1.0};
  EXPECT_NEAR(imhof_prob_positive(sym), 0.5, 1e-8);
  // P(2 z1^2 > z2^2) = P(|z2/z1| < sqrt 2) for a standard Cauchy ratio.
  const std::vector<double> ratio{2.0, -1.0};
  EXPECT_NEAR(imhof_prob_positive(ratio), 2.0 / std::numbers::pi * std::atan(std::sqrt(2.0)), 1e-6);
  EXPECT_NEAR(imhof_prob_positive(ratio), 0.6081734479693928, 1e-6);
  const std::vector<double> zeros{0.0, 0.0};
  EXPECT_THROW(imhof_prob_positive(zeros), DomainError);
}

TEST(Imhof, MatchesMonteCarlo) {
  Engine rng(2024);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u(-1.0, 2.0);
  std::uniform_int_distribution<int> len(2, 20);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> w(static_cast<std::size_t>(len(rng)));
    for (double& x : w) x = u(rng);
    w[0] = -std::abs(w[0]) - 0.1;
    w[1] = std::abs(w[1]) + 0.1;
    const double exact = imhof_prob_positive(w);
    const int draws = 200000;
    int hits = 0;
    for (int k = 0; k < draws; ++k) {
      double q = 0.0;
      for (double l : w) {
        const double g = z(rng);
        q += l * g * g;
      }
      hits += q > 0.0;
    }
    const double se = std::sqrt(exact * (1.0 - exact) / draws);
    EXPECT_NEAR(static_cast<double>(hits) / draws, exact, 3 * se) << "trial " << trial;
  }
}

TEST(DwNullCdf, EndpointsAndMonotone) {
  const Problem p = design(fixtures::seasonal_n20());
  const Eigen::VectorXd spec = residual_spectrum(p);
  EXPECT_EQ(dw_null_cdf(-1.0, spec), 0.0);
  EXPECT_EQ(dw_null_cdf(5.0, spec), 1.0);
  double prev = 0.0;
  for (int i = 0; i <= 50; ++i) {
    const double c = 4.0 * i / 50.0;
    const double f = dw_null_cdf(c, spec);
    EXPECT_GE(f, prev - 1e-9) << c;
    prev = f;
  }
}

TEST(DwNullCdf, MatchesBruteForceSimulation) {
  const Problem p = design(fixtures::small_n10());
  const Eigen::VectorXd spec = residual_spectrum(p);
  const double exact = dw_null_cdf(1.0, spec);
  // Oracle: simulate d = r'Br / r'r with r = M z, z ~ N(0, I_n), dense projector M.
  const Eigen::MatrixXd proj = oracle::dense_residual_projector(p.x());
  Engine rng(17);
  std::normal_distribution<double> z;
  const int draws = 200000;
  int hits = 0;
  Eigen::VectorXd e(p.n());
  for (int k = 0; k < draws; ++k) {
    for (int i = 0; i < p.n(); ++i) e(i) = z(rng);
    hits += dw_statistic(proj * e) <= 1.0;
  }
  const double se = std::sqrt(exact * (1.0 - exact) / draws);
  EXPECT_NEAR(static_cast<double>(hits) / draws, exact, 3 * se);
}

TEST(DwCriticalValue, FixedPointAndMonotone) {
  const Problem p = design(fixtures::trending_n25());
  const Eigen::VectorXd spec = residual_spectrum(p);
  for (double a : {0.01, 0.05, 0.10}) EXPECT_NEAR(dw_null_cdf(dw_critical_value(a, spec), spec), a, 1e-6);
  EXPECT_LT(dw_critical_value(0.01, spec), dw_critical_value(0.10, spec));
  EXPECT_THROW(dw_critical_value(0.0, spec), DomainError);
}

TEST(DwCriticalValue, EmpiricalNullRejectionRate) {
  const Problem p = design(fixtures::intercept_n20());
  const double c = dw_critical_value(0.05, p);
  Engine rng(271828);
  std::normal_distribution<double> z;
  const int draws = 200000;
  int rejections = 0;
  Eigen::VectorXd e(p.n());
  for (int k = 0; k < draws; ++k) {
    for (int i = 0; i < p.n(); ++i) e(i) = z(rng);
    rejections += dw_statistic(e.array() - e.mean()) <= c;
  }
  EXPECT_NEAR(static_cast<double>(rejections) / draws, 0.05, 3 * std::sqrt(0.05 * 0.95 / draws));
}

TEST(TStatPretest, Values) {
  EXPECT_EQ(tstat_pretest(Eigen::Vector4d(1, 0, -1, 0)), 0.0);
  Eigen::VectorXd r(5);
  r << 1, 2, 3, 4, 5;
  EXPECT_NEAR(tstat_pretest(r), 2.018303795805793, 1e-12);
  EXPECT_NEAR(tstat_pretest(-0.01 * r), tstat_pretest(r), 1e-12);
  EXPECT_THROW(tstat_pretest(Eigen::Vector3d::Zero()), DegenerateResidualsError);
}

TEST(PretestSpec, JsonRoundTripAndRules) {
  const Problem p = design(fixtures::seasonal_n20());
  const PretestSpec dw = make_dw_pretest(p, 0.05);
  const PretestSpec back = pretest_from_json(pretest_to_json(dw));
  EXPECT_EQ(back.n, 20);
  EXPECT_EQ(back.p, 3);
  EXPECT_EQ(back.critical_value, dw.critical_value);
  EXPECT_EQ(back.spectrum, dw.spectrum);
  EXPECT_EQ(back.family, PretestFamily::DurbinWatson);

  const PretestSpec ts = make_tstat_pretest(p, 0.05);
  EXPECT_NEAR(ts.critical_value, 1.6448536269514722, 1e-12);
  EXPECT_EQ(ts.spectrum.size(), 0);
  Eigen::VectorXd smooth(20);
  for (int i = 0; i < 20; ++i) smooth(i) = std::sin(0.2 * i);
  EXPECT_TRUE(dw.rejects(smooth));
  EXPECT_TRUE(ts.rejects(smooth));
  Eigen::VectorXd rough(20);
  for (int i = 0; i < 20; ++i) rough(i) = (i % 2 ? 1.0 : -1.0);
  EXPECT_FALSE(dw.rejects(rough));
  EXPECT_FALSE(ts.rejects(rough));

  auto bad = pretest_to_json(dw);
  bad["spectrum"] = std::vector<double>{1.0};
  EXPECT_THROW(pretest_from_json(bad), DimensionMismatchError);
  EXPECT_THROW(pretest_from_json(nlohmann::json::object()), IoError);
}

}  // namespace
}  // namespace arcover
