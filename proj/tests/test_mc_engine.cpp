#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "arcover/fixtures.hpp"
#include "arcover/mc_engine.hpp"

namespace arcover {
namespace {

struct Setup {
  fixtures::Design design;
  Problem problem;
  SimConfig cfg;
};

Setup make_setup(const fixtures::Design& d, std::int64_t runs, std::uint64_t seed) {
  Problem p(d.x, d.a, 0.05);
  SimConfig cfg;
  cfg.runs = runs;
  cfg.seed = seed;
  cfg.pretest = make_dw_pretest(p, 0.05);
  return {d, std::move(p), std::move(cfg)};
}

double nominal_distance(const CoverageEstimate& e) { return std::abs(e.estimate - 0.95); }

TEST(Names, RoundTrip) {
  for (auto k : {IntervalKind::OLS, IntervalKind::FGLS, IntervalKind::TwoStage, IntervalKind::KnownPsi})
    EXPECT_EQ(parse_interval_kind(to_string(k)), k);
  for (auto m : {Method::BruteForce, Method::ControlVariate}) EXPECT_EQ(parse_method(to_string(m)), m);
  EXPECT_THROW(parse_interval_kind("gls"), DomainError);
  const auto grid = default_psi_grid();
  ASSERT_EQ(grid.size(), 15u);
  EXPECT_EQ(grid.front(), 0.0);
  EXPECT_DOUBLE_EQ(grid.back(), 0.98);
}

TEST(SimConfig, Validation) {
  SimConfig cfg;
  cfg.runs = 1;
  EXPECT_THROW(validate(cfg), DomainError);
  cfg.runs = 10;
  cfg.psi_grid = {0.5, 0.2};
  EXPECT_THROW(validate(cfg), DomainError);
  cfg.psi_grid = {0.0, 1.0};
  EXPECT_THROW(validate(cfg), DomainError);
}

TEST(SimContext, RejectsPretestForOtherDesign) {
  auto s = make_setup(fixtures::seasonal_n20(), 100, 1);
  const auto other = fixtures::trending_n25();
  const Problem q(other.x, other.a, 0.05);
  EXPECT_THROW(SimContext(q, s.cfg), DimensionMismatchError);
  SimConfig bare;
  bare.runs = 10;
  try {
    estimate_coverage(IntervalKind::TwoStage, 0.3, q, bare);
    FAIL() << "expected SimulationError";
  } catch (const SimulationError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Domain);
    EXPECT_EQ(e.run(), 0);
  }
}

TEST(BruteForce, KnownPsiIsExact) {
  auto s = make_setup(fixtures::seasonal_n20(), 20000, 3);
  for (double psi : {0.0, 0.6, 0.95}) {
    const auto e = coverage_bruteforce(IntervalKind::KnownPsi, psi, s.problem, s.cfg);
    EXPECT_LE(nominal_distance(e), 3 * e.std_error) << psi;
    EXPECT_LE(e.std_error, 0.5 / std::sqrt(static_cast<double>(e.runs)));
  }
}

TEST(BruteForce, OlsExactAtZero) {
  auto s = make_setup(fixtures::trending_n25(), 20000, 4);
  const auto e = coverage_bruteforce(IntervalKind::OLS, 0.0, s.problem, s.cfg);
  EXPECT_LE(nominal_distance(e), 3 * e.std_error);
  EXPECT_NEAR(e.std_error, std::sqrt(e.estimate * (1 - e.estimate) / e.runs), 1e-15);
}

TEST(ControlVariate, StubbedTruePsiGivesZeroSummand) {
  auto s = make_setup(fixtures::seasonal_n20(), 2000, 5);
  s.cfg.estimator_override = [](const Eigen::VectorXd&, double true_psi) { return true_psi; };
  const auto e = coverage_cv_fgls(0.4, s.problem, s.cfg);
  EXPECT_EQ(e.estimate, 0.95);
  EXPECT_EQ(e.std_error, 0.0);

  // A critical value of 4 makes the pretest reject every draw, so two-stage is FGLS.
  s.cfg.pretest.critical_value = 4.0;
  const auto t = coverage_cv_twostage(0.4, s.problem, s.cfg);
  EXPECT_EQ(t.estimate, 0.95);
  EXPECT_EQ(t.std_error, 0.0);
}

TEST(ControlVariate, KnownPsiSummandIsZero) {
  auto s = make_setup(fixtures::small_n10(), 1000, 6);
  s.cfg.method = Method::ControlVariate;
  const auto e = estimate_coverage(IntervalKind::KnownPsi, 0.7, s.problem, s.cfg);
  EXPECT_EQ(e.estimate, 0.95);
  EXPECT_EQ(e.summand_variance, 0.0);
}

TEST(ControlVariate, AgreesWithBruteForce) {
  auto s = make_setup(fixtures::seasonal_n20(), 10000, 7);
  SimConfig other = s.cfg;
  other.seed = 70;
  for (double psi : {0.0, 0.7}) {
    for (auto kind : {IntervalKind::FGLS, IntervalKind::TwoStage}) {
      const auto cv = estimate_coverage(kind, psi, s.problem, s.cfg);
      const auto bf = coverage_bruteforce(kind, psi, s.problem, other);
      const double se = std::hypot(cv.std_error, bf.std_error);
      EXPECT_LE(std::abs(cv.estimate - bf.estimate), 3 * se) << to_string(kind) << " " << psi;
      EXPECT_GE(cv.estimate, 0.0);
      EXPECT_LE(cv.estimate, 1.0);
    }
  }
}

TEST(Determinism, SameSeedBitIdentical) {
  auto s = make_setup(fixtures::seasonal_n20(), 1500, 8);
  s.cfg.psi_grid = {0.0, 0.5};
  const IntervalKind kinds[] = {IntervalKind::FGLS, IntervalKind::TwoStage};
  const auto a = coverage_curve(kinds, s.problem, s.cfg);
  s.cfg.threads = 3;
  const auto b = coverage_curve(kinds, s.problem, s.cfg);
  ASSERT_EQ(a.size(), 4u);
  ASSERT_EQ(b.size(), 4u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].estimate, b[i].estimate);
    EXPECT_EQ(a[i].std_error, b[i].std_error);
    EXPECT_EQ(a[i].kind, b[i].kind);
  }
  EXPECT_EQ(a[0].psi, 0.0);
  EXPECT_EQ(a[1].kind, IntervalKind::TwoStage);
  s.cfg.seed = 9;
  EXPECT_NE(coverage_curve(kinds, s.problem, s.cfg)[2].estimate, a[2].estimate);
}

TEST(Curve, SingletonGridMatchesSingleCall) {
  auto s = make_setup(fixtures::small_n10(), 1000, 10);
  s.cfg.psi_grid = {0.0};
  const auto curve = coverage_curve(IntervalKind::FGLS, s.problem, s.cfg);
  ASSERT_EQ(curve.size(), 1u);
  const auto single = estimate_coverage(IntervalKind::FGLS, 0.0, s.problem, s.cfg);
  EXPECT_EQ(curve[0].estimate, single.estimate);
  EXPECT_EQ(curve[0].std_error, single.std_error);
}

TEST(Curve, FailingCellIsRecorded) {
  auto s = make_setup(fixtures::small_n10(), 50, 11);
  s.cfg.psi_grid = {0.0, 0.3};
  s.cfg.estimator_override = [](const Eigen::VectorXd&, double true_psi) {
    if (true_psi > 0.1) throw NumericError("stub failure");
    return 0.0;
  };
  const auto curve = coverage_curve(IntervalKind::FGLS, s.problem, s.cfg);
  ASSERT_EQ(curve.size(), 2u);
  EXPECT_TRUE(curve[0].ok());
  EXPECT_FALSE(curve[1].ok());
  EXPECT_NE(curve[1].error.find("stub failure"), std::string::npos);
  EXPECT_TRUE(std::isnan(curve[1].estimate));
}

TEST(CommonRandomNumbers, PairedDifferenceHasSmallerSpread) {
  // Oracle: replicate the FGLS - TwoStage difference over independent seeds and
  // compare the empirical spread of paired versus unpaired differences.
  auto s = make_setup(fixtures::seasonal_n20(), 400, 0);
  s.cfg.method = Method::BruteForce;
  const IntervalKind kinds[] = {IntervalKind::FGLS, IntervalKind::TwoStage};
  auto spread = [&](bool crn) {
    SimConfig cfg = s.cfg;
    cfg.common_random_numbers = crn;
    std::vector<double> diffs;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      cfg.seed = 1000 + seed;
      const SimContext ctx(s.problem, cfg);
      const auto r = estimate_coverage(ctx, kinds, 0.3);
      diffs.push_back(r[0].estimate - r[1].estimate);
    }
    double mean = 0.0;
    for (double d : diffs) mean += d / diffs.size();
    double var = 0.0;
    for (double d : diffs) var += (d - mean) * (d - mean) / (diffs.size() - 1);
    return var;
  };
  EXPECT_LT(spread(true), spread(false));
}

TEST(RelativeEfficiency, Arithmetic) {
  CoverageEstimate a;
  a.std_error = 0.001;
  a.wall_time = 208.0;
  CoverageEstimate b = a;
  EXPECT_EQ(relative_efficiency(a, a), 1.0);
  b.wall_time = 82.0;
  EXPECT_NEAR(relative_efficiency(a, b), 208.0 / 82.0, 1e-12);
  EXPECT_NEAR(relative_efficiency(a, b), 2.54, 0.01);
  b.std_error = 0.0;
  EXPECT_TRUE(std::isinf(relative_efficiency(a, b)));
}

TEST(OracleCheck, PivotAndDirectAgree) {
  auto s = make_setup(fixtures::seasonal_n20(), 1500, 12);
  const Eigen::Vector3d beta(1.5, -2.0, 0.75);
  const std::vector<std::pair<Eigen::VectorXd, double>> params{{Eigen::VectorXd::Zero(3), 1.0}, {beta, 7.0}};
  for (auto kind : {PsiEstimatorKind::REML, PsiEstimatorKind::SampleAcf}) {
    s.cfg.estimator = kind;
    const auto report = oracle_check(s.problem, 0.5, s.cfg, params);
    ASSERT_EQ(report.entries.size(), 6u);
    EXPECT_TRUE(report.passed()) << to_string(kind);
    for (const auto& e : report.entries) {
      EXPECT_EQ(e.discrepancies, 0);
      EXPECT_EQ(e.first_offending_run, -1);
    }
    // Same draws, different parametrizations: identical estimates.
    EXPECT_EQ(report.entries[1].estimate_direct, report.entries[4].estimate_direct);
  }
  EXPECT_THROW(oracle_check(s.problem, 0.5, s.cfg, {{Eigen::VectorXd::Zero(2), 1.0}}), DimensionMismatchError);
}

}  // namespace
}  // namespace arcover
