#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "arcover/ar1.hpp"
#include "arcover/errors.hpp"
#include "arcover/gls.hpp"
#include "arcover/pretest.hpp"
#include "arcover/problem.hpp"
#include "arcover/psi_estimators.hpp"
#include "arcover/rng.hpp"

namespace arcover {

enum class IntervalKind { OLS, FGLS, TwoStage, KnownPsi };
enum class Method { BruteForce, ControlVariate };

inline std::string_view to_string(IntervalKind k) {
  switch (k) {
    case IntervalKind::OLS: return "OLS";
    case IntervalKind::FGLS: return "FGLS";
    case IntervalKind::TwoStage: return "TwoStage";
    case IntervalKind::KnownPsi: return "KnownPsi";
  }
  return "?";
}

inline IntervalKind parse_interval_kind(std::string_view s) {
  if (s == "OLS" || s == "ols") return IntervalKind::OLS;
  if (s == "FGLS" || s == "fgls") return IntervalKind::FGLS;
  if (s == "TwoStage" || s == "two-stage" || s == "twostage") return IntervalKind::TwoStage;
  if (s == "KnownPsi" || s == "known-psi") return IntervalKind::KnownPsi;
  throw DomainError("unknown interval kind '" + std::string(s) + "'");
}

inline std::string_view to_string(Method m) { return m == Method::BruteForce ? "brute-force" : "control-variate"; }

inline Method parse_method(std::string_view s) {
  if (s == "brute-force" || s == "brute") return Method::BruteForce;
  if (s == "control-variate" || s == "cv") return Method::ControlVariate;
  throw DomainError("unknown method '" + std::string(s) + "'");
}

/// {0, 0.07, 0.14, ..., 0.98}.
inline std::vector<double> default_psi_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 14; ++i) grid.push_back(i * 7 / 100.0);
  return grid;
}

/// Replaces the psi estimator inside FGLS / two-stage intervals. Receives the
/// data the estimator would see (e-dagger or y) and the true psi. Test hook.
using EstimatorOverride = std::function<double(const Eigen::VectorXd& data, double true_psi)>;

struct SimConfig {
  std::int64_t runs = 50000;
  std::uint64_t seed = 0;
  std::vector<double> psi_grid = default_psi_grid();
  PsiEstimatorKind estimator = PsiEstimatorKind::REML;
  PretestSpec pretest;
  Method method = Method::ControlVariate;
  /// Same e-dagger stream for every interval kind within a psi cell.
  bool common_random_numbers = true;
  /// Extra stream tag; distinct tags give independent draws for the same seed.
  std::uint64_t stream = 0;
  /// Worker threads; 0 means hardware concurrency.
  int threads = 1;
  EstimatorOverride estimator_override;
};

/// One cell of a coverage curve.
struct CoverageEstimate {
  double psi = 0.0;
  IntervalKind kind = IntervalKind::OLS;
  Method method = Method::BruteForce;
  double estimate = std::numeric_limits<double>::quiet_NaN();
  double std_error = std::numeric_limits<double>::quiet_NaN();
  std::int64_t runs = 0;
  std::uint64_t seed = 0;
  /// Seconds spent in the estimation loop (shared by kinds estimated jointly).
  double wall_time = 0.0;
  /// Per-run variance of the averaged summand (binomial p(1-p) for brute force).
  double summand_variance = std::numeric_limits<double>::quiet_NaN();
  /// Nonempty when the cell failed; the numeric fields are then NaN.
  std::string error;

  bool ok() const noexcept { return error.empty(); }
};

/// Raised when a simulation run fails; carries the offending run index.
class SimulationError : public Error {
 public:
  SimulationError(const std::string& what, ErrorKind cause, std::int64_t run, std::int64_t completed)
      : Error(cause, what), run_(run), completed_(completed) {}
  std::int64_t run() const noexcept { return run_; }
  /// Runs finished by the failing worker before the failure.
  std::int64_t completed_runs() const noexcept { return completed_; }

 private:
  std::int64_t run_;
  std::int64_t completed_;
};

inline void validate(const SimConfig& cfg) {
  if (cfg.runs < 2) throw DomainError("SimConfig: runs must be >= 2");
  for (double psi : cfg.psi_grid) check_psi(psi, "SimConfig grid");
  if (!std::is_sorted(cfg.psi_grid.begin(), cfg.psi_grid.end())) {
    throw DomainError("SimConfig: psi grid must be ascending");
  }
}

/// Design-level state shared read-only by every draw of every cell.
class SimContext {
 public:
  SimContext(const Problem& problem, const SimConfig& cfg)
      : problem_(&problem),
        cfg_(&cfg),
        estimator_(problem, cfg.estimator),
        ols_(problem, 0.0) {
    if (cfg.pretest.n != 0 && (cfg.pretest.n != problem.n() || cfg.pretest.p != problem.p())) {
      throw DimensionMismatchError("SimConfig: pretest was built for a different design");
    }
  }

  const Problem& problem() const noexcept { return *problem_; }
  const SimConfig& config() const noexcept { return *cfg_; }
  const PsiEstimator& estimator() const noexcept { return estimator_; }
  const GlsCache& ols() const noexcept { return ols_; }

  double estimate_psi(const Eigen::VectorXd& data, double true_psi) const {
    if (cfg_->estimator_override) {
      const double psi = cfg_->estimator_override(data, true_psi);
      check_psi(psi, "estimator override");
      return psi;
    }
    return estimator_.estimate(data);
  }

  /// Whether the pretest rejects psi = 0 (so the two-stage interval is FGLS).
  bool pretest_rejects(const Eigen::VectorXd& data) const {
    if (cfg_->pretest.n == 0) throw DomainError("SimConfig: two-stage interval needs a configured pretest");
    return cfg_->pretest.rejects(ols_residuals(*problem_, data));
  }

 private:
  const Problem* problem_;
  const SimConfig* cfg_;
  PsiEstimator estimator_;
  GlsCache ols_;
};

namespace detail {

struct KindMask {
  bool ols = false, fgls = false, two_stage = false, known = false;
};

inline KindMask mask_of(std::span<const IntervalKind> kinds) {
  KindMask m;
  for (auto k : kinds) {
    switch (k) {
      case IntervalKind::OLS: m.ols = true; break;
      case IntervalKind::FGLS: m.fgls = true; break;
      case IntervalKind::TwoStage: m.two_stage = true; break;
      case IntervalKind::KnownPsi: m.known = true; break;
    }
  }
  return m;
}

/// Coverage indicators of one e-dagger draw, computed through the pivot form.
struct Indicators {
  bool ols = false, fgls = false, two_stage = false, known = false;

  bool get(IntervalKind k) const noexcept {
    switch (k) {
      case IntervalKind::OLS: return ols;
      case IntervalKind::FGLS: return fgls;
      case IntervalKind::TwoStage: return two_stage;
      case IntervalKind::KnownPsi: return known;
    }
    return false;
  }
};

inline Indicators evaluate_edagger(const SimContext& ctx, const GlsCache& truth, const Eigen::VectorXd& e,
                                   const KindMask& need) {
  Indicators out;
  const bool need_ols = need.ols || need.two_stage;
  if (need_ols) out.ols = ctx.ols().covers(e);
  if (need.known) out.known = truth.covers(e);

  bool rejects = false;
  if (need.two_stage) rejects = ctx.pretest_rejects(e);
  if (need.fgls || (need.two_stage && rejects)) {
    const double psi_tilde = ctx.estimate_psi(e, truth.psi());
    out.fgls = GlsCache(ctx.problem(), psi_tilde).covers(e);
  }
  if (need.two_stage) out.two_stage = rejects ? out.fgls : out.ols;
  return out;
}

/// The same indicators computed from y = X beta + sigma e, by building the
/// intervals and testing theta = a'beta for membership.
inline Indicators evaluate_direct(const SimContext& ctx, double true_psi, const Eigen::VectorXd& y, double theta,
                                  const KindMask& need) {
  Indicators out;
  const Problem& problem = ctx.problem();
  const bool need_ols = need.ols || need.two_stage;
  if (need_ols) out.ols = confidence_interval(y, 0.0, problem).contains(theta);
  if (need.known) out.known = confidence_interval(y, true_psi, problem).contains(theta);
  bool rejects = false;
  if (need.two_stage) rejects = ctx.pretest_rejects(y);
  if (need.fgls || (need.two_stage && rejects)) {
    const double psi_tilde = ctx.estimate_psi(y, true_psi);
    out.fgls = confidence_interval(y, psi_tilde, problem).contains(theta);
  }
  if (need.two_stage) out.two_stage = rejects ? out.fgls : out.ols;
  return out;
}

/// Runs body(run) for run in [0, runs) on `threads` workers over contiguous
/// chunks. Rethrows the failure with the lowest run index.
template <typename Body>
void parallel_runs(std::int64_t runs, int threads, Body&& body) {
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = static_cast<int>(std::min<std::int64_t>(threads, runs));
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::int64_t> failed_at(threads, -1);
  auto worker = [&](int w) {
    const std::int64_t begin = runs * w / threads;
    const std::int64_t end = runs * (w + 1) / threads;
    for (std::int64_t r = begin; r < end; ++r) {
      try {
        body(r);
      } catch (...) {
        errors[w] = std::current_exception();
        failed_at[w] = r;
        return;
      }
    }
  };
  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int w = 0; w < threads; ++w) pool.emplace_back(worker, w);
    for (auto& t : pool) t.join();
  }
  for (int w = 0; w < threads; ++w) {
    if (!errors[w]) continue;
    const std::int64_t run = failed_at[w];
    const std::int64_t completed = run - runs * w / threads;
    try {
      std::rethrow_exception(errors[w]);
    } catch (const Error& e) {
      throw SimulationError("simulation run " + std::to_string(run) + " failed: " + e.what(), e.kind(), run,
                            completed);
    } catch (const std::exception& e) {
      throw SimulationError("simulation run " + std::to_string(run) + " failed: " + e.what(), ErrorKind::Numeric,
                            run, completed);
    }
  }
}

inline std::uint64_t stream_tag(const SimConfig& cfg, IntervalKind kind) {
  return cfg.common_random_numbers ? cfg.stream : mix64(cfg.stream ^ (0x51ULL + static_cast<std::uint64_t>(kind)));
}

/// Estimates from per-run summands in {-1, 0, 1}, summed exactly in integers.
inline void finish_estimate(CoverageEstimate& est, std::int64_t sum, std::int64_t sum_sq, double alpha) {
  const double m = static_cast<double>(est.runs);
  if (est.method == Method::BruteForce) {
    const double p = static_cast<double>(sum) / m;
    est.estimate = p;
    est.summand_variance = p * (1.0 - p);
    est.std_error = std::sqrt(est.summand_variance / m);
  } else {
    const double mean = static_cast<double>(sum) / m;
    // (sum_sq - sum^2/M) / (M - 1), exact numerator in integer arithmetic when it fits.
    const long double centered =
        static_cast<long double>(sum_sq) - static_cast<long double>(sum) * static_cast<long double>(sum) / m;
    est.summand_variance = static_cast<double>(std::max<long double>(centered, 0.0L) / (m - 1.0));
    est.std_error = std::sqrt(est.summand_variance / m);
    est.estimate = std::clamp(1.0 - alpha + mean, 0.0, 1.0);
  }
}

}  // namespace detail

/// Joint estimation of several interval kinds at one psi from shared draws of
/// e-dagger ~ N(0, G(psi)). `cell` keys the substreams (the grid index inside
/// a curve, 0 for single calls).
///
/// Brute force averages the indicator 1{theta in interval}. The control-variate
/// method averages D = 1{theta in interval} - h(e, psi), where h(e, psi) is the
/// known-psi indicator with exact mean 1 - alpha.
inline std::vector<CoverageEstimate> estimate_coverage_joint(const SimContext& ctx,
                                                             std::span<const IntervalKind> kinds, double psi,
                                                             std::uint64_t cell) {
  const SimConfig& cfg = ctx.config();
  const Problem& problem = ctx.problem();
  validate(cfg);
  check_psi(psi, "estimate_coverage");
  if (kinds.empty()) return {};

  const GlsCache truth(problem, psi);
  const bool cv = cfg.method == Method::ControlVariate;
  detail::KindMask need = detail::mask_of(kinds);
  if (cv) need.known = true;

  const auto runs = cfg.runs;
  const std::uint64_t stream = detail::stream_tag(cfg, kinds.front());
  std::vector<std::vector<std::int8_t>> summands(kinds.size(), std::vector<std::int8_t>(runs));

  const auto start = std::chrono::steady_clock::now();
  detail::parallel_runs(runs, cfg.threads, [&](std::int64_t run) {
    Engine rng = make_engine(cfg.seed, stream, cell, static_cast<std::uint64_t>(run));
    const Eigen::VectorXd e = simulate_edagger(psi, problem.n(), rng);
    const detail::Indicators ind = detail::evaluate_edagger(ctx, truth, e, need);
    for (std::size_t k = 0; k < kinds.size(); ++k) {
      const int hit = ind.get(kinds[k]) ? 1 : 0;
      summands[k][run] = static_cast<std::int8_t>(cv ? hit - (ind.known ? 1 : 0) : hit);
    }
  });
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::vector<CoverageEstimate> out;
  out.reserve(kinds.size());
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    CoverageEstimate est;
    est.psi = psi;
    est.kind = kinds[k];
    est.method = cfg.method;
    est.runs = runs;
    est.seed = cfg.seed;
    est.wall_time = elapsed;
    std::int64_t sum = 0;
    std::int64_t sum_sq = 0;
    for (std::int8_t s : summands[k]) {
      sum += s;
      sum_sq += s * s;
    }
    detail::finish_estimate(est, sum, sum_sq, problem.alpha());
    out.push_back(std::move(est));
  }
  return out;
}

/// Estimates for several kinds at one psi. With common random numbers the kinds
/// share one pass over the draws; otherwise each kind gets its own stream.
inline std::vector<CoverageEstimate> estimate_coverage(const SimContext& ctx, std::span<const IntervalKind> kinds,
                                                       double psi, std::uint64_t cell = 0) {
  if (ctx.config().common_random_numbers) return estimate_coverage_joint(ctx, kinds, psi, cell);
  std::vector<CoverageEstimate> out;
  for (IntervalKind k : kinds) {
    auto one = estimate_coverage_joint(ctx, std::span<const IntervalKind>(&k, 1), psi, cell);
    out.push_back(std::move(one.front()));
  }
  return out;
}

inline CoverageEstimate estimate_coverage(IntervalKind kind, double psi, const Problem& problem,
                                          const SimConfig& cfg) {
  const SimContext ctx(problem, cfg);
  return estimate_coverage(ctx, std::span<const IntervalKind>(&kind, 1), psi).front();
}

/// Brute-force coverage estimate: fraction of M draws whose interval covers theta.
inline CoverageEstimate coverage_bruteforce(IntervalKind kind, double psi, const Problem& problem,
                                            SimConfig cfg) {
  cfg.method = Method::BruteForce;
  return estimate_coverage(kind, psi, problem, cfg);
}

/// 1 - alpha + mean(h(e, psi_tilde) - h(e, psi)).
inline CoverageEstimate coverage_cv_fgls(double psi, const Problem& problem, SimConfig cfg) {
  cfg.method = Method::ControlVariate;
  return estimate_coverage(IntervalKind::FGLS, psi, problem, cfg);
}

/// 1 - alpha + mean(1{theta in K} - h(e, psi)) with K the two-stage interval.
inline CoverageEstimate coverage_cv_twostage(double psi, const Problem& problem, SimConfig cfg) {
  cfg.method = Method::ControlVariate;
  return estimate_coverage(IntervalKind::TwoStage, psi, problem, cfg);
}

/// One estimate per (grid psi, kind), ordered by psi then by the order of
/// `kinds`. A failing cell is recorded in its `error` field and the curve
/// continues.
inline std::vector<CoverageEstimate> coverage_curve(std::span<const IntervalKind> kinds, const Problem& problem,
                                                    const SimConfig& cfg) {
  validate(cfg);
  const SimContext ctx(problem, cfg);
  std::vector<CoverageEstimate> out;
  for (std::size_t i = 0; i < cfg.psi_grid.size(); ++i) {
    const double psi = cfg.psi_grid[i];
    try {
      auto cells = estimate_coverage(ctx, kinds, psi, i);
      for (auto& c : cells) out.push_back(std::move(c));
    } catch (const Error& e) {
      for (IntervalKind k : kinds) {
        CoverageEstimate failed;
        failed.psi = psi;
        failed.kind = k;
        failed.method = cfg.method;
        failed.runs = cfg.runs;
        failed.seed = cfg.seed;
        failed.error = e.what();
        out.push_back(std::move(failed));
      }
    }
  }
  return out;
}

inline std::vector<CoverageEstimate> coverage_curve(IntervalKind kind, const Problem& problem,
                                                    const SimConfig& cfg) {
  return coverage_curve(std::span<const IntervalKind>(&kind, 1), problem, cfg);
}

/// (se_a^2 t_a) / (se_b^2 t_b): how many times cheaper b is than a at matched
/// standard error. Infinite when the denominator is zero.
inline double relative_efficiency(const CoverageEstimate& a, const CoverageEstimate& b) {
  const double num = a.std_error * a.std_error * a.wall_time;
  const double den = b.std_error * b.std_error * b.wall_time;
  if (num == den) return 1.0;
  if (!(den > 0.0)) return std::numeric_limits<double>::infinity();
  return num / den;
}

/// One comparison between the pivot-form and direct-y indicator sequences.
struct OracleCheckEntry {
  IntervalKind kind = IntervalKind::OLS;
  Eigen::VectorXd beta;
  double sigma2 = 1.0;
  std::int64_t discrepancies = 0;
  std::int64_t first_offending_run = -1;
  double estimate_pivot = 0.0;
  double estimate_direct = 0.0;

  bool passed() const noexcept { return discrepancies == 0 && estimate_pivot == estimate_direct; }
};

struct OracleReport {
  double psi = 0.0;
  std::int64_t runs = 0;
  std::vector<OracleCheckEntry> entries;

  bool passed() const noexcept {
    return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed(); });
  }
};

/// Re-derives the OLS, FGLS and two-stage coverage indicators from
/// y = X beta + sigma e on the same draws as the pivot form, for each
/// (beta, sigma^2) pair, and compares the sequences run by run.
inline OracleReport oracle_check(const Problem& problem, double psi, const SimConfig& cfg,
                                 const std::vector<std::pair<Eigen::VectorXd, double>>& parametrizations) {
  validate(cfg);
  check_psi(psi, "oracle_check");
  const SimContext ctx(problem, cfg);
  const GlsCache truth(problem, psi);
  const IntervalKind kinds[] = {IntervalKind::OLS, IntervalKind::FGLS, IntervalKind::TwoStage};
  const detail::KindMask need{true, true, true, false};
  const auto runs = cfg.runs;

  std::vector<detail::Indicators> pivot(runs);
  detail::parallel_runs(runs, cfg.threads, [&](std::int64_t run) {
    Engine rng = make_engine(cfg.seed, cfg.stream, 0, static_cast<std::uint64_t>(run));
    const Eigen::VectorXd e = simulate_edagger(psi, problem.n(), rng);
    pivot[run] = detail::evaluate_edagger(ctx, truth, e, need);
  });

  OracleReport report;
  report.psi = psi;
  report.runs = runs;
  for (const auto& [beta, sigma2] : parametrizations) {
    if (beta.size() != problem.p()) throw DimensionMismatchError("oracle_check: beta has wrong length");
    if (!(sigma2 > 0.0)) throw DomainError("oracle_check: sigma^2 must be positive");
    const double sigma = std::sqrt(sigma2);
    const Eigen::VectorXd mean = problem.x() * beta;
    const double theta = problem.a().dot(beta);
    std::vector<detail::Indicators> direct(runs);
    detail::parallel_runs(runs, cfg.threads, [&](std::int64_t run) {
      Engine rng = make_engine(cfg.seed, cfg.stream, 0, static_cast<std::uint64_t>(run));
      const Eigen::VectorXd e = simulate_edagger(psi, problem.n(), rng);
      const Eigen::VectorXd y = mean + sigma * e;
      direct[run] = detail::evaluate_direct(ctx, psi, y, theta, need);
    });
    for (IntervalKind k : kinds) {
      OracleCheckEntry entry;
      entry.kind = k;
      entry.beta = beta;
      entry.sigma2 = sigma2;
      std::int64_t hits_pivot = 0;
      std::int64_t hits_direct = 0;
      for (std::int64_t r = 0; r < runs; ++r) {
        const bool a = pivot[r].get(k);
        const bool b = direct[r].get(k);
        hits_pivot += a;
        hits_direct += b;
        if (a != b) {
          if (entry.first_offending_run < 0) entry.first_offending_run = r;
          ++entry.discrepancies;
        }
      }
      entry.estimate_pivot = static_cast<double>(hits_pivot) / static_cast<double>(runs);
      entry.estimate_direct = static_cast<double>(hits_direct) / static_cast<double>(runs);
      report.entries.push_back(std::move(entry));
    }
  }
  return report;
}

}  // namespace arcover
