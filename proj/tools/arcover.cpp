// arcover: confidence intervals and coverage curves for regression with AR(1) errors.
//
// Exit codes
//   0   success
//   1   self-check found a violated invariant, or an unclassified failure
//   2   dimension mismatch
//   3   output directory not writable
//   4   non-numeric or malformed input
//   5   rank-deficient or ill-conditioned design
//   6   numerical failure (degenerate residuals, optimizer, quadrature)
//   7   input file unreadable
//   8   argument out of range
//   64  usage error

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "arcover/arcover.hpp"
#include "arcover/fixtures.hpp"
#include "arcover/io.hpp"

namespace fs = std::filesystem;
using namespace arcover;

namespace {

constexpr const char* kVersion = "1.0.0";

enum Exit : int {
  kOk = 0,
  kFailed = 1,
  kDimension = 2,
  kUnwritable = 3,
  kParse = 4,
  kRank = 5,
  kNumeric = 6,
  kRead = 7,
  kDomain = 8,
  kUsage = 64,
};

struct Unwritable : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int exit_code(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::DimensionMismatch: return kDimension;
    case ErrorKind::Parse: return kParse;
    case ErrorKind::RankDeficient:
    case ErrorKind::IllConditioned: return kRank;
    case ErrorKind::DegenerateResiduals:
    case ErrorKind::DegenerateFit:
    case ErrorKind::Numeric: return kNumeric;
    case ErrorKind::Io: return kRead;
    case ErrorKind::Domain: return kDomain;
  }
  return kFailed;
}

struct Options {
  std::string x_path;
  std::string a_spec;
  bool header = false;
  double alpha = 0.05;
  double alpha_tilde = 0.05;
  std::string estimator = "reml";
  std::string pretest = "durbin-watson";
  std::string method = "control-variate";
  std::string grid = "0:0.98:0.07";
  std::int64_t runs = 50000;
  std::uint64_t seed = 0;
  bool independent_streams = false;
  std::vector<std::string> kinds;
  std::string out_dir = ".";
  std::string y_spec;
  std::optional<double> psi;
  bool two_stage = false;
  std::string out_file;
};

int thread_count() {
  if (const char* env = std::getenv("ARCOVER_THREADS")) {
    try {
      const int t = std::stoi(env);
      if (t >= 0) return t;
    } catch (const std::exception&) {
    }
    std::cerr << "warning: ignoring invalid ARCOVER_THREADS='" << env << "'\n";
  }
  return 0;
}

std::string timestamp() {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

Problem load_problem(const Options& o) {
  std::string a = o.a_spec;
  if (a.empty()) {
    // Commands that never use the contrast still need a valid Problem.
    const Eigen::MatrixXd x = io::read_csv_matrix(o.x_path, o.header);
    return Problem(x, Eigen::VectorXd::Ones(x.cols()), o.alpha);
  }
  return io::ingest_problem(o.x_path, a, o.alpha, o.header);
}

SimConfig sim_config(const Options& o, const Problem& p) {
  SimConfig cfg;
  cfg.runs = o.runs;
  cfg.seed = o.seed;
  cfg.psi_grid = io::parse_grid(o.grid);
  cfg.estimator = parse_estimator_kind(o.estimator);
  cfg.method = parse_method(o.method);
  cfg.common_random_numbers = !o.independent_streams;
  cfg.threads = thread_count();
  cfg.pretest = make_pretest(parse_pretest_family(o.pretest), p, o.alpha_tilde);
  validate(cfg);
  return cfg;
}

io::RunManifest manifest(const std::string& command, const Options& o, const Problem& p, const SimConfig& cfg,
                         const std::vector<IntervalKind>& kinds, int argc, char** argv) {
  io::RunManifest m;
  m.command = command;
  m.x_path = o.x_path;
  m.a_spec = o.a_spec;
  m.header = o.header;
  m.n = p.n();
  m.p = p.p();
  m.alpha = o.alpha;
  m.alpha_tilde = o.alpha_tilde;
  m.estimator = std::string(to_string(cfg.estimator));
  m.pretest = std::string(to_string(cfg.pretest.family));
  m.method = std::string(to_string(cfg.method));
  m.grid = o.grid;
  m.psi_grid = cfg.psi_grid;
  for (auto k : kinds) m.kinds.emplace_back(to_string(k));
  m.runs = cfg.runs;
  m.seed = cfg.seed;
  m.common_random_numbers = cfg.common_random_numbers;
  m.tool_version = kVersion;
  m.timestamp = timestamp();
  m.argv.assign(argv, argv + argc);
  return m;
}

void write_outputs(const std::vector<CoverageEstimate>& estimates, const io::RunManifest& man, const fs::path& dir) {
  for (const auto& e : estimates)
    if (!e.ok()) std::cerr << "warning: psi=" << e.psi << " " << to_string(e.kind) << " failed: " << e.error << "\n";
  try {
    io::emit_outputs(io::to_records(estimates), man, dir);
  } catch (const IoError& e) {
    throw Unwritable(e.what());
  }
}

std::vector<IntervalKind> parse_kinds(const std::vector<std::string>& names) {
  std::vector<IntervalKind> kinds;
  for (const auto& n : names) kinds.push_back(parse_interval_kind(n));
  return kinds;
}

void print_summary(const std::vector<CoverageEstimate>& estimates) {
  for (const auto& e : estimates) {
    std::cout << "psi=" << io::format_double(e.psi) << " " << to_string(e.kind) << " ";
    if (e.ok())
      std::cout << "estimate=" << e.estimate << " stderr=" << e.std_error << "\n";
    else
      std::cout << "FAILED " << e.error << "\n";
  }
}

int cmd_interval(const Options& o) {
  const Problem p = load_problem(o);
  const Eigen::VectorXd y = io::parse_vector_spec(o.y_spec);
  check_length(p, y, "y");
  nlohmann::json out;
  double psi = 0.0;
  std::string kind;
  if (o.two_stage) {
    const PretestSpec pre = make_pretest(parse_pretest_family(o.pretest), p, o.alpha_tilde);
    const Eigen::VectorXd r = ols_residuals(p, y);
    const bool rejects = pre.rejects(r);
    out["pretest"] = {{"family", std::string(to_string(pre.family))},
                      {"statistic", pre.family == PretestFamily::DurbinWatson ? dw_statistic(r) : tstat_pretest(r)},
                      {"critical_value", pre.critical_value},
                      {"rejects", rejects}};
    psi = rejects ? estimate_psi(parse_estimator_kind(o.estimator), y, p) : 0.0;
    kind = rejects ? "FGLS" : "OLS";
  } else if (o.psi) {
    psi = *o.psi;
    kind = psi == 0.0 ? "OLS" : "GLS";
  } else {
    psi = estimate_psi(parse_estimator_kind(o.estimator), y, p);
    kind = "FGLS";
  }
  const Interval j = confidence_interval(y, psi, p);
  out["kind"] = kind;
  out["psi"] = psi;
  out["alpha"] = o.alpha;
  out["estimate"] = j.center;
  out["half_width"] = j.half_width;
  out["lower"] = j.lower();
  out["upper"] = j.upper();
  std::cout << out.dump(2) << "\n";
  return kOk;
}

int cmd_critical_value(const Options& o) {
  const Problem p = load_problem(o);
  const PretestSpec spec = make_pretest(parse_pretest_family(o.pretest), p, o.alpha_tilde);
  const std::string text = pretest_to_json(spec).dump(2) + "\n";
  if (o.out_file.empty()) {
    std::cout << text;
  } else {
    try {
      io::write_text(o.out_file, text);
    } catch (const IoError& e) {
      throw Unwritable(e.what());
    }
  }
  return kOk;
}

int cmd_coverage_curve(const Options& o, int argc, char** argv) {
  const Problem p = load_problem(o);
  const SimConfig cfg = sim_config(o, p);
  const auto kinds = parse_kinds(o.kinds.empty() ? std::vector<std::string>{"FGLS"} : o.kinds);
  const auto estimates = coverage_curve(kinds, p, cfg);
  write_outputs(estimates, manifest("coverage-curve", o, p, cfg, kinds, argc, argv), o.out_dir);
  print_summary(estimates);
  return kOk;
}

int cmd_compare(const Options& o, int argc, char** argv) {
  const Problem p = load_problem(o);
  const SimConfig cfg = sim_config(o, p);
  const std::vector<IntervalKind> kinds{IntervalKind::FGLS, IntervalKind::TwoStage};
  const auto estimates = coverage_curve(kinds, p, cfg);
  const auto man = manifest("compare", o, p, cfg, kinds, argc, argv);
  write_outputs(estimates, man, o.out_dir);
  for (auto k : kinds) {
    std::vector<io::CurveRecord> one;
    for (const auto& e : estimates)
      if (e.kind == k) one.push_back(io::to_record(e));
    try {
      io::write_text(fs::path(o.out_dir) / ("curves_" + std::string(to_string(k)) + ".csv"), io::curves_csv(one));
    } catch (const IoError& e) {
      throw Unwritable(e.what());
    }
  }
  print_summary(estimates);
  return kOk;
}

int cmd_efficiency(const Options& o) {
  const Problem p = load_problem(o);
  SimConfig cfg = sim_config(o, p);
  const double psi = o.psi.value_or(0.49);
  check_psi(psi, "efficiency");
  const auto kinds = parse_kinds(o.kinds.empty() ? std::vector<std::string>{"FGLS", "TwoStage"} : o.kinds);
  nlohmann::json out = nlohmann::json::array();
  for (auto k : kinds) {
    cfg.method = Method::BruteForce;
    cfg.stream = 1;
    const auto bf = estimate_coverage(k, psi, p, cfg);
    cfg.method = Method::ControlVariate;
    cfg.stream = 2;
    const auto cv = estimate_coverage(k, psi, p, cfg);
    out.push_back({{"kind", std::string(to_string(k))},
                   {"psi", psi},
                   {"runs", cfg.runs},
                   {"brute_force", {{"estimate", bf.estimate}, {"stderr", bf.std_error}, {"wall_time", bf.wall_time},
                                    {"summand_variance", bf.summand_variance}}},
                   {"control_variate", {{"estimate", cv.estimate}, {"stderr", cv.std_error},
                                        {"wall_time", cv.wall_time}, {"summand_variance", cv.summand_variance}}},
                   {"variance_ratio", cv.summand_variance / bf.summand_variance},
                   {"relative_efficiency", relative_efficiency(bf, cv)}});
  }
  std::cout << out.dump(2) << "\n";
  return kOk;
}

struct CheckLog {
  int failures = 0;
  void record(const std::string& name, bool ok, const std::string& detail) {
    std::cout << (ok ? "PASS " : "FAIL ") << name;
    if (!detail.empty()) std::cout << ": " << detail;
    std::cout << "\n";
    failures += !ok;
  }
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

int cmd_self_check(const Options& o) {
  const Problem p = load_problem(o);
  SimConfig cfg = sim_config(o, p);
  CheckLog log;

  const std::vector<double> sym{1.0, -1.0};
  const double half = imhof_prob_positive(sym);
  log.record("imhof-symmetric", std::abs(half - 0.5) <= 1e-8, "P = " + fmt(half));
  const std::vector<double> ratio{2.0, -1.0};
  const double closed = 2.0 / std::numbers::pi * std::atan(std::sqrt(2.0));
  const double got = imhof_prob_positive(ratio);
  log.record("imhof-closed-form", std::abs(got - closed) <= 1e-6, "P = " + fmt(got));

  if (p.m() >= 1) {
    const Eigen::VectorXd spec = residual_spectrum(p);
    for (double a : {0.01, 0.05, 0.10}) {
      const double c = dw_critical_value(a, spec);
      const double back = dw_null_cdf(c, spec);
      log.record("dw-critical-fixed-point(" + fmt(a) + ")", std::abs(back - a) <= 1e-6, "F(c) = " + fmt(back));
    }
  }

  const double t = p.t_crit();
  log.record("t-quantile-inverts-cdf", std::abs(t_cdf(p.m(), t) - (1.0 - p.alpha() / 2)) <= 1e-10, "t = " + fmt(t));

  Eigen::VectorXd beta = Eigen::VectorXd::LinSpaced(p.p(), 1.0, -1.0);
  const std::vector<std::pair<Eigen::VectorXd, double>> params{{Eigen::VectorXd::Zero(p.p()), 1.0}, {beta, 7.0}};
  for (auto est : {PsiEstimatorKind::REML, PsiEstimatorKind::SampleAcf}) {
    SimConfig c = cfg;
    c.estimator = est;
    const auto report = oracle_check(p, 0.5, c, params);
    std::int64_t worst = 0;
    std::int64_t first = -1;
    for (const auto& e : report.entries) {
      worst = std::max(worst, e.discrepancies);
      if (first < 0) first = e.first_offending_run;
    }
    log.record("parameter-invariance(" + std::string(to_string(est)) + ")", report.passed(),
               worst ? std::to_string(worst) + " discrepancies, first at run " + std::to_string(first) : "");
  }

  cfg.method = Method::BruteForce;
  for (double psi : {0.0, 0.49, 0.98}) {
    const auto e = estimate_coverage(IntervalKind::KnownPsi, psi, p, cfg);
    const double z = std::abs(e.estimate - (1.0 - p.alpha())) / e.std_error;
    log.record("known-psi-exact(" + fmt(psi) + ")", z <= 3.0, "estimate " + fmt(e.estimate) + ", z = " + fmt(z));
  }
  {
    const auto e = estimate_coverage(IntervalKind::OLS, 0.0, p, cfg);
    const double z = std::abs(e.estimate - (1.0 - p.alpha())) / e.std_error;
    log.record("ols-exact-at-zero", z <= 3.0, "estimate " + fmt(e.estimate) + ", z = " + fmt(z));
  }
  {
    SimConfig c = cfg;
    c.method = Method::ControlVariate;
    c.estimator_override = [](const Eigen::VectorXd&, double true_psi) { return true_psi; };
    const auto e = estimate_coverage(IntervalKind::FGLS, 0.4, p, c);
    log.record("control-variate-zero-summand", e.estimate == 1.0 - p.alpha() && e.std_error == 0.0,
               "estimate " + fmt(e.estimate));
  }
  for (auto k : {IntervalKind::FGLS, IntervalKind::TwoStage}) {
    SimConfig bf = cfg;
    bf.stream = 11;
    SimConfig cv = cfg;
    cv.stream = 12;
    cv.method = Method::ControlVariate;
    const auto a = estimate_coverage(k, 0.49, p, bf);
    const auto b = estimate_coverage(k, 0.49, p, cv);
    const double z = std::abs(a.estimate - b.estimate) / std::hypot(a.std_error, b.std_error);
    log.record("control-variate-unbiased(" + std::string(to_string(k)) + ")", z <= 3.0,
               "brute " + fmt(a.estimate) + ", cv " + fmt(b.estimate) + ", z = " + fmt(z));
  }
  {
    SimConfig c = cfg;
    c.runs = std::min<std::int64_t>(cfg.runs, 500);
    c.psi_grid = {0.0, 0.5};
    const auto x = coverage_curve(IntervalKind::TwoStage, p, c);
    const auto y = coverage_curve(IntervalKind::TwoStage, p, c);
    bool same = x.size() == y.size();
    for (std::size_t i = 0; same && i < x.size(); ++i) same = x[i].estimate == y[i].estimate;
    log.record("determinism", same, "");
  }

  std::cout << (log.failures ? std::to_string(log.failures) + " check(s) failed" : "all checks passed") << "\n";
  return log.failures ? kFailed : kOk;
}

int cmd_fixtures(const Options& o) {
  try {
    fs::create_directories(o.out_dir);
    for (const auto& d : fixtures::all_designs()) {
      io::write_text(fs::path(o.out_dir) / (d.name + ".csv"), io::matrix_to_csv(d.x));
      io::write_text(fs::path(o.out_dir) / (d.name + "_a.csv"), io::matrix_to_csv(d.a.transpose()));
    }
  } catch (const std::exception& e) {
    throw Unwritable(e.what());
  }
  return kOk;
}

void add_design(CLI::App* cmd, Options& o, bool needs_contrast) {
  cmd->add_option("--x", o.x_path, "Design matrix CSV (n rows, p columns)")->required();
  auto* a = cmd->add_option("--a", o.a_spec, "Contrast: inline list '0,0,1' or CSV file");
  if (needs_contrast) a->required();
  cmd->add_flag("--header", o.header, "Skip a header row in the design CSV");
  cmd->add_option("--alpha", o.alpha, "One minus the nominal coverage")->check(CLI::Range(0.0, 1.0));
}

void add_pretest(CLI::App* cmd, Options& o) {
  cmd->add_option("--alpha-tilde", o.alpha_tilde, "Pretest size")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--pretest", o.pretest, "durbin-watson | t-stat");
}

void add_simulation(CLI::App* cmd, Options& o) {
  add_pretest(cmd, o);
  cmd->add_option("--estimator", o.estimator, "reml | ml | sample-acf");
  cmd->add_option("--grid", o.grid, "start:stop:step (inclusive) or comma list");
  cmd->add_option("--runs,-M", o.runs, "Simulation runs per grid point")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", o.seed, "Master seed")->required();
  cmd->add_option("--method", o.method, "control-variate | brute-force");
  cmd->add_flag("--independent-streams", o.independent_streams, "Separate random streams per interval kind");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Confidence intervals and coverage curves for linear regression with AR(1) errors"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Options o;

  auto* interval = app.add_subcommand("interval", "Interval for theta = a'beta from an observed response");
  add_design(interval, o, true);
  add_pretest(interval, o);
  interval->add_option("--y", o.y_spec, "Response: inline list or CSV file")->required();
  interval->add_option("--psi", o.psi, "Use this psi instead of estimating it (0 gives OLS)");
  interval->add_option("--estimator", o.estimator, "reml | ml | sample-acf");
  interval->add_flag("--two-stage", o.two_stage, "Pretest psi = 0 and choose OLS or FGLS");

  auto* critical = app.add_subcommand("critical-value", "Durbin-Watson critical value and residual spectrum");
  add_design(critical, o, false);
  add_pretest(critical, o);
  critical->add_option("--out", o.out_file, "Write the JSON here instead of stdout");

  auto* curve = app.add_subcommand("coverage-curve", "Coverage probability versus psi");
  add_design(curve, o, true);
  add_simulation(curve, o);
  curve->add_option("--kind", o.kinds, "OLS | FGLS | TwoStage | KnownPsi (repeatable)");
  curve->add_option("--out-dir", o.out_dir, "Output directory");

  auto* compare = app.add_subcommand("compare", "FGLS and two-stage curves on shared random numbers");
  add_design(compare, o, true);
  add_simulation(compare, o);
  compare->add_option("--out-dir", o.out_dir, "Output directory");

  auto* efficiency = app.add_subcommand("efficiency", "Brute force versus control variate at one psi");
  add_design(efficiency, o, true);
  add_simulation(efficiency, o);
  efficiency->add_option("--psi", o.psi, "True psi (default 0.49)");
  efficiency->add_option("--kind", o.kinds, "FGLS | TwoStage (repeatable)");

  auto* self_check = app.add_subcommand("self-check", "Pivot oracles and invariant suite on a design");
  add_design(self_check, o, true);
  add_pretest(self_check, o);
  self_check->add_option("--runs,-M", o.runs, "Simulation runs per check")->check(CLI::PositiveNumber);
  self_check->add_option("--seed", o.seed, "Master seed");
  o.runs = 50000;

  auto* fixtures_cmd = app.add_subcommand("fixtures", "Write the built-in synthetic designs as CSV");
  fixtures_cmd->add_option("--out-dir", o.out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return e.get_exit_code() == 0 ? rc : kUsage;
  }
  if (self_check->parsed() && self_check->count("--runs") == 0) o.runs = 4000;
  if (self_check->parsed() && self_check->count("--seed") == 0) o.seed = 1;

  try {
    if (interval->parsed()) return cmd_interval(o);
    if (critical->parsed()) return cmd_critical_value(o);
    if (curve->parsed()) return cmd_coverage_curve(o, argc, argv);
    if (compare->parsed()) return cmd_compare(o, argc, argv);
    if (efficiency->parsed()) return cmd_efficiency(o);
    if (self_check->parsed()) return cmd_self_check(o);
    if (fixtures_cmd->parsed()) return cmd_fixtures(o);
  } catch (const Unwritable& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUnwritable;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailed;
  }
  return kUsage;
}
