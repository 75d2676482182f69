#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "arcover/errors.hpp"
#include "arcover/mc_engine.hpp"
#include "arcover/problem.hpp"

namespace arcover::io {

/// Shortest decimal string that round-trips to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_cell(std::string_view cell, std::size_t row, std::size_t col) {
  double v = 0.0;
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (cell.empty() || res.ec != std::errc() || res.ptr != cell.data() + cell.size() || !std::isfinite(v)) {
    throw ParseError("non-numeric cell '" + std::string(cell) + "'", row, col);
  }
  return v;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace detail

/// Parses comma-separated numeric text. With `has_header`, the first
/// non-empty line is skipped. Blank lines are ignored.
inline Eigen::MatrixXd parse_csv_matrix(std::string_view text, bool has_header) {
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 0;
  bool header_pending = has_header;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    std::string_view line = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    start = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;
    if (detail::trim(line).empty()) continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    const auto cells = detail::split(line, ',');
    std::vector<double> row;
    row.reserve(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) row.push_back(detail::parse_cell(cells[c], line_no, c + 1));
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw DimensionMismatchError("row " + std::to_string(line_no) + " has " + std::to_string(row.size()) +
                                   " columns, expected " + std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DimensionMismatchError("no data rows");
  Eigen::MatrixXd m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

inline Eigen::MatrixXd read_csv_matrix(const std::filesystem::path& path, bool has_header) {
  return parse_csv_matrix(detail::read_file(path), has_header);
}

/// A vector given inline ("0,0,1") or as a path to a CSV file holding one row
/// or one column.
inline Eigen::VectorXd parse_vector_spec(const std::string& spec) {
  if (std::filesystem::exists(spec)) {
    const Eigen::MatrixXd m = read_csv_matrix(spec, false);
    if (m.rows() != 1 && m.cols() != 1) throw DimensionMismatchError("vector file must hold a single row or column");
    return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
  }
  const auto cells = detail::split(spec, ',');
  Eigen::VectorXd v(static_cast<Eigen::Index>(cells.size()));
  for (std::size_t i = 0; i < cells.size(); ++i) v(static_cast<Eigen::Index>(i)) = detail::parse_cell(cells[i], 1, i + 1);
  return v;
}

/// Reads the design and contrast and validates them as a Problem.
inline Problem ingest_problem(const std::filesystem::path& x_path, const std::string& a_spec, double alpha,
                              bool has_header = false) {
  Eigen::MatrixXd x = read_csv_matrix(x_path, has_header);
  Eigen::VectorXd a = parse_vector_spec(a_spec);
  return Problem(std::move(x), std::move(a), alpha);
}

/// Psi grid from "start:stop:step" (inclusive endpoints) or a comma list.
/// Range points are computed as integers over the finest decimal scale of the
/// three fields, so "0:0.98:0.07" gives exactly i * 7 / 100.
inline std::vector<double> parse_grid(const std::string& spec) {
  if (spec.find(':') == std::string::npos) {
    const Eigen::VectorXd v = parse_vector_spec(spec);
    return {v.data(), v.data() + v.size()};
  }
  const auto fields = detail::split(spec, ':');
  if (fields.size() != 3) throw ParseError("grid must be start:stop:step", 1, fields.size());
  int decimals = 0;
  for (auto f : fields) {
    const auto dot = f.find('.');
    if (dot != std::string_view::npos) decimals = std::max(decimals, static_cast<int>(f.size() - dot - 1));
  }
  if (decimals > 15) throw ParseError("grid has too many decimals", 1, 1);
  const double scale = std::pow(10.0, decimals);
  std::int64_t ticks[3];
  for (std::size_t i = 0; i < 3; ++i) ticks[i] = std::llround(detail::parse_cell(fields[i], 1, i + 1) * scale);
  if (ticks[2] <= 0) throw DomainError("grid step must be positive");
  if (ticks[1] < ticks[0]) throw DomainError("grid stop is below start");
  std::vector<double> grid;
  for (std::int64_t t = ticks[0]; t <= ticks[1]; t += ticks[2]) grid.push_back(static_cast<double>(t) / scale);
  return grid;
}

inline std::string matrix_to_csv(const Eigen::MatrixXd& m) {
  std::string out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      out += format_double(m(i, j));
    }
    out += '\n';
  }
  return out;
}

/// One plotted row: estimate with approximate 95% bars (+-1.96 se, clamped to [0,1]).
struct CurveRecord {
  double psi = 0.0;
  std::string interval_kind;
  double estimate = 0.0;
  double std_error = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::int64_t runs = 0;
  std::uint64_t seed = 0;
};

inline CurveRecord to_record(const CoverageEstimate& e) {
  CurveRecord r;
  r.psi = e.psi;
  r.interval_kind = std::string(to_string(e.kind));
  r.estimate = e.estimate;
  r.std_error = e.std_error;
  r.ci_low = std::clamp(e.estimate - 1.96 * e.std_error, 0.0, 1.0);
  r.ci_high = std::clamp(e.estimate + 1.96 * e.std_error, 0.0, 1.0);
  r.runs = e.runs;
  r.seed = e.seed;
  return r;
}

inline std::vector<CurveRecord> to_records(const std::vector<CoverageEstimate>& estimates) {
  std::vector<CurveRecord> out;
  out.reserve(estimates.size());
  for (const auto& e : estimates) out.push_back(to_record(e));
  return out;
}

inline constexpr std::string_view kCurveHeader = "psi,interval_kind,estimate,stderr,ci_low,ci_high,M,seed";

inline std::string curves_csv(const std::vector<CurveRecord>& records) {
  std::string out(kCurveHeader);
  out += '\n';
  for (const auto& r : records) {
    out += format_double(r.psi) + ',' + r.interval_kind + ',' + format_double(r.estimate) + ',' +
           format_double(r.std_error) + ',' + format_double(r.ci_low) + ',' + format_double(r.ci_high) + ',' +
           std::to_string(r.runs) + ',' + std::to_string(r.seed) + '\n';
  }
  return out;
}

/// Everything needed to rerun a command and reproduce its curves.
struct RunManifest {
  std::string command;
  std::string x_path;
  std::string a_spec;
  bool header = false;
  int n = 0;
  int p = 0;
  double alpha = 0.05;
  double alpha_tilde = 0.05;
  std::string estimator = "reml";
  std::string pretest = "durbin-watson";
  std::string method = "control-variate";
  std::string grid;
  std::vector<double> psi_grid;
  std::vector<std::string> kinds;
  std::int64_t runs = 0;
  std::uint64_t seed = 0;
  bool common_random_numbers = true;
  std::string tool_version;
  std::string timestamp;
  std::vector<std::string> argv;
};

inline nlohmann::json to_json(const RunManifest& m) {
  nlohmann::json j;
  j["command"] = m.command;
  j["inputs"] = {{"x", m.x_path}, {"a", m.a_spec}, {"header", m.header}};
  j["problem"] = {{"n", m.n}, {"p", m.p}, {"m", m.n - m.p}};
  j["alpha"] = m.alpha;
  j["alpha_tilde"] = m.alpha_tilde;
  j["estimator"] = m.estimator;
  j["pretest"] = m.pretest;
  j["method"] = m.method;
  j["grid"] = m.grid;
  j["psi_grid"] = m.psi_grid;
  j["kinds"] = m.kinds;
  j["runs"] = m.runs;
  j["seed"] = m.seed;
  j["common_random_numbers"] = m.common_random_numbers;
  j["tool_version"] = m.tool_version;
  j["timestamp"] = m.timestamp;
  j["argv"] = m.argv;
  return j;
}

/// Gnuplot script drawing each interval kind's curve with its error bars.
inline std::string plot_script(const std::vector<CurveRecord>& records, double nominal) {
  std::vector<std::string> kinds;
  for (const auto& r : records)
    if (std::find(kinds.begin(), kinds.end(), r.interval_kind) == kinds.end()) kinds.push_back(r.interval_kind);
  std::ostringstream os;
  os << "# Coverage probability versus psi; columns follow curves.csv.\n"
     << "set datafile separator ','\n"
     << "set key bottom left\n"
     << "set xlabel 'psi'\n"
     << "set ylabel 'coverage probability'\n"
     << "set xrange [0:1]\n"
     << "set arrow from 0," << format_double(nominal) << " to 1," << format_double(nominal)
     << " nohead dashtype 2\n"
     << "plot ";
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    if (i) os << ", \\\n     ";
    os << "'curves.csv' using 1:(strcol(2) eq '" << kinds[i] << "' ? $3 : 1/0):5:6 skip 1 with yerrorlines title '"
       << kinds[i] << "'";
  }
  os << '\n';
  return os.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

/// Writes curves.csv, manifest.json and plot.gp into out_dir (created if absent).
inline void emit_outputs(const std::vector<CurveRecord>& records, const RunManifest& manifest,
                         const std::filesystem::path& out_dir) {
  if (records.empty()) throw DomainError("emit_outputs: no records");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    throw IoError("cannot create output directory '" + out_dir.string() + "'");
  }
  write_text(out_dir / "curves.csv", curves_csv(records));
  write_text(out_dir / "manifest.json", to_json(manifest).dump(2) + "\n");
  write_text(out_dir / "plot.gp", plot_script(records, 1.0 - manifest.alpha));
}

}  // namespace arcover::io
