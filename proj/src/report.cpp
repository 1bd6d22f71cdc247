#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "satfl/error.hpp"
#include "satfl/harness.hpp"

namespace satfl {

void Table::add(std::vector<Cell> row) {
  if (row.size() != columns.size())
    throw std::logic_error("table " + name + ": row width does not match the header");
  rows.push_back(std::move(row));
}

bool ResultSet::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0) return "0";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string format_cell(const Cell& c) {
  if (const auto* i = std::get_if<long long>(&c)) return std::to_string(*i);
  if (const auto* d = std::get_if<double>(&c)) return format_number(*d);
  const auto& s = std::get<std::string>(c);
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string quoted = "\"";
  for (char ch : s) {
    if (ch == '"') quoted += '"';
    quoted += ch;
  }
  return quoted + '"';
}

void write_csv(std::ostream& os, const Table& table) {
  for (std::size_t k = 0; k < table.columns.size(); ++k)
    os << (k ? "," : "") << table.columns[k];
  os << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t k = 0; k < row.size(); ++k) os << (k ? "," : "") << format_cell(row[k]);
    os << '\n';
  }
}

void write_summary(std::ostream& os, const ResultSet& r) {
  os << "scenario: " << r.scenario << '\n' << "kind: " << r.kind << '\n' << "seed: " << r.seed << '\n';
  for (const auto& w : r.warnings) os << "warning: " << w << '\n';
  for (const auto& t : r.tables) os << "table " << t.name << ": " << t.rows.size() << " rows\n";
  for (const auto& c : r.checks)
    os << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
  const auto passed = std::count_if(r.checks.begin(), r.checks.end(), [](const Check& c) { return c.passed; });
  os << "result: " << passed << '/' << r.checks.size() << " checks passed\n";
}

ReportFormat parse_report_format(const std::string& name) {
  if (name == "csv") return ReportFormat::csv;
  if (name == "summary") return ReportFormat::summary;
  throw ConfigError("format", "expected csv or summary, got '" + name + "'");
}

std::vector<std::filesystem::path> emit_report(const ResultSet& results,
                                               const std::filesystem::path& dir,
                                               ReportFormat format) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  auto open = [&](const std::filesystem::path& p) {
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    written.push_back(p);
    return os;
  };
  if (format == ReportFormat::csv)
    for (const auto& t : results.tables) {
      auto os = open(dir / (t.name + ".csv"));
      write_csv(os, t);
      if (!os) throw std::runtime_error("write failed: " + written.back().string());
    }
  auto os = open(dir / "summary.txt");
  write_summary(os, results);
  if (!os) throw std::runtime_error("write failed: " + written.back().string());
  return written;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("spearman: need two equal-length series");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
      std::size_t j = i;
      while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = 0.5 * static_cast<double>(i + j) + 1;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace satfl
