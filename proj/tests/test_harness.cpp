#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "satfl/error.hpp"
#include "satfl/harness.hpp"

using namespace satfl;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

Scenario bundled(const std::string& name) {
  return load_scenario((fs::path(SATFL_SCENARIO_DIR) / (name + ".ini")).string());
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("numbers print with six significant digits") {
  CHECK(format_number(1.0 / 3) == "0.333333");
  CHECK(format_number(123456789.0) == "1.23457e+08");
  CHECK(format_number(-0.0) == "0");
  CHECK(format_number(2.5) == "2.5");
  CHECK(format_cell(Cell{7LL}) == "7");
  CHECK(format_cell(Cell{std::string("a,b")}) == "\"a,b\"");
  CHECK(format_cell(Cell{std::string("say \"x\"")}) == "\"say \"\"x\"\"\"");
}

TEST_CASE("empty tables still carry their header") {
  const Table t{"empty", {"n", "value"}, {}};
  std::ostringstream os;
  write_csv(os, t);
  CHECK(os.str() == "n,value\n");
}

TEST_CASE("rows must match the header width") {
  Table t{"t", {"a", "b"}, {}};
  CHECK_THROWS(t.add({1LL}));
  t.add({1LL, 2.0});
  CHECK(t.rows.size() == 1);
}

TEST_CASE("rank correlation") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1));
  CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1));
  CHECK(spearman({1, 2, 3, 4}, {1, 3, 2, 4}) == doctest::Approx(0.8));
  // ties share their average rank
  CHECK(spearman({1, 2, 3}, {1, 1, 2}) == doctest::Approx(0.8660254));
  CHECK(spearman({1, 2, 3}, {5, 5, 5}) == 0);
  CHECK_THROWS(spearman({1}, {1}));
}

TEST_CASE("report formats") {
  CHECK(parse_report_format("csv") == ReportFormat::csv);
  CHECK(parse_report_format("summary") == ReportFormat::summary);
  CHECK_THROWS_AS(parse_report_format("json"), ConfigError);

  ResultSet r;
  r.scenario = "x";
  r.kind = "fig2";
  r.tables.push_back({"values", {"k"}, {}});
  r.checks.push_back({"ok", true, "fine"});
  r.checks.push_back({"bad", false, "broken"});
  CHECK_FALSE(r.all_passed());

  const auto csv_dir = fresh_dir("satfl_report_csv");
  CHECK(emit_report(r, csv_dir, ReportFormat::csv).size() == 2);
  CHECK(slurp(csv_dir / "values.csv") == "k\n");
  const std::string summary = slurp(csv_dir / "summary.txt");
  CHECK(summary.find("PASS ok: fine") != std::string::npos);
  CHECK(summary.find("FAIL bad: broken") != std::string::npos);
  CHECK(summary.find("result: 1/2 checks passed") != std::string::npos);

  const auto sum_dir = fresh_dir("satfl_report_summary");
  CHECK(emit_report(r, sum_dir, ReportFormat::summary).size() == 1);
  CHECK_FALSE(fs::exists(sum_dir / "values.csv"));
  fs::remove_all(csv_dir);
  fs::remove_all(sum_dir);
}

TEST_CASE("unknown kinds are rejected") {
  Scenario s = bundled("fig2");
  s.kind = "fig99";
  CHECK_THROWS_AS(run_scenario(s), ConfigError);
}

TEST_CASE("reruns write byte-identical files") {
  for (const char* name : {"fig2", "fig6", "equilibrium", "fl"}) {
    CAPTURE(name);
    const Scenario s = bundled(name);
    const auto a = fresh_dir(std::string("satfl_rerun_a_") + name);
    const auto b = fresh_dir(std::string("satfl_rerun_b_") + name);
    const auto files = emit_report(run_scenario(s), a, ReportFormat::csv);
    emit_report(run_scenario(s), b, ReportFormat::csv);
    for (const auto& f : files) CHECK(slurp(f) == slurp(b / f.filename()));
    fs::remove_all(a);
    fs::remove_all(b);
  }
}

TEST_CASE("a different seed changes generated instances") {
  Scenario s = bundled("fig3");
  s.instances = 2;
  s.sweep.counts = {5, 10};
  const ResultSet one = run_scenario(s);
  s.seed = 2;
  const ResultSet two = run_scenario(s);
  std::ostringstream x, y;
  write_csv(x, one.tables.front());
  write_csv(y, two.tables.front());
  CHECK(x.str() != y.str());
}

TEST_CASE("bundled equilibrium scenario verifies") {
  const ResultSet r = run_scenario(bundled("equilibrium"));
  CHECK(r.all_passed());
  REQUIRE(r.tables.size() == 2);
  CHECK(r.tables[0].rows.size() == 3);
}

TEST_CASE("baseline solvers report the budget check") {
  Scenario s = bundled("equilibrium");
  s.solver = "price_first";
  const ResultSet r = run_scenario(s);
  REQUIRE(r.checks.size() == 1);
  CHECK(r.checks[0].name == "budget_respected");
  CHECK(r.checks[0].passed);
}
