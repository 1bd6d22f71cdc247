#pragma once

// Experiment runner: turns a scenario into result tables plus named
// pass/fail checks, and writes them out as CSV or a summary text.

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "satfl/scenario.hpp"

namespace satfl {

using Cell = std::variant<long long, double, std::string>;

struct Table {
  std::string name;  // file stem
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add(std::vector<Cell> row);
};

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ResultSet {
  std::string scenario;
  std::string kind;
  std::uint64_t seed = 0;
  std::vector<Table> tables;
  std::vector<Check> checks;
  std::vector<std::string> warnings;

  bool all_passed() const;
};

/// Runs one scenario. Deterministic given (scenario, seed).
ResultSet run_scenario(const Scenario& scenario);

// Individual experiments, each appending its tables and checks.
void run_satisfaction_sweep(const Scenario& s, ResultSet& out);    // fig2
void run_mechanism_comparison(const Scenario& s, ResultSet& out);  // fig3
void run_budget_sweep(const Scenario& s, ResultSet& out);          // fig5
void run_bid_cost_sweep(const Scenario& s, ResultSet& out);        // fig6
void run_fl_comparison(const Scenario& s, ResultSet& out);         // fig8, fig9
void run_drl(const Scenario& s, ResultSet& out);                   // fig15
void run_fl(const Scenario& s, ResultSet& out);
void run_equilibrium(const Scenario& s, ResultSet& out);
void run_oracles(const Scenario& s, ResultSet& out);

// Brute-force checks behind run_oracles, usable on their own.
Check check_equilibrium_oracle(std::uint64_t seed, Table* detail = nullptr);
Check check_best_response(std::uint64_t seed);
Check check_derivatives(std::uint64_t seed);
Check check_neural_gradients(std::uint64_t seed);
Check check_aoi_discordance();

/// Rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

/// %.6g with negative zero folded to 0.
std::string format_number(double v);
std::string format_cell(const Cell& c);

void write_csv(std::ostream& os, const Table& table);
void write_summary(std::ostream& os, const ResultSet& results);

enum class ReportFormat { csv, summary };
ReportFormat parse_report_format(const std::string& name);

/// csv: one <table>.csv per table plus summary.txt; summary: summary.txt only.
/// Returns the written paths. Throws std::runtime_error if the directory is unwritable.
std::vector<std::filesystem::path> emit_report(const ResultSet& results,
                                               const std::filesystem::path& dir,
                                               ReportFormat format);

}  // namespace satfl
