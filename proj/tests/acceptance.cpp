// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// fails. Pass criterion numbers as arguments to run a subset.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "satfl/harness.hpp"
#include "satfl/scenario.hpp"

using namespace satfl;
namespace fs = std::filesystem;

namespace {

Scenario bundled(const std::string& name) {
  return load_scenario((fs::path(SATFL_SCENARIO_DIR) / (name + ".ini")).string());
}

/// Runs a bundled scenario and returns its check of the given name.
Check scenario_check(const std::string& scenario, const std::string& check) {
  const ResultSet r = run_scenario(bundled(scenario));
  for (const auto& c : r.checks)
    if (c.name == check) return c;
  return {check, false, "scenario " + scenario + " produced no such check"};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

/// Relative path -> contents for every file below dir.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  if (!fs::exists(dir)) return files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return files;
}

// Each CLI subcommand twice into fresh directories; output files, stdout and
// exit status must agree byte for byte. Overrides keep the runs short.
Check cli_determinism() {
  const std::vector<std::pair<std::string, std::string>> runs{
      {"equilibrium", ""},
      {"sweep", "--set scenario.instances=3"},
      {"train-drl", "--set maddpg.episodes=14"},
      {"fl-run", "--scenario fl --scenario fig8 --scenario fig9 --set fl.rounds=5"},
      {"oracle", ""},
      {"sweep", "--scenario fig3 --seed 7 --format summary --set scenario.instances=2"},
  };
  const fs::path root = fs::temp_directory_path() / "satfl_acceptance_determinism";
  fs::remove_all(root);
  int identical = 0, files = 0;
  std::string detail;
  for (std::size_t k = 0; k < runs.size(); ++k) {
    std::map<std::string, std::string> outputs[2];
    int status[2];
    for (int rep = 0; rep < 2; ++rep) {
      const fs::path dir = root / (std::to_string(k) + "_" + std::to_string(rep));
      const std::string cmd = std::string("\"") + SATFL_CLI + "\" " + runs[k].first + " " +
                              runs[k].second + " --out \"" + (dir / "out").string() + "\" > \"" +
                              (dir / "stdout.txt").string() + "\" 2> /dev/null";
      fs::create_directories(dir);
      status[rep] = std::system(cmd.c_str());
      outputs[rep] = snapshot(dir);
    }
    const bool same = status[0] == status[1] && outputs[0] == outputs[1] && outputs[0].size() > 1;
    identical += same;
    files += static_cast<int>(outputs[0].size());
    if (!same) detail += "; differs: " + runs[k].first + " " + runs[k].second;
  }
  fs::remove_all(root);
  return {"determinism", identical == static_cast<int>(runs.size()),
          std::to_string(identical) + "/" + std::to_string(runs.size()) +
              " repeated CLI invocations byte-identical (" + std::to_string(files) +
              " files including stdout)" + detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::uint64_t seed = bundled("oracle").seed;
  const std::vector<std::pair<std::string, std::function<Check()>>> criteria{
      {"equilibrium matches 2-D grid search",
       [&] { return check_equilibrium_oracle(derive_seed(seed, 31)); }},
      {"best response beats every grid period", [&] { return check_best_response(derive_seed(seed, 32)); }},
      {"closed-form derivatives", [&] { return check_derivatives(derive_seed(seed, 33)); }},
      {"satisfaction shape", [] { return scenario_check("fig2", "satisfaction_shape"); }},
      {"mechanism dominance", [] { return scenario_check("fig3", "mechanism_dominance"); }},
      {"utility rises then falls in n", [] { return scenario_check("fig5", "rise_then_fall"); }},
      {"bid falls with cost", [] { return scenario_check("fig6", "bid_cost_trend"); }},
      {"learned bids reach the equilibrium", [] { return scenario_check("fig15", "drl_convergence"); }},
      {"network gradients", [&] { return check_neural_gradients(derive_seed(seed, 34)); }},
      {"AoI oracle discordance", [] { return check_aoi_discordance(); }},
      {"federated averaging", [] { return scenario_check("fl", "fedavg"); }},
      {"CLI determinism", [] { return cli_determinism(); }},
  };

  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int passed = 0, run = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!wanted.empty() && !wanted.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Check c;
    try {
      c = criteria[k].second();
    } catch (const std::exception& e) {
      c = {criteria[k].first, false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s criterion %2d  %s (%.1f s): %s\n", c.passed ? "PASS" : "FAIL", id,
                criteria[k].first.c_str(), seconds, c.detail.c_str());
    std::fflush(stdout);
    passed += c.passed;
    ++run;
  }
  std::printf("acceptance: %d/%d criteria passed\n", passed, run);
  return passed == run ? 0 : 1;
}
