// Command-line front end for the experiment harness.
//
//   satfl equilibrium [--scenario equilibrium]
//   satfl sweep       [--scenario fig2|fig3|fig5|fig6]   (all four when omitted)
//   satfl train-drl   [--scenario fig15]
//   satfl fl-run      [--scenario fl|fig8|fig9]
//   satfl oracle      [--scenario oracle]
//
// Scenarios are file paths or names of the bundled files. Results go to
// <out>/<scenario name>/. Exit status: 0 when every check passed, 1 when a
// check failed, 2 on usage or configuration errors.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "satfl/error.hpp"
#include "satfl/harness.hpp"
#include "satfl/scenario.hpp"

#ifndef SATFL_SCENARIO_DIR
#define SATFL_SCENARIO_DIR "scenarios"
#endif

namespace fs = std::filesystem;

namespace {

struct Options {
  std::vector<std::string> scenarios;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string format = "csv";
  std::vector<std::string> overrides;
};

std::string resolve(const std::string& name) {
  if (fs::is_regular_file(name)) return name;
  const fs::path bundled = fs::path(SATFL_SCENARIO_DIR) / (name + ".ini");
  if (fs::is_regular_file(bundled)) return bundled.string();
  throw satfl::ConfigError("scenario", "no scenario file '" + name + "' and no bundled scenario of that name");
}

int run(const std::string& command, const std::vector<std::string>& kinds,
        const std::vector<std::string>& defaults, const Options& opt) {
  const auto format = satfl::parse_report_format(opt.format);
  std::vector<std::string> overrides = opt.overrides;
  if (opt.seed) overrides.push_back("scenario.seed=" + std::to_string(*opt.seed));

  bool all_passed = true;
  for (const auto& name : opt.scenarios.empty() ? defaults : opt.scenarios) {
    const satfl::Scenario s = satfl::load_scenario(resolve(name), overrides);
    if (std::find(kinds.begin(), kinds.end(), s.kind) == kinds.end())
      throw satfl::ConfigError("scenario.kind", "'" + s.kind + "' cannot be run by " + command);
    for (const auto& w : s.warnings) std::cerr << "warning: " << w << '\n';

    const auto start = std::chrono::steady_clock::now();
    const satfl::ResultSet results = satfl::run_scenario(s);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    satfl::emit_report(results, fs::path(opt.out) / s.name, format);
    satfl::write_summary(std::cout, results);
    std::fprintf(stderr, "%s: %.1f s, results in %s\n", s.name.c_str(), seconds,
                 (fs::path(opt.out) / s.name).string().c_str());
    all_passed = all_passed && results.all_passed();
  }
  return all_passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Incentive game, multi-agent learning and federated averaging experiments"};
  app.require_subcommand(1);
  Options opt;

  struct Command {
    const char* name;
    const char* help;
    std::vector<std::string> kinds;
    std::vector<std::string> defaults;
  };
  const std::vector<Command> commands{
      {"equilibrium", "Solve and verify one instance", {"equilibrium"}, {"equilibrium"}},
      {"sweep", "Parameter sweeps over the game", {"fig2", "fig3", "fig5", "fig6"}, {"fig2", "fig3", "fig5", "fig6"}},
      {"train-drl", "Train the multi-agent learner and compare with the equilibrium", {"fig15"}, {"fig15"}},
      {"fl-run", "Federated training driven by the incentive outcome", {"fl", "fig8", "fig9"}, {"fl"}},
      {"oracle", "Brute-force checks of solvers and gradients", {"oracle"}, {"oracle"}},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--scenario", opt.scenarios, "Scenario file or bundled scenario name (repeatable)");
    sub->add_option("--seed", opt.seed, "Seed overriding the scenario's");
    sub->add_option("--out", opt.out, "Output directory")->capture_default_str();
    sub->add_option("--format", opt.format, "csv or summary")
        ->check(CLI::IsMember({"csv", "summary"}))
        ->capture_default_str();
    sub->add_option("--set", opt.overrides, "Override a scenario value, section.key=value (repeatable)");
    subs[c.name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    for (const auto& c : commands)
      if (subs[c.name]->parsed()) return run(c.name, c.kinds, c.defaults, opt);
  } catch (const satfl::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
