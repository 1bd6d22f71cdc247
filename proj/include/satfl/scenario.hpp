#pragma once

// Scenario files: INI sections of `key = value` lines, ';' comments.
//
//   [scenario]  name, kind, solver, seed, instances
//   [task]      T, t
//   [server]    tau, lambda, rho, beta, R_max, A_max, E_max
//   [nodes]     count, sigma, a, d, theta_min_offset, theta_span  (each "lo hi" or one value)
//               node0, node1, ... = "sigma a d theta_min theta_max"  (explicit nodes)
//   [sweep]     counts, budgets, a, d, rho, theta_offset, theta_points, sigmas, betas, ds
//   [maddpg]    training and environment settings
//   [fl]        federated run and synthetic data settings
//
// Lists are whitespace separated; "lo..hi" expands to every integer in between.
// Unknown sections and keys are errors. Values outside the reference ranges
// are kept and reported in `warnings`.

#include <cstdint>
#include <istream>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "satfl/flsim.hpp"
#include "satfl/game.hpp"
#include "satfl/maddpg.hpp"

namespace satfl {

struct Range {
  double lo = 0.0;
  double hi = 0.0;

  double draw(std::mt19937_64& rng) const;
};

/// Random candidate pools. theta_min = a t + offset, theta_max = theta_min + span.
struct NodeGenerator {
  int count = 25;
  Range sigma{10, 30};
  Range a{1, 8};  // drawn uniformly among the integers in range
  Range d{10, 80};
  Range theta_min_offset{0.5, 0.5};
  Range theta_span{10, 10};
};

struct SweepSettings {
  std::vector<int> counts{5, 10, 15, 20, 25};
  std::vector<double> budgets{50, 100, 150};
  std::vector<int> a{1, 4, 8};
  std::vector<double> d{10, 45, 80};
  std::vector<double> rho{3, 5, 7};
  Range theta_offset{0.05, 30};  // theta grid sits at a t + offset
  int theta_points = 200;
  std::vector<double> sigmas{1, 2, 3, 4, 5};
  std::vector<double> betas{1, 3, 5};
  std::vector<double> ds{20, 45, 80};
};

struct DrlSettings {
  MaddpgConfig train;
  int history = 3;
  int max_steps = 25;
  bool observe_posted_bid = true;
  std::optional<double> server_reward_scale;  // unset: the analytic optimum V*
  double node_reward_scale = 1.0;
};

struct FlSettings {
  int rounds = 30;
  int local_epochs = 1;
  double learning_rate = 0.5;
  double round_overhead = 1.0;
  Range compute_rate{20, 100};
  DatasetConfig data;
  std::string data_file;  // optional external training set, same format as read_dataset
};

struct Scenario {
  std::string name = "scenario";
  std::string kind;    // fig2 fig3 fig5 fig6 fig8 fig9 fig15 fl equilibrium oracle
  std::string solver = "analytic";  // analytic, maddpg or a baseline name
  std::uint64_t seed = 1;
  int instances = 1;

  TaskParamsd task;
  ServerParamsd server;
  Range rho{5, 5};  // drawn per instance when lo < hi

  std::vector<NodeParamsd> nodes;  // explicit nodes; otherwise `generator` is used
  NodeGenerator generator;

  SweepSettings sweep;
  DrlSettings drl;
  FlSettings fl;

  std::vector<std::string> warnings;
};

/// Recognised scenario kinds in a fixed order.
const std::vector<std::string>& scenario_kinds();

/// Parses and validates. `source` names the input in error messages.
Scenario parse_scenario(std::istream& is, const std::string& source = "scenario");
Scenario load_scenario(const std::string& path);

/// Applies "section.key=value" overrides on top of the file contents and
/// records each in `warnings`.
Scenario load_scenario(const std::string& path,
                       const std::vector<std::string>& overrides);

/// Seed for an independent random stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// The scenario's candidate pool for one instance: explicit nodes if given,
/// otherwise drawn from the generator. Also draws rho into `server`.
std::vector<NodeParamsd> instance_nodes(const Scenario& s, int instance, ServerParamsd& server);

}  // namespace satfl
