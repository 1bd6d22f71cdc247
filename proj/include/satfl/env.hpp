#pragma once

// Repeated leader-follower environment. Each round the server posts a bid
// vector, every node answers with an update period, and both sides are paid
// their game utilities. Agents see only a short history of past profiles.
//
// Observation layout (all entries scaled to [0, 1] by the action boxes):
//   server: for each of the last L rounds, oldest first: r_1..r_I, theta_1..theta_I
//   node i: for each of the last L rounds: r_i, theta_j for j != i;
//           then the bid posted to i this round if observe_posted_bid is set.

#include <Eigen/Dense>

#include <cstdint>
#include <deque>
#include <ostream>
#include <string>
#include <vector>

#include "satfl/game.hpp"

namespace satfl {

struct EnvConfig {
  std::vector<NodeParamsd> nodes;
  ServerParamsd server;
  TaskParamsd task;
  int history = 3;
  int max_steps = 25;
  double server_reward_scale = 1.0;
  double node_reward_scale = 1.0;
  bool observe_posted_bid = true;
  std::uint64_t seed = 0;
};

/// Per-node action boxes: bids in [0, r_max_i], periods in [theta_min_i, theta_max_i].
struct ActionBoxes {
  Eigen::VectorXd r_max;
  Eigen::VectorXd theta_min;
  Eigen::VectorXd theta_max;
};

struct EnvState {
  int round = 0;
  std::deque<StrategyProfile> history;  // oldest first, exactly L entries
  std::uint64_t seed = 0;
};

struct StepResult {
  StrategyProfile applied;          // after budget projection
  double server_reward = 0.0;       // normalized
  Eigen::VectorXd node_rewards;     // normalized
  double server_utility = 0.0;      // raw
  Eigen::VectorXd node_utilities;   // raw
  bool done = false;
};

void validate(const EnvConfig& config);

/// Bid ceiling sigma_i / theta_lo_i, theta_lo_i the smallest admissible period.
ActionBoxes action_boxes(const EnvConfig& config);

/// Fills the history with the midpoint profile of the action boxes.
EnvState reset(const EnvConfig& config, std::uint64_t seed);

Eigen::Index server_observation_size(const EnvConfig& config);
Eigen::Index node_observation_size(const EnvConfig& config);

Eigen::VectorXd server_observation(const EnvConfig& config, const EnvState& state);

/// Node i's view; `posted_bid` is used only when observe_posted_bid is set.
Eigen::VectorXd node_observation(const EnvConfig& config, const EnvState& state, std::size_t node,
                                 double posted_bid);

/// Rows of the server observation that node i may see, in node-observation order.
std::vector<Eigen::Index> node_view_rows(const EnvConfig& config, std::size_t node);

/// Node observations for a batch of server observations (columns) and the
/// bids posted to node i in those rounds.
Eigen::MatrixXd node_view(const EnvConfig& config, const ActionBoxes& boxes, std::size_t node,
                          const Eigen::MatrixXd& server_obs, const Eigen::RowVectorXd& posted);

/// Scales raw bids uniformly onto {sum r <= R_max} when they overrun it.
std::vector<double> budget_projection(const std::vector<double>& raw, double R_max);

/// Applies one round. Bids are projected onto the budget first.
StepResult step(const EnvConfig& config, EnvState& state, const std::vector<double>& bids,
                const std::vector<double>& periods);

struct TraceRow {
  int episode;
  int step;
  std::string agent;
  int target;  // node index the action concerns
  double action;
  double reward;
};

/// Episode trace CSV: episode,step,agent,target,action,reward
void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& rows);
void append_trace(std::vector<TraceRow>& rows, int episode, int step, const StepResult& result);

}  // namespace satfl
