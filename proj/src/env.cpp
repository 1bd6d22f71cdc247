#include "satfl/env.hpp"

#include <cmath>
#include <stdexcept>

#include "satfl/error.hpp"

namespace satfl {

void validate(const EnvConfig& config) {
  if (config.nodes.empty()) throw ConfigError("nodes", "environment needs at least one node");
  if (config.history < 1) throw ConfigError("history", "history length must be >= 1");
  if (config.max_steps < 1) throw ConfigError("max_steps", "max_steps must be >= 1");
  if (!(config.server_reward_scale > 0) || !std::isfinite(config.server_reward_scale))
    throw ConfigError("server_reward_scale", "reward scale must be positive and finite");
  if (!(config.node_reward_scale > 0) || !std::isfinite(config.node_reward_scale))
    throw ConfigError("node_reward_scale", "reward scale must be positive and finite");
}

ActionBoxes action_boxes(const EnvConfig& config) {
  const auto n = static_cast<Eigen::Index>(config.nodes.size());
  ActionBoxes boxes{Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& node = config.nodes[i];
    const RewardInterval box = feasible_reward_interval(node, config.server, config.task);
    boxes.r_max(i) = box.r_hi;
    boxes.theta_min(i) = node.theta_min;
    boxes.theta_max(i) = node.theta_max;
  }
  return boxes;
}

EnvState reset(const EnvConfig& config, std::uint64_t seed) {
  validate(config);
  const ActionBoxes boxes = action_boxes(config);
  StrategyProfile mid;
  for (Eigen::Index i = 0; i < boxes.r_max.size(); ++i) {
    mid.r.push_back(0.5 * boxes.r_max(i));
    mid.theta.push_back(0.5 * (boxes.theta_min(i) + boxes.theta_max(i)));
  }
  // Midpoint bids may overrun a tight budget; the warm-up obeys the same projection.
  mid.r = budget_projection(mid.r, config.server.R_max);
  EnvState state;
  state.seed = seed;
  state.history.assign(config.history, mid);
  return state;
}

Eigen::Index server_observation_size(const EnvConfig& config) {
  return 2 * static_cast<Eigen::Index>(config.nodes.size()) * config.history;
}

Eigen::Index node_observation_size(const EnvConfig& config) {
  return static_cast<Eigen::Index>(config.nodes.size()) * config.history +
         (config.observe_posted_bid ? 1 : 0);
}

Eigen::VectorXd server_observation(const EnvConfig& config, const EnvState& state) {
  const ActionBoxes boxes = action_boxes(config);
  const auto n = static_cast<Eigen::Index>(config.nodes.size());
  Eigen::VectorXd obs(server_observation_size(config));
  Eigen::Index k = 0;
  for (const auto& profile : state.history) {
    for (Eigen::Index i = 0; i < n; ++i)
      obs(k++) = boxes.r_max(i) > 0 ? profile.r[i] / boxes.r_max(i) : 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double span = boxes.theta_max(i) - boxes.theta_min(i);
      obs(k++) = span > 0 ? (profile.theta[i] - boxes.theta_min(i)) / span : 0.0;
    }
  }
  return obs;
}

std::vector<Eigen::Index> node_view_rows(const EnvConfig& config, std::size_t node) {
  const auto n = static_cast<Eigen::Index>(config.nodes.size());
  const auto me = static_cast<Eigen::Index>(node);
  std::vector<Eigen::Index> rows;
  for (Eigen::Index round = 0; round < config.history; ++round) {
    const Eigen::Index base = round * 2 * n;
    rows.push_back(base + me);
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != me) rows.push_back(base + n + j);
  }
  return rows;
}

Eigen::MatrixXd node_view(const EnvConfig& config, const ActionBoxes& boxes, std::size_t node,
                          const Eigen::MatrixXd& server_obs, const Eigen::RowVectorXd& posted) {
  if (node >= config.nodes.size()) throw std::out_of_range("node_view: node index");
  const auto rows = node_view_rows(config, node);
  Eigen::MatrixXd out(node_observation_size(config), server_obs.cols());
  out.topRows(static_cast<Eigen::Index>(rows.size())) = server_obs(rows, Eigen::all);
  if (config.observe_posted_bid) {
    const double scale = boxes.r_max(node) > 0 ? 1.0 / boxes.r_max(node) : 0.0;
    out.bottomRows(1) = posted * scale;
  }
  return out;
}

Eigen::VectorXd node_observation(const EnvConfig& config, const EnvState& state, std::size_t node,
                                 double posted_bid) {
  const Eigen::MatrixXd obs = server_observation(config, state);
  return node_view(config, action_boxes(config), node, obs,
                   Eigen::RowVectorXd::Constant(1, posted_bid))
      .col(0);
}

std::vector<double> budget_projection(const std::vector<double>& raw, double R_max) {
  double total = 0.0;
  for (double r : raw) {
    if (!(r >= 0)) throw std::invalid_argument("budget_projection: bids must be >= 0");
    total += r;
  }
  if (total <= R_max) return raw;
  std::vector<double> out(raw);
  const double scale = R_max / total;
  for (double& r : out) r *= scale;
  return out;
}

StepResult step(const EnvConfig& config, EnvState& state, const std::vector<double>& bids,
                const std::vector<double>& periods) {
  const std::size_t n = config.nodes.size();
  if (bids.size() != n || periods.size() != n)
    throw std::invalid_argument("step: one bid and one period per node required");
  const ActionBoxes boxes = action_boxes(config);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(bids[i]) || !std::isfinite(periods[i]))
      throw std::invalid_argument("step: non-finite action for node " + std::to_string(i));
    const auto k = static_cast<Eigen::Index>(i);
    if (bids[i] < 0 || bids[i] > boxes.r_max(k) * (1 + 1e-12))
      throw std::invalid_argument("step: bid outside [0, r_max] for node " + std::to_string(i));
    if (periods[i] < boxes.theta_min(k) * (1 - 1e-12) || periods[i] > boxes.theta_max(k) * (1 + 1e-12))
      throw std::invalid_argument("step: period outside its box for node " + std::to_string(i));
  }

  StepResult out;
  out.applied.r = budget_projection(bids, config.server.R_max);
  out.applied.theta = periods;
  out.server_utility = server_utility(out.applied, config.nodes, config.server, config.task);
  out.server_reward = out.server_utility / config.server_reward_scale;
  out.node_utilities.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    out.node_utilities(static_cast<Eigen::Index>(i)) =
        node_utility(out.applied.r[i], out.applied.theta[i], config.nodes[i].sigma);
  out.node_rewards = out.node_utilities / config.node_reward_scale;

  state.history.pop_front();
  state.history.push_back(out.applied);
  ++state.round;
  out.done = state.round >= config.max_steps;
  return out;
}

void append_trace(std::vector<TraceRow>& rows, int episode, int step, const StepResult& result) {
  const int n = static_cast<int>(result.applied.r.size());
  for (int i = 0; i < n; ++i)
    rows.push_back({episode, step, "server", i, result.applied.r[i], result.server_reward});
  for (int i = 0; i < n; ++i)
    rows.push_back({episode, step, "node" + std::to_string(i), i, result.applied.theta[i],
                    result.node_rewards(i)});
}

void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& rows) {
  os << "episode,step,agent,target,action,reward\n";
  const auto flags = os.flags();
  const auto precision = os.precision(6);
  for (const auto& row : rows)
    os << row.episode << ',' << row.step << ',' << row.agent << ',' << row.target << ','
       << row.action << ',' << row.reward << '\n';
  os.flags(flags);
  os.precision(precision);
}

}  // namespace satfl
