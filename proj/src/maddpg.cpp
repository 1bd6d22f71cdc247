#include "satfl/maddpg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace satfl {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

// Decorrelates per-agent seeds drawn from one user seed.
std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Index node_count(const MaddpgSystem& sys) { return static_cast<Index>(sys.nodes.size()); }

// Applies the budget projection column by column to bids in env units.
MatrixXd project_columns(const MatrixXd& r, double R_max) {
  MatrixXd out = r;
  for (Index c = 0; c < r.cols(); ++c) {
    const double total = r.col(c).sum();
    if (total > R_max) out.col(c) *= R_max / total;
  }
  return out;
}

MatrixXd critic_input(const MatrixXd& state, const MatrixXd& actions) {
  MatrixXd x(state.rows() + actions.rows(), state.cols());
  x << state, actions;
  return x;
}

}  // namespace

ReplayBuffer::ReplayBuffer(std::size_t capacity) {
  if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be >= 1");
  data_.resize(capacity);
}

void ReplayBuffer::push(Transition t) {
  if (!t.rewards.allFinite()) throw std::invalid_argument("ReplayBuffer: non-finite reward");
  data_[head_] = std::move(t);
  head_ = (head_ + 1) % data_.size();
  size_ = std::min(size_ + 1, data_.size());
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= size_) throw std::out_of_range("ReplayBuffer::at");
  const std::size_t oldest = size_ < data_.size() ? 0 : head_;
  return data_[(oldest + i) % data_.size()];
}

Batch ReplayBuffer::sample(std::size_t B, std::mt19937_64& rng) const {
  if (B == 0 || B > size_)
    throw std::invalid_argument("ReplayBuffer::sample: need 1 <= B <= size (" +
                                std::to_string(size_) + ")");
  // Floyd's algorithm: B distinct indices in O(B).
  std::vector<std::size_t> picks;
  picks.reserve(B);
  std::unordered_set<std::size_t> seen;
  for (std::size_t j = size_ - B; j < size_; ++j) {
    std::uniform_int_distribution<std::size_t> u(0, j);
    const std::size_t k = u(rng);
    if (seen.insert(k).second) {
      picks.push_back(k);
    } else {
      seen.insert(j);
      picks.push_back(j);
    }
  }
  std::shuffle(picks.begin(), picks.end(), rng);

  const Transition& first = at(picks[0]);
  const auto b = static_cast<Index>(B);
  Batch batch;
  batch.state.resize(first.state.size(), b);
  batch.actions.resize(first.actions.size(), b);
  batch.rewards.resize(first.rewards.size(), b);
  batch.next_state.resize(first.next_state.size(), b);
  batch.terminal.resize(b);
  for (Index c = 0; c < b; ++c) {
    const Transition& t = at(picks[c]);
    batch.state.col(c) = t.state;
    batch.actions.col(c) = t.actions;
    batch.rewards.col(c) = t.rewards;
    batch.next_state.col(c) = t.next_state;
    batch.terminal(c) = t.terminal ? 1.0 : 0.0;
  }
  batch.indices = std::move(picks);
  return batch;
}

Batch ReplayBuffer::sample(std::size_t B, std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  return sample(B, rng);
}

AgentBundle make_agent(int actor_in, int actor_out, int critic_in, const MaddpgConfig& config,
                       double actor_lr, std::uint64_t seed) {
  if (!(config.gamma >= 0 && config.gamma < 1))
    throw std::invalid_argument("make_agent: gamma must lie in [0, 1)");
  AgentBundle a;
  const int h = config.hidden;
  a.actor = make_network({actor_in, h, h, actor_out}, config.hidden_activation, Activation::sigmoid,
                         mix(seed));
  a.critic = make_network({critic_in, h, h, 1}, config.hidden_activation, Activation::identity,
                          mix(seed + 1));
  a.target_actor = a.actor;
  a.target_critic = a.critic;
  a.actor_opt = make_optimizer(a.actor, actor_lr);
  a.critic_opt = make_optimizer(a.critic, config.critic_lr);
  a.gamma = config.gamma;
  a.soft_rate = config.soft_rate;
  a.saturation_penalty = config.saturation_penalty;
  return a;
}

RowVectorXd td_target(const RowVectorXd& reward, const MatrixXd& next_critic_input,
                      const Networkd& target_critic, double gamma, const RowVectorXd& terminal) {
  if (reward.size() != terminal.size())
    throw std::invalid_argument("td_target: reward and terminal lengths differ");
  if (gamma == 0.0) return reward;
  if (next_critic_input.cols() != reward.size())
    throw std::invalid_argument("td_target: batch size mismatch");
  const RowVectorXd q = forward(target_critic, next_critic_input).row(0);
  return reward.array() + gamma * (1.0 - terminal.array()) * q.array();
}

double critic_update(AgentBundle& agent, const MatrixXd& input, const RowVectorXd& y) {
  if (input.cols() == 0) throw std::invalid_argument("critic_update: empty batch");
  if (y.size() != input.cols()) throw std::invalid_argument("critic_update: target length");
  const auto cache = forward_cached(agent.critic, input);
  const RowVectorXd err = cache.output.row(0) - y;
  const double n = static_cast<double>(y.size());
  const double loss = err.squaredNorm() / n;
  const MatrixXd dloss = (2.0 / n) * err;
  optimizer_step(agent.critic_opt, agent.critic, backward(agent.critic, cache, dloss).grad);
  return loss;
}

double actor_update(AgentBundle& agent, const MatrixXd& actor_input, const MatrixXd& critic_context,
                    Index action_row) {
  if (actor_input.cols() == 0) throw std::invalid_argument("actor_update: empty batch");
  if (actor_input.cols() != critic_context.cols())
    throw std::invalid_argument("actor_update: batch size mismatch");
  const Index width = agent.actor.outputs();
  if (action_row < 0 || action_row + width > critic_context.rows())
    throw std::invalid_argument("actor_update: action rows outside the critic input");
  const auto actor_cache = forward_cached(agent.actor, actor_input);
  MatrixXd x = critic_context;
  x.middleRows(action_row, width) = actor_cache.output;
  const auto critic_cache = forward_cached(agent.critic, x);
  const double n = static_cast<double>(x.cols());
  const double objective = critic_cache.output.sum() / n;
  const MatrixXd dq_dx =
      backward(agent.critic, critic_cache, MatrixXd::Constant(1, x.cols(), 1.0 / n)).input;
  // Descend on -J.
  const MatrixXd grad_out = -dq_dx.middleRows(action_row, width) +
                           saturation_gradient(agent.actor, actor_cache.output, agent.saturation_penalty);
  optimizer_step(agent.actor_opt, agent.actor, backward(agent.actor, actor_cache, grad_out).grad);
  return objective;
}

MatrixXd saturation_gradient(const Networkd& actor, const MatrixXd& output, double penalty) {
  if (penalty == 0.0 || !actor.bounded()) return MatrixXd::Zero(output.rows(), output.cols());
  const double n = static_cast<double>(output.cols());
  MatrixXd g(output.rows(), output.cols());
  for (Index i = 0; i < output.rows(); ++i) {
    const double span = actor.head_hi(i) - actor.head_lo(i);
    for (Index c = 0; c < output.cols(); ++c) {
      const double s = std::clamp((output(i, c) - actor.head_lo(i)) / span, 1e-12, 1 - 1e-12);
      const double z = std::log(s / (1 - s));
      g(i, c) = 2 * penalty * z / (s * (1 - s) * span) / n;
    }
  }
  return g;
}

void soft_update_targets(AgentBundle& agent) {
  soft_update(agent.target_actor, agent.actor, agent.soft_rate);
  soft_update(agent.target_critic, agent.critic, agent.soft_rate);
}

MaddpgSystem make_system(const EnvConfig& env, const MaddpgConfig& config) {
  validate(env);
  MaddpgSystem sys;
  sys.env = env;
  sys.boxes = action_boxes(env);
  const int n = static_cast<int>(env.nodes.size());
  const int state = static_cast<int>(server_observation_size(env));
  const int critic_in = state + 2 * n;
  sys.server = make_agent(state, n, critic_in, config, config.server_actor_lr, mix(config.seed));
  for (int i = 0; i < n; ++i)
    sys.nodes.push_back(make_agent(static_cast<int>(node_observation_size(env)), 1, critic_in,
                                   config, config.actor_lr,
                                   mix(config.seed + 1000 + static_cast<std::uint64_t>(i))));
  return sys;
}

MatrixXd greedy_actions(const MaddpgSystem& sys, const MatrixXd& state, bool use_targets) {
  const Index n = node_count(sys);
  const Networkd& leader = use_targets ? sys.server.target_actor : sys.server.actor;
  const MatrixXd r = project_columns(
      (forward(leader, state).array().colwise() * sys.boxes.r_max.array()).matrix(),
      sys.env.server.R_max);
  MatrixXd out(2 * n, state.cols());
  for (Index i = 0; i < n; ++i) {
    out.row(i) = sys.boxes.r_max(i) > 0 ? RowVectorXd(r.row(i) / sys.boxes.r_max(i))
                                        : RowVectorXd::Zero(state.cols());
    const auto& node = sys.nodes[static_cast<std::size_t>(i)];
    const Networkd& follower = use_targets ? node.target_actor : node.actor;
    out.row(n + i) =
        forward(follower, node_view(sys.env, sys.boxes, static_cast<std::size_t>(i), state, r.row(i)));
  }
  return out;
}

double leader_actor_update(MaddpgSystem& sys, const Batch& batch) {
  const Index n = node_count(sys);
  const Index S = batch.state.rows();
  const Index B = batch.state.cols();
  const double R_max = sys.env.server.R_max;
  const VectorXd& r_max = sys.boxes.r_max;

  const auto lead = forward_cached(sys.server.actor, batch.state);
  const MatrixXd raw = lead.output.array().colwise() * r_max.array();
  const MatrixXd r = project_columns(raw, R_max);

  MatrixXd p(n, B);
  for (Index i = 0; i < n; ++i)
    p.row(i) = r_max(i) > 0 ? RowVectorXd(r.row(i) / r_max(i)) : RowVectorXd::Zero(B);

  std::vector<ForwardCache<double>> follow;
  MatrixXd periods(n, B);
  for (Index i = 0; i < n; ++i) {
    const auto& node = sys.nodes[static_cast<std::size_t>(i)];
    follow.push_back(forward_cached(
        node.actor, node_view(sys.env, sys.boxes, static_cast<std::size_t>(i), batch.state, r.row(i))));
    periods.row(i) = follow.back().output;
  }

  MatrixXd actions(2 * n, B);
  actions << p, periods;
  const auto q = forward_cached(sys.server.critic, critic_input(batch.state, actions));
  const double objective = q.output.sum() / static_cast<double>(B);
  const MatrixXd dq = backward(sys.server.critic, q,
                               MatrixXd::Constant(1, B, 1.0 / static_cast<double>(B)))
                          .input;

  // dJ/dp: direct term plus the follower response to the posted bid.
  MatrixXd dp = dq.middleRows(S, n);
  if (sys.env.observe_posted_bid) {
    for (Index i = 0; i < n; ++i) {
      const auto& node = sys.nodes[static_cast<std::size_t>(i)];
      const MatrixXd din = backward(node.actor, follow[static_cast<std::size_t>(i)],
                                    MatrixXd(dq.row(S + n + i)))
                               .input;
      dp.row(i) += din.bottomRows(1);
    }
  }

  // Back through p = P(u .* r_max) ./ r_max to the actor outputs u.
  MatrixXd du(n, B);
  for (Index c = 0; c < B; ++c) {
    VectorXd dr(n);
    for (Index i = 0; i < n; ++i) dr(i) = r_max(i) > 0 ? dp(i, c) / r_max(i) : 0.0;
    const double total = raw.col(c).sum();
    if (total > R_max) {
      // dP_i/draw_j = (R/total) (delta_ij - P_i/R)
      const double s = R_max / total;
      const double coupling = dr.dot(r.col(c)) / R_max;
      dr = s * (dr.array() - coupling).matrix();
    }
    du.col(c) = dr.cwiseProduct(r_max);
  }
  const MatrixXd grad_out =
      -du + saturation_gradient(sys.server.actor, lead.output, sys.server.saturation_penalty);
  optimizer_step(sys.server.actor_opt, sys.server.actor,
                 backward(sys.server.actor, lead, grad_out).grad);
  return objective;
}

UpdateStats update_all(MaddpgSystem& sys, const Batch& batch) {
  const Index n = node_count(sys);
  const Index S = batch.state.rows();
  UpdateStats stats{VectorXd(n + 1), VectorXd(n + 1)};

  const MatrixXd x = critic_input(batch.state, batch.actions);
  MatrixXd next_x;
  const bool bootstrap = sys.server.gamma > 0 ||
                         std::any_of(sys.nodes.begin(), sys.nodes.end(),
                                     [](const AgentBundle& a) { return a.gamma > 0; });
  if (bootstrap) next_x = critic_input(batch.next_state, greedy_actions(sys, batch.next_state, true));

  auto agent_at = [&](Index k) -> AgentBundle& {
    return k == 0 ? sys.server : sys.nodes[static_cast<std::size_t>(k - 1)];
  };
  for (Index k = 0; k <= n; ++k) {
    AgentBundle& a = agent_at(k);
    const RowVectorXd y = td_target(batch.rewards.row(k), next_x, a.target_critic, a.gamma,
                                    batch.terminal);
    stats.critic_loss(k) = critic_update(a, x, y);
  }

  stats.actor_objective(0) = leader_actor_update(sys, batch);
  for (Index i = 0; i < n; ++i) {
    const RowVectorXd posted = batch.actions.row(i) * sys.boxes.r_max(i);
    const MatrixXd obs = node_view(sys.env, sys.boxes, static_cast<std::size_t>(i), batch.state, posted);
    stats.actor_objective(i + 1) = actor_update(sys.nodes[static_cast<std::size_t>(i)], obs, x, S + n + i);
  }

  for (Index k = 0; k <= n; ++k) soft_update_targets(agent_at(k));
  return stats;
}

double noise_scale(const MaddpgConfig& config, int episode) {
  if (config.noise_decay_episodes <= 0) return config.noise_end;
  const double frac = std::min(1.0, static_cast<double>(episode) / config.noise_decay_episodes);
  return config.noise_start + (config.noise_end - config.noise_start) * frac;
}

namespace {

// Maps [0, 1] actions to env units and takes one step.
struct Played {
  StepResult result;
  VectorXd actions;
};

Played play(const MaddpgSystem& sys, EnvState& state, const VectorXd& obs, double noise,
            std::mt19937_64* rng) {
  const Index n = node_count(sys);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto jitter = [&](VectorXd u) {
    if (rng && noise > 0)
      for (Index i = 0; i < u.size(); ++i) u(i) += noise * gauss(*rng);
    return VectorXd(u.cwiseMax(0.0).cwiseMin(1.0));
  };
  const VectorXd u_r = jitter(forward(sys.server.actor, obs));
  std::vector<double> bids(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) bids[static_cast<std::size_t>(i)] = u_r(i) * sys.boxes.r_max(i);
  bids = budget_projection(bids, sys.env.server.R_max);

  std::vector<double> periods(static_cast<std::size_t>(n));
  VectorXd u_theta(n);
  for (Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const MatrixXd view = node_view(sys.env, sys.boxes, k, MatrixXd(obs),
                                    RowVectorXd::Constant(1, bids[k]));
    u_theta(i) = jitter(forward(sys.nodes[k].actor, VectorXd(view.col(0))))(0);
    const double lo = sys.boxes.theta_min(i), hi = sys.boxes.theta_max(i);
    periods[k] = std::min(hi, lo + u_theta(i) * (hi - lo));
  }

  Played out;
  out.result = step(sys.env, state, bids, periods);
  out.actions.resize(2 * n);
  for (Index i = 0; i < n; ++i) {
    out.actions(i) = sys.boxes.r_max(i) > 0
                         ? out.result.applied.r[static_cast<std::size_t>(i)] / sys.boxes.r_max(i)
                         : 0.0;
    out.actions(n + i) = u_theta(i);
  }
  return out;
}

}  // namespace

GreedyEval greedy_rollout(const MaddpgSystem& sys, int episode) {
  EnvState state = reset(sys.env, sys.env.seed);
  GreedyEval eval{episode, {}, {}, 0.0};
  for (int t = 0; t < sys.env.max_steps; ++t) {
    const Played p = play(sys, state, server_observation(sys.env, state), 0.0, nullptr);
    eval.bids = p.result.applied.r;
    eval.periods = p.result.applied.theta;
    eval.server_utility = p.result.server_utility;
  }
  return eval;
}

TrainingResult train(const MaddpgConfig& config, const EnvConfig& env) {
  if (config.episodes < 0) throw std::invalid_argument("train: episodes must be >= 0");
  if (config.batch < 1) throw std::invalid_argument("train: batch must be >= 1");
  TrainingResult out{{}, {}, make_system(env, config)};
  MaddpgSystem& sys = out.system;
  const Index n = node_count(sys);
  ReplayBuffer buffer(config.buffer_capacity);
  std::mt19937_64 noise_rng(mix(config.seed ^ 0x6e6f697365ULL));
  std::mt19937_64 sample_rng(mix(config.seed ^ 0x73616d706cULL));
  const std::size_t ready = static_cast<std::size_t>(std::max(config.batch, config.warmup));

  for (int episode = 0; episode < config.episodes; ++episode) {
    const double noise = noise_scale(config, episode);
    EnvState state = reset(env, env.seed + static_cast<std::uint64_t>(episode));
    VectorXd reward_sum = VectorXd::Zero(n + 1);
    VectorXd action_sum = VectorXd::Zero(2 * n);
    for (int t = 0; t < env.max_steps; ++t) {
      const VectorXd obs = server_observation(env, state);
      const Played p = play(sys, state, obs, noise, &noise_rng);
      Transition tr;
      tr.state = obs;
      tr.actions = p.actions;
      tr.rewards.resize(n + 1);
      tr.rewards << p.result.server_reward, p.result.node_rewards;
      tr.next_state = server_observation(env, state);
      tr.terminal = p.result.done && config.terminal_on_truncation;
      reward_sum += tr.rewards;
      for (Index i = 0; i < n; ++i) {
        action_sum(i) += p.result.applied.r[static_cast<std::size_t>(i)];
        action_sum(n + i) += p.result.applied.theta[static_cast<std::size_t>(i)];
      }
      buffer.push(std::move(tr));
      if (buffer.size() >= ready)
        for (int u = 0; u < config.updates_per_step; ++u)
          update_all(sys, buffer.sample(static_cast<std::size_t>(config.batch), sample_rng));
    }
    const double steps = env.max_steps;
    out.log.push_back({episode, "server", reward_sum(0) / steps, action_sum.head(n).mean() / steps,
                       noise});
    for (Index i = 0; i < n; ++i)
      out.log.push_back({episode, "node" + std::to_string(i), reward_sum(i + 1) / steps,
                         action_sum(n + i) / steps, noise});
    out.greedy.push_back(greedy_rollout(sys, episode));
  }
  return out;
}

void write_training_log_csv(std::ostream& os, const std::vector<LogRow>& rows) {
  os << "episode,agent,mean_reward,action_mean,noise_scale\n";
  const auto precision = os.precision(6);
  for (const auto& row : rows)
    os << row.episode << ',' << row.agent << ',' << row.mean_reward << ',' << row.action_mean << ','
       << row.noise_scale << '\n';
  os.precision(precision);
}

}  // namespace satfl
