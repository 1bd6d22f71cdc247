#pragma once

// Multi-agent deterministic actor-critic for the repeated pricing game.
//
// Agent 0 is the server, agents 1..I the nodes. Every agent owns an actor, a
// centralized critic and their target copies. Critics see the global history
// vector (the server observation) plus the joint action, all in [0, 1] units:
// bids as r / r_max, periods as (theta - theta_min) / (theta_max - theta_min).
//
// The server moves first. Its actor gradient follows both the direct effect
// of a bid on its critic and the indirect effect through each node actor's
// response to the bid it was posted, which is what makes the learned point a
// leader-follower rather than a simultaneous-move equilibrium.

#include <Eigen/Dense>

#include <cstdint>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "satfl/env.hpp"
#include "satfl/neural.hpp"

namespace satfl {

struct MaddpgConfig {
  int episodes = 300;
  int batch = 64;
  std::size_t buffer_capacity = 100000;
  int warmup = 256;           // transitions stored before updates start
  int updates_per_step = 1;
  double gamma = 0.95;
  double soft_rate = 0.01;
  double actor_lr = 1e-3;          // node actors
  double server_actor_lr = 1e-4;   // slower leader keeps followers near their best response
  double critic_lr = 1e-3;
  double saturation_penalty = 1e-3; // weight on squared pre-sigmoid actor outputs
  int hidden = 64;
  Activation hidden_activation = Activation::tanh;
  double noise_start = 0.3;   // std of Gaussian noise on [0, 1] actions
  double noise_end = 0.02;
  int noise_decay_episodes = 200;
  bool terminal_on_truncation = false;
  std::uint64_t seed = 0;
};

/// One round of experience. `state`/`next_state` are server observations from
/// which every node observation is recovered together with the posted bid.
struct Transition {
  Eigen::VectorXd state;
  Eigen::VectorXd actions;  // bids then periods, scaled to [0, 1]
  Eigen::VectorXd rewards;  // server then nodes
  Eigen::VectorXd next_state;
  bool terminal = false;
};

struct Batch {
  Eigen::MatrixXd state;
  Eigen::MatrixXd actions;
  Eigen::MatrixXd rewards;
  Eigen::MatrixXd next_state;
  Eigen::RowVectorXd terminal;  // 1 where the row ends an episode as terminal
  std::vector<std::size_t> indices;
};

/// Bounded FIFO store of transitions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return data_.size(); }
  /// Stored transitions oldest first.
  const Transition& at(std::size_t i) const;

  /// B distinct transitions chosen uniformly; B == size() gives a permutation.
  Batch sample(std::size_t B, std::mt19937_64& rng) const;
  Batch sample(std::size_t B, std::uint64_t seed) const;

 private:
  std::vector<Transition> data_;
  std::size_t head_ = 0;  // next write position
  std::size_t size_ = 0;
};

struct AgentBundle {
  Networkd actor;
  Networkd critic;
  Networkd target_actor;
  Networkd target_critic;
  OptimizerState<double> actor_opt;
  OptimizerState<double> critic_opt;
  double gamma = 0.95;
  double soft_rate = 0.01;
  double saturation_penalty = 0.0;
};

AgentBundle make_agent(int actor_in, int actor_out, int critic_in, const MaddpgConfig& config,
                       double actor_lr, std::uint64_t seed);

/// Extra actor output gradient that keeps sigmoid heads out of saturation:
/// d/du of penalty * mean(z^2), z the pre-sigmoid value of output u.
Eigen::MatrixXd saturation_gradient(const Networkd& actor, const Eigen::MatrixXd& output,
                                    double penalty);

/// y = e + gamma (1 - terminal) Q'(critic_input)
Eigen::RowVectorXd td_target(const Eigen::RowVectorXd& reward, const Eigen::MatrixXd& next_critic_input,
                             const Networkd& target_critic, double gamma,
                             const Eigen::RowVectorXd& terminal);

/// One Adam step on the critic towards y. Returns the pre-update mean squared error.
double critic_update(AgentBundle& agent, const Eigen::MatrixXd& critic_input,
                     const Eigen::RowVectorXd& y);

/// One ascent step of mean Q(context with actor output at rows
/// [action_row, action_row + outputs)) on the actor only. Returns the
/// pre-update objective.
double actor_update(AgentBundle& agent, const Eigen::MatrixXd& actor_input,
                    const Eigen::MatrixXd& critic_context, Eigen::Index action_row);

/// Blends every target network toward its main network at the agent's rate.
void soft_update_targets(AgentBundle& agent);

struct MaddpgSystem {
  EnvConfig env;
  ActionBoxes boxes;
  AgentBundle server;
  std::vector<AgentBundle> nodes;
};

MaddpgSystem make_system(const EnvConfig& env, const MaddpgConfig& config);

/// Noise-free joint action for a batch of states: bids after budget
/// projection, then node periods, both in [0, 1] units.
Eigen::MatrixXd greedy_actions(const MaddpgSystem& sys, const Eigen::MatrixXd& state,
                               bool use_targets);

/// Leader update through the follower actors. Returns the pre-update objective.
double leader_actor_update(MaddpgSystem& sys, const Batch& batch);

/// One full learning step on a sampled batch: critics, actors, then targets.
struct UpdateStats {
  Eigen::VectorXd critic_loss;
  Eigen::VectorXd actor_objective;
};
UpdateStats update_all(MaddpgSystem& sys, const Batch& batch);

struct LogRow {
  int episode;
  std::string agent;
  double mean_reward;
  double action_mean;  // mean applied action in env units
  double noise_scale;
};

struct GreedyEval {
  int episode;
  std::vector<double> bids;
  std::vector<double> periods;
  double server_utility;
};

struct TrainingResult {
  std::vector<LogRow> log;
  std::vector<GreedyEval> greedy;  // noise-free rollout after every episode
  MaddpgSystem system;
};

double noise_scale(const MaddpgConfig& config, int episode);

/// Noise-free rollout of max_steps rounds from a reset state; reports the last round.
GreedyEval greedy_rollout(const MaddpgSystem& sys, int episode);

TrainingResult train(const MaddpgConfig& config, const EnvConfig& env);

/// Training log CSV: episode,agent,mean_reward,action_mean,noise_scale
void write_training_log_csv(std::ostream& os, const std::vector<LogRow>& rows);

}  // namespace satfl
