#pragma once

// Leader-follower incentive game between a rewarding server and caching nodes.
//
// Node i picks its update period theta_i to maximize
//   U_i = r_i ln(1/theta_i) - sigma_i/theta_i
// and the server picks unit rewards r_i to maximize
//   V = sum_i (beta G_i(theta_i) - r_i ln(1/theta_i))
// subject to per-node AoI/latency ceilings and sum_i r_i <= R_max.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "satfl/aoi_model.hpp"
#include "satfl/error.hpp"

namespace satfl {

template <typename Scalar>
struct TaskParams {
  Scalar T = Scalar(10);  // task duration
  Scalar t = Scalar(1);   // slot length
};

template <typename Scalar>
struct NodeParams {
  Scalar sigma = Scalar(1);  // unit cost of sustaining the update cycle
  int a = 1;                 // non-collection slots
  Scalar d = Scalar(10);     // samples per slot
  Scalar theta_min = Scalar(2);
  Scalar theta_max = Scalar(10);
};

template <typename Scalar>
struct ServerParams {
  Scalar tau = Scalar(1);
  Scalar lambda = Scalar(1);
  Scalar rho = Scalar(1);
  Scalar beta = Scalar(3);  // profit per unit satisfaction
  Scalar R_max = std::numeric_limits<Scalar>::infinity();
  Scalar A_max = std::numeric_limits<Scalar>::infinity();
  Scalar E_max = std::numeric_limits<Scalar>::infinity();

  SatisfactionParams<Scalar> satisfaction() const { return {tau, lambda, rho}; }
};

template <typename Scalar>
struct Derivatives {
  Scalar first;
  Scalar second;
};

using TaskParamsd = TaskParams<double>;
using NodeParamsd = NodeParams<double>;
using ServerParamsd = ServerParams<double>;

template <typename Scalar>
CycleParams<Scalar> cycle_at(const NodeParams<Scalar>& node, const TaskParams<Scalar>& task,
                             Scalar theta) {
  return {theta, node.a, task.t, task.T, node.d};
}

/// Throws std::invalid_argument unless sigma > 0 and a*t < theta_min < theta_max.
void validate(const NodeParamsd& node, const TaskParamsd& task);
void validate(const ServerParamsd& server);

// ---------------------------------------------------------------------------
// Closed forms

/// R = r ln(1/theta). Negative whenever theta > 1.
template <typename Scalar>
Scalar node_reward(Scalar r, Scalar theta) {
  if (!(theta > Scalar(0))) throw std::domain_error("node_reward: theta must be > 0");
  return r * std::log(Scalar(1) / theta);
}

/// C = sigma / theta.
template <typename Scalar>
Scalar node_cost(Scalar sigma, Scalar theta) {
  if (!(theta > Scalar(0))) throw std::domain_error("node_cost: theta must be > 0");
  return sigma / theta;
}

template <typename Scalar>
Scalar node_utility(Scalar r, Scalar theta, Scalar sigma) {
  return node_reward(r, theta) - node_cost(sigma, theta);
}

/// dU/dtheta = sigma/theta^2 - r/theta, d2U/dtheta2 = (r theta - 2 sigma)/theta^3.
template <typename Scalar>
Derivatives<Scalar> node_utility_derivatives(Scalar r, Scalar theta, Scalar sigma) {
  return {sigma / (theta * theta) - r / theta,
          (r * theta - Scalar(2) * sigma) / (theta * theta * theta)};
}

/// Follower best response: clamp(sigma/r, theta_min, theta_max); theta_max when r = 0.
template <typename Scalar>
Scalar best_response(const NodeParams<Scalar>& node, Scalar r) {
  if (!(r >= Scalar(0))) throw std::domain_error("best_response: r must be >= 0");
  if (r == Scalar(0)) return node.theta_max;
  const Scalar theta = node.sigma / r;
  return std::min(std::max(theta, node.theta_min), node.theta_max);
}

/// Per-node leader objective beta G(theta) - R(r, theta) for an arbitrary (r, theta).
template <typename Scalar>
Scalar server_node_utility(Scalar r, Scalar theta, const NodeParams<Scalar>& node,
                           const ServerParams<Scalar>& server, const TaskParams<Scalar>& task) {
  return server.beta * satisfaction(cycle_at(node, task, theta), server.satisfaction()) -
         node_reward(r, theta);
}

/// Leader objective for one node after substituting theta = sigma/r:
///   beta tau rho T d (sigma - a t r) / (sigma (t sigma/r + t^2 (a^2-a)/2))
///   - beta lambda ((sigma/r - a t)^3 + 3 t (sigma/r - a t)^2 + 2 a t^3) r / (2 t sigma)
///   - r ln(r/sigma)
/// Defined for 0 < r < sigma/(a t).
template <typename Scalar>
Scalar reduced_server_utility(Scalar r, const NodeParams<Scalar>& node,
                              const ServerParams<Scalar>& server,
                              const TaskParams<Scalar>& task) {
  const Scalar a = Scalar(node.a), t = task.t, s = node.sigma;
  if (!(r > Scalar(0)) || !(r < s / (a * t)))
    throw std::domain_error("reduced_server_utility: r outside (0, sigma/(a t))");
  const Scalar theta = s / r;
  const Scalar span = theta - a * t;
  const Scalar quality = server.beta * server.tau * server.rho * task.T * node.d *
                         (s - a * t * r) /
                         (s * (t * theta + t * t * (a * a - a) / Scalar(2)));
  const Scalar latency = server.beta * server.lambda *
                         (span * span * span + Scalar(3) * t * span * span +
                          Scalar(2) * a * t * t * t) *
                         r / (Scalar(2) * t * s);
  return quality - latency - r * std::log(r / s);
}

/// Closed-form first and second derivative of reduced_server_utility in r.
/// The second derivative is
///   -8 T a (a+1) rho d tau sigma beta / ((a^2-a) t r + 2 sigma)^3
///   - 3 lambda sigma beta Lambda / (t r^4) - 1/r,   Lambda = sigma - (a-1) t r,
/// which is negative on the whole domain since Lambda > 0 there.
template <typename Scalar>
Derivatives<Scalar> reduced_server_utility_derivatives(Scalar r, const NodeParams<Scalar>& node,
                                                       const ServerParams<Scalar>& server,
                                                       const TaskParams<Scalar>& task) {
  const Scalar a = Scalar(node.a), t = task.t, s = node.sigma;
  if (!(r > Scalar(0)) || !(r < s / (a * t)))
    throw std::domain_error("reduced_server_utility_derivatives: r outside (0, sigma/(a t))");
  const Scalar T = task.T, d = node.d, rho = server.rho, tau = server.tau,
               lambda = server.lambda, beta = server.beta;
  const Scalar mix = (a * a - a) * t * r + Scalar(2) * s;
  const Scalar first =
      -Scalar(2) * T * rho * d * tau * beta *
          ((a * a * a - a * a) * t * t * r * r + Scalar(4) * a * s * t * r - Scalar(2) * s * s) /
          (s * t * mix * mix) +
      lambda * beta *
          ((a * a * a - Scalar(3) * a * a - Scalar(2) * a) * t * t * t * r * r * r +
           (Scalar(3) - Scalar(3) * a) * s * s * t * r + Scalar(2) * s * s * s) /
          (Scalar(2) * s * t * r * r * r) -
      std::log(r / s) - Scalar(1);
  const Scalar shadow = s - (a - Scalar(1)) * t * r;
  const Scalar second =
      -Scalar(8) * T * a * (a + Scalar(1)) * rho * d * tau * s * beta / (mix * mix * mix) -
      Scalar(3) * lambda * s * beta * shadow / (t * r * r * r * r) - Scalar(1) / r;
  return {first, second};
}

// ---------------------------------------------------------------------------
// Strategies and solvers

struct StrategyProfile {
  std::vector<double> r;
  std::vector<double> theta;

  std::size_t size() const { return r.size(); }
};

/// Which constraint pins a node's strategy at the solution. Bit flags.
enum Binding : unsigned {
  kBindNone = 0,
  kBindBudget = 1u << 0,
  kBindAoi = 1u << 1,
  kBindLatency = 1u << 2,
  kBindThetaMin = 1u << 3,
  kBindThetaMax = 1u << 4,
};

std::string describe_binding(unsigned flags);

/// Leader-side feasible box for one node. theta in [theta_lo, theta_hi] keeps
/// the node inside its bounds and under the AoI/latency ceilings; through
/// theta = sigma/r that maps onto r in [r_lo, r_hi].
struct RewardInterval {
  double r_lo;
  double r_hi;
  double theta_lo;
  double theta_hi;
  unsigned lo_binding;  // constraint that sets r_lo (via theta_hi)
  unsigned hi_binding;  // constraint that sets r_hi (via theta_lo)
};

/// Throws InfeasibleError naming the constraint when the box is empty.
RewardInterval feasible_reward_interval(const NodeParamsd& node, const ServerParamsd& server,
                                        const TaskParamsd& task);

/// Smallest theta with AoI <= A_max (AoI decreases in theta). +inf if none.
double theta_for_aoi_ceiling(int a, const TaskParamsd& task, double A_max);

/// The theta range on which latency stays under E_max. Latency dips below t
/// just after theta = a t and then grows without bound, so the set is one
/// interval. Returns nullopt when empty.
std::optional<std::pair<double, double>> theta_range_for_latency_ceiling(int a,
                                                                         const TaskParamsd& task,
                                                                         double E_max);

struct UnitReward {
  double r;
  double value;
  RewardInterval interval;
  unsigned binding;
};

/// Maximizes the reduced leader objective for a single node over its feasible
/// box, ignoring the shared budget. Golden-section search locates the optimum;
/// a bisection on the closed-form derivative polishes interior solutions.
UnitReward optimize_unit_reward(const NodeParamsd& node, const ServerParamsd& server,
                                const TaskParamsd& task);

double server_utility(const StrategyProfile& profile, std::span<const NodeParamsd> nodes,
                      const ServerParamsd& server, const TaskParamsd& task);

struct Exclusion {
  std::size_t node;
  std::string constraint;
  std::string reason;
};

struct Allocation {
  StrategyProfile profile;         // one entry per input node
  std::vector<bool> active;        // false for excluded nodes (r = 0, theta = theta_max)
  std::vector<unsigned> binding;   // per node
  std::vector<Exclusion> excluded;
  double multiplier = 0.0;         // budget shadow price
  double utility = 0.0;            // server utility over active nodes
};

/// Splits R_max across nodes. When the unconstrained optima fit the budget
/// they are returned unchanged; otherwise every interior r_i satisfies
/// dV_i/dr_i = mu for a common mu found by bisection, and sum r_i = R_max.
/// Nodes with an empty feasible box are excluded and reported. Throws
/// InfeasibleError("budget") when even the smallest admissible bids overrun R_max.
Allocation allocate_budget(std::span<const NodeParamsd> nodes, const ServerParamsd& server,
                           const TaskParamsd& task);

struct Equilibrium {
  StrategyProfile profile;
  std::vector<double> node_utilities;
  double server_utility = 0.0;
  double kkt_multiplier = 0.0;
  std::vector<unsigned> binding_constraints;
  std::vector<bool> active;
  std::vector<Exclusion> excluded;
};

Equilibrium solve_equilibrium(std::span<const NodeParamsd> nodes, const ServerParamsd& server,
                              const TaskParamsd& task);

/// Independent route: projected diagonal-Newton ascent on the leader problem,
/// started from the given bids. Used to check that the equilibrium does not
/// depend on where the search begins.
Equilibrium solve_equilibrium_from(std::span<const NodeParamsd> nodes,
                                   const ServerParamsd& server, const TaskParamsd& task,
                                   std::span<const double> initial_bids);

struct Witness {
  enum class Kind { node, server };
  Kind kind;
  std::size_t node;        // deviating node (server witnesses: receiving node)
  std::size_t donor;       // server transfer witnesses: node giving up reward; == node otherwise
  double deviation;        // deviating theta (node) or new r for `node` (server)
  double gain;
  std::string describe() const;
};

struct Verdict {
  bool accepted = true;
  std::optional<Witness> witness;
};

struct VerifyGrid {
  double theta_step = 1e-2;
  double r_step = 1e-3;
};

/// Checks the two equilibrium conditions on grids: no node gains more than
/// eps by moving theta, and the server gains no more than eps by any single
/// bid change or pairwise reward transfer that keeps the budget and the
/// AoI/latency ceilings. Nodes answer server deviations with best_response.
Verdict verify_equilibrium(const Equilibrium& eq, std::span<const NodeParamsd> nodes,
                           const ServerParamsd& server, const TaskParamsd& task,
                           double eps = 1e-6, const VerifyGrid& grid = {});

struct Selection {
  std::vector<std::size_t> subset;  // indices into the candidate list, ascending
  Allocation allocation;            // over the subset, same order
  double utility = -std::numeric_limits<double>::infinity();
};

/// Chooses exactly n nodes: greedy by marginal server utility under
/// allocate_budget, then single-swap improvement until no swap helps.
/// Ties go to the lowest index.
Selection select_nodes(std::span<const NodeParamsd> nodes, std::size_t n,
                       const ServerParamsd& server, const TaskParamsd& task);

/// Server utility of a fixed subset under optimal budget split; -inf when the
/// subset cannot be funded.
double subset_value(std::span<const NodeParamsd> nodes, std::span<const std::size_t> subset,
                    const ServerParamsd& server, const TaskParamsd& task);

enum class BaselineKind { quality_first, price_first, random_pricing, random_subset };

BaselineKind parse_baseline(const std::string& name);
std::string to_string(BaselineKind kind);

/// Comparison schemes. Each picked node is first paid the floor of its
/// feasible box; if the floors alone overrun R_max the lowest-ranked nodes
/// drop out, bid 0, respond with theta_max and add nothing to the utility.
///  quality_first   top-n by model quality at each node's unconstrained optimum,
///                  topped up towards that optimum in rank order
///  price_first     top-n by ascending sigma, topped up the same way
///  random_pricing  the select_nodes subset with uniform random top-ups,
///                  scaled down together to fit the remaining budget
///  random_subset   uniform random n-subset priced by allocate_budget
Selection baseline_strategy(BaselineKind kind, std::span<const NodeParamsd> nodes,
                            std::size_t count, const ServerParamsd& server,
                            const TaskParamsd& task, std::uint64_t seed);

/// All nodes selected.
Selection baseline_strategy(BaselineKind kind, std::span<const NodeParamsd> nodes,
                            const ServerParamsd& server, const TaskParamsd& task,
                            std::uint64_t seed);

}  // namespace satfl
