#pragma once

// Brute-force references for the test suites and the oracle command. Nothing
// here calls the solvers it is meant to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "satfl/game.hpp"

namespace satfl::oracle {

inline double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2 * h);
}

/// Follower answer found by scanning a theta grid.
inline double grid_best_theta(const NodeParamsd& node, double r, double step) {
  double best_theta = node.theta_min;
  double best = -std::numeric_limits<double>::infinity();
  for (double theta = node.theta_min; theta <= node.theta_max + 1e-12; theta += step) {
    const double u = node_utility(r, theta, node.sigma);
    if (u > best) {
      best = u;
      best_theta = theta;
    }
  }
  return best_theta;
}

struct GridEquilibrium {
  double r;
  double theta;
  double value;
};

/// Single-node Stackelberg solution by exhaustive search: for every r on the
/// grid the follower scans its theta grid, and the leader keeps the r whose
/// follower answer gives the largest server utility. Only r whose answer is
/// strictly above a t are admissible.
inline GridEquilibrium grid_stackelberg(const NodeParamsd& node, const ServerParamsd& server,
                                        const TaskParamsd& task, double r_lo, double r_hi,
                                        double r_step, double theta_step) {
  GridEquilibrium best{0, 0, -std::numeric_limits<double>::infinity()};
  for (double r = r_lo; r <= r_hi + 1e-12; r += r_step) {
    const double theta = grid_best_theta(node, r, theta_step);
    if (theta <= node.a * task.t) continue;
    const double a = theta_for_aoi_ceiling(node.a, task, server.A_max);
    if (theta < a) continue;
    const double v = server_node_utility(r, theta, node, server, task);
    if (v > best.value) best = {r, theta, v};
  }
  return best;
}

/// argmax of the reduced leader objective on an r grid.
inline double grid_unit_reward(const NodeParamsd& node, const ServerParamsd& server,
                               const TaskParamsd& task, double lo, double hi, double step) {
  double best_r = lo, best = -std::numeric_limits<double>::infinity();
  for (double r = lo; r <= hi + 1e-12; r += step) {
    const double v = reduced_server_utility(std::min(r, hi), node, server, task);
    if (v > best) {
      best = v;
      best_r = std::min(r, hi);
    }
  }
  return best_r;
}

/// Exhaustive search of the budget split for three nodes on a grid of the
/// first two bids; the third takes any remaining budget on its own grid.
inline std::vector<double> grid_allocation3(std::span<const NodeParamsd> nodes,
                                            const ServerParamsd& server, const TaskParamsd& task,
                                            double step) {
  std::vector<double> lo(3), hi(3);
  for (int i = 0; i < 3; ++i) {
    lo[i] = nodes[i].sigma / nodes[i].theta_max;
    hi[i] = nodes[i].sigma / nodes[i].theta_min;
  }
  auto v = [&](int i, double r) { return reduced_server_utility(r, nodes[i], server, task); };
  std::vector<double> best_r(3);
  double best = -std::numeric_limits<double>::infinity();
  for (double r0 = lo[0]; r0 <= hi[0]; r0 += step)
    for (double r1 = lo[1]; r1 <= hi[1]; r1 += step) {
      const double left = server.R_max - r0 - r1;
      if (left < lo[2]) break;
      const double v01 = v(0, r0) + v(1, r1);
      for (double r2 = lo[2]; r2 <= std::min(hi[2], left); r2 += step) {
        const double total = v01 + v(2, r2);
        if (total > best) {
          best = total;
          best_r = {r0, r1, r2};
        }
      }
    }
  return best_r;
}

/// Best subset of size n by enumerating all combinations.
inline std::vector<std::size_t> exhaustive_subset(std::span<const NodeParamsd> nodes,
                                                  std::size_t n, const ServerParamsd& server,
                                                  const TaskParamsd& task, double* value_out) {
  const std::size_t m = nodes.size();
  std::vector<std::size_t> best;
  double best_v = -std::numeric_limits<double>::infinity();
  for (unsigned mask = 0; mask < (1u << m); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != n) continue;
    std::vector<std::size_t> subset;
    for (std::size_t i = 0; i < m; ++i)
      if (mask & (1u << i)) subset.push_back(i);
    const double v = subset_value(nodes, subset, server, task);
    if (std::isfinite(v) &&
        (best.empty() || v > best_v + 1e-9 * std::max(1.0, std::abs(best_v)))) {
      best_v = v;
      best = subset;
    }
  }
  if (value_out) *value_out = best_v;
  return best;
}

}  // namespace satfl::oracle
