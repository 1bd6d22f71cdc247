#include "satfl/game.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "satfl/golden_section.hpp"

namespace satfl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double latency_of_span(double u, int a, double t) {
  const double as = a;
  return (u * u * u + 3.0 * t * u * u + 2.0 * as * t * t * t) / (2.0 * t * (u + as * t));
}

// Bisection for a sign change of f on [lo, hi]; f(lo) and f(hi) must differ in sign.
template <typename F>
double bisect(F&& f, double lo, double hi) {
  double flo = f(lo);
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double fm = f(mid);
    if ((fm < 0) == (flo < 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

struct NodeModel {
  std::size_t index;
  NodeParamsd node;
  RewardInterval box;
  double r_star;
  unsigned star_binding;
};

double marginal(const NodeModel& m, double r, const ServerParamsd& server,
                const TaskParamsd& task) {
  return reduced_server_utility_derivatives(r, m.node, server, task).first;
}

// r maximizing V_i(r) - mu r on the node's box. V_i is concave so the
// marginal is decreasing; safeguarded Newton inside a shrinking bracket.
double reward_at_price(const NodeModel& m, double mu, const ServerParamsd& server,
                       const TaskParamsd& task) {
  double lo = m.box.r_lo, hi = m.box.r_hi;
  if (marginal(m, lo, server, task) <= mu) return lo;
  if (marginal(m, hi, server, task) >= mu) return hi;
  double r = std::clamp(m.r_star, lo, hi);
  if (r <= lo || r >= hi) r = 0.5 * (lo + hi);
  for (int i = 0; i < 200; ++i) {
    const auto dv = reduced_server_utility_derivatives(r, m.node, server, task);
    const double g = dv.first - mu;
    if (g > 0)
      lo = r;
    else if (g < 0)
      hi = r;
    else
      return r;
    double next = r - g / dv.second;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - r) <= 1e-15 * std::max(1.0, r) || hi - lo <= 1e-15 * std::max(1.0, r))
      return next;
    r = next;
  }
  return r;
}

NodeModel model_node(std::size_t index, const NodeParamsd& node, const ServerParamsd& server,
                     const TaskParamsd& task) {
  const UnitReward best = optimize_unit_reward(node, server, task);
  return {index, node, best.interval, best.r, best.binding};
}

struct WaterFill {
  std::vector<double> r;
  double mu = 0.0;
};

WaterFill water_fill(std::span<const NodeModel> models, const ServerParamsd& server,
                     const TaskParamsd& task) {
  WaterFill out;
  out.r.reserve(models.size());
  double total = 0.0, floor_total = 0.0;
  for (const auto& m : models) {
    out.r.push_back(m.r_star);
    total += m.r_star;
    floor_total += m.box.r_lo;
  }
  if (total <= server.R_max) return out;
  if (floor_total > server.R_max)
    throw InfeasibleError("budget", "budget: minimum admissible bids sum to " +
                                        std::to_string(floor_total) + " > R_max");

  auto spend = [&](double mu) {
    double s = 0.0;
    for (const auto& m : models) s += reward_at_price(m, mu, server, task);
    return s - server.R_max;
  };
  double mu_lo = 0.0, mu_hi = 0.0;
  for (const auto& m : models) mu_hi = std::max(mu_hi, marginal(m, m.box.r_lo, server, task));
  mu_hi = std::max(mu_hi, 0.0) + 1.0;
  double f_lo = spend(mu_lo), f_hi = spend(mu_hi);
  // Illinois regula falsi on the decreasing spend curve.
  int side = 0;
  const double tol = 1e-11 * std::max(1.0, server.R_max);
  for (int i = 0; i < 300; ++i) {
    double mu = (mu_lo * f_hi - mu_hi * f_lo) / (f_hi - f_lo);
    if (!(mu > mu_lo && mu < mu_hi)) mu = 0.5 * (mu_lo + mu_hi);
    const double f = spend(mu);
    if (f > 0) {
      mu_lo = mu;
      f_lo = f;
      if (side == -1) f_hi *= 0.5;
      side = -1;
    } else {
      mu_hi = mu;
      f_hi = f;
      if (side == 1) f_lo *= 0.5;
      side = 1;
    }
    if ((f <= 0 && f > -tol) || mu_hi - mu_lo <= 1e-15 * std::max(1.0, mu_hi)) break;
  }
  // The upper price keeps spending at or below the budget.
  out.mu = mu_hi;
  for (std::size_t i = 0; i < models.size(); ++i)
    out.r[i] = reward_at_price(models[i], mu_hi, server, task);
  return out;
}

Allocation assemble(std::span<const NodeParamsd> nodes, std::span<const NodeModel> models,
                    const WaterFill& fill, std::vector<Exclusion> excluded,
                    const ServerParamsd& server, const TaskParamsd& task) {
  Allocation out;
  const std::size_t n = nodes.size();
  out.profile.r.assign(n, 0.0);
  out.profile.theta.resize(n);
  out.active.assign(n, false);
  out.binding.assign(n, kBindNone);
  for (std::size_t i = 0; i < n; ++i) out.profile.theta[i] = nodes[i].theta_max;
  out.excluded = std::move(excluded);
  out.multiplier = fill.mu;
  for (std::size_t k = 0; k < models.size(); ++k) {
    const auto& m = models[k];
    const double r = fill.r[k];
    out.profile.r[m.index] = r;
    out.profile.theta[m.index] = best_response(m.node, r);
    out.active[m.index] = true;
    unsigned b = kBindNone;
    if (r <= m.box.r_lo) b |= m.box.lo_binding;
    if (r >= m.box.r_hi) b |= m.box.hi_binding;
    if (fill.mu > 0) b |= kBindBudget;
    out.binding[m.index] = b;
    out.utility += server_node_utility(r, out.profile.theta[m.index], m.node, server, task);
  }
  return out;
}

std::vector<NodeModel> model_nodes(std::span<const NodeParamsd> nodes, const ServerParamsd& server,
                                   const TaskParamsd& task, std::vector<Exclusion>& excluded) {
  std::vector<NodeModel> models;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    validate(nodes[i], task);
    try {
      models.push_back(model_node(i, nodes[i], server, task));
    } catch (const InfeasibleError& e) {
      excluded.push_back({i, e.constraint(), e.what()});
    }
  }
  return models;
}

Equilibrium to_equilibrium(const Allocation& alloc, std::span<const NodeParamsd> nodes) {
  Equilibrium eq;
  eq.profile = alloc.profile;
  eq.server_utility = alloc.utility;
  eq.kkt_multiplier = alloc.multiplier;
  eq.binding_constraints = alloc.binding;
  eq.active = alloc.active;
  eq.excluded = alloc.excluded;
  eq.node_utilities.assign(nodes.size(), 0.0);
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (alloc.active[i])
      eq.node_utilities[i] = node_utility(eq.profile.r[i], eq.profile.theta[i], nodes[i].sigma);
  return eq;
}

}  // namespace

void validate(const NodeParamsd& node, const TaskParamsd& task) {
  if (!(task.t > 0) || !(task.T > 0)) throw std::invalid_argument("task: T and t must be > 0");
  if (!(node.sigma > 0) || !std::isfinite(node.sigma))
    throw std::invalid_argument("node: sigma must be > 0");
  if (node.a < 1) throw std::invalid_argument("node: a must be >= 1");
  if (!(node.d > 0)) throw std::invalid_argument("node: d must be > 0");
  if (!(node.theta_min - node.a * task.t >= kMinCollectionSpan))
    throw std::invalid_argument("node: theta_min must exceed a*t");
  if (!(node.theta_max > node.theta_min) || !std::isfinite(node.theta_max))
    throw std::invalid_argument("node: theta_max must exceed theta_min");
}

void validate(const ServerParamsd& server) {
  validate(server.satisfaction());
  if (!(server.beta >= 0)) throw std::invalid_argument("server: beta must be >= 0");
  if (!(server.R_max > 0)) throw std::invalid_argument("server: R_max must be > 0");
  if (!(server.A_max > 0) || !(server.E_max > 0))
    throw std::invalid_argument("server: A_max and E_max must be > 0");
}

std::string describe_binding(unsigned flags) {
  if (flags == kBindNone) return "none";
  static const std::pair<unsigned, const char*> names[] = {
      {kBindBudget, "budget"},       {kBindAoi, "aoi"},           {kBindLatency, "latency"},
      {kBindThetaMin, "theta_min"}, {kBindThetaMax, "theta_max"}};
  std::string out;
  for (const auto& [bit, name] : names) {
    if (!(flags & bit)) continue;
    if (!out.empty()) out += '+';
    out += name;
  }
  return out;
}

double theta_for_aoi_ceiling(int a, const TaskParamsd& task, double A_max) {
  const double t = task.t;
  if (!(A_max > t)) return kInf;
  // AoI = t + t^2 a (a+1) / 2 / (theta - a t)
  const double k = t * t * a * (a + 1) / 2.0;
  if (std::isinf(A_max)) return a * t;
  return a * t + k / (A_max - t);
}

std::optional<std::pair<double, double>> theta_range_for_latency_ceiling(int a,
                                                                         const TaskParamsd& task,
                                                                         double E_max) {
  const double t = task.t;
  const double at = a * t;
  // Stationary point of latency in u = theta - a t.
  auto slope = [&](double u) {
    return 2 * u * u * u + 3.0 * (a + 1) * t * u * u + 6.0 * a * t * t * u - 2.0 * a * t * t * t;
  };
  const double u0 = bisect(slope, 0.0, t);
  const double e_min = latency_of_span(u0, a, t);
  if (E_max < e_min) return std::nullopt;
  double left = at;
  if (E_max < t) left = at + bisect([&](double u) { return latency_of_span(u, a, t) - E_max; }, 0.0, u0);
  if (std::isinf(E_max)) return std::make_pair(left, kInf);
  double hi = std::max(u0, t);
  while (latency_of_span(hi, a, t) <= E_max) hi *= 2.0;
  const double right =
      at + bisect([&](double u) { return latency_of_span(u, a, t) - E_max; }, u0, hi);
  return std::make_pair(left, right);
}

RewardInterval feasible_reward_interval(const NodeParamsd& node, const ServerParamsd& server,
                                        const TaskParamsd& task) {
  validate(node, task);
  double theta_lo = node.theta_min, theta_hi = node.theta_max;
  unsigned hi_binding = kBindThetaMin, lo_binding = kBindThetaMax;

  const double theta_aoi = theta_for_aoi_ceiling(node.a, task, server.A_max);
  const bool aoi_ok = theta_aoi <= node.theta_max;
  const auto latency = theta_range_for_latency_ceiling(node.a, task, server.E_max);
  const bool latency_ok =
      latency && latency->second >= node.theta_min && latency->first <= node.theta_max;
  if (!aoi_ok && !latency_ok)
    throw InfeasibleError("aoi+latency", "AoI and latency ceilings both unreachable");
  if (!aoi_ok)
    throw InfeasibleError("aoi", "AoI ceiling " + std::to_string(server.A_max) +
                                     " unreachable within theta bounds");
  if (!latency_ok)
    throw InfeasibleError("latency", "latency ceiling " + std::to_string(server.E_max) +
                                         " unreachable within theta bounds");

  if (theta_aoi > theta_lo) {
    theta_lo = theta_aoi;
    hi_binding = kBindAoi;
  }
  if (latency->first > theta_lo) {
    theta_lo = latency->first;
    hi_binding = kBindLatency;
  }
  if (latency->second < theta_hi) {
    theta_hi = latency->second;
    lo_binding = kBindLatency;
  }
  if (theta_lo > theta_hi)
    throw InfeasibleError("aoi+latency", "AoI and latency ceilings leave no common theta");
  return {node.sigma / theta_hi, node.sigma / theta_lo, theta_lo, theta_hi, lo_binding,
          hi_binding};
}

UnitReward optimize_unit_reward(const NodeParamsd& node, const ServerParamsd& server,
                                const TaskParamsd& task) {
  const RewardInterval box = feasible_reward_interval(node, server, task);
  auto objective = [&](double r) { return reduced_server_utility(r, node, server, task); };
  const auto coarse = golden_section_maximize(objective, box.r_lo, box.r_hi, 1e-12);

  auto slope = [&](double r) {
    return reduced_server_utility_derivatives(r, node, server, task).first;
  };
  double r = coarse.x;
  unsigned binding = kBindNone;
  if (slope(box.r_lo) <= 0) {
    r = box.r_lo;
    binding = box.lo_binding;
  } else if (slope(box.r_hi) >= 0) {
    r = box.r_hi;
    binding = box.hi_binding;
  } else {
    // Polish on the derivative, starting from the golden-section bracket.
    const double w = 1e-9 * std::max(1.0, std::abs(r));
    double lo = std::max(box.r_lo, r - w), hi = std::min(box.r_hi, r + w);
    if (!(slope(lo) > 0 && slope(hi) < 0)) {
      lo = box.r_lo;
      hi = box.r_hi;
    }
    r = bisect(slope, lo, hi);
  }
  return {r, objective(r), box, binding};
}

double server_utility(const StrategyProfile& profile, std::span<const NodeParamsd> nodes,
                      const ServerParamsd& server, const TaskParamsd& task) {
  if (profile.r.size() != nodes.size() || profile.theta.size() != nodes.size())
    throw std::invalid_argument("server_utility: profile length must match node count");
  double v = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    v += server_node_utility(profile.r[i], profile.theta[i], nodes[i], server, task);
  return v;
}

Allocation allocate_budget(std::span<const NodeParamsd> nodes, const ServerParamsd& server,
                           const TaskParamsd& task) {
  validate(server);
  std::vector<Exclusion> excluded;
  const auto models = model_nodes(nodes, server, task, excluded);
  const WaterFill fill = water_fill(models, server, task);
  return assemble(nodes, models, fill, std::move(excluded), server, task);
}

Equilibrium solve_equilibrium(std::span<const NodeParamsd> nodes, const ServerParamsd& server,
                              const TaskParamsd& task) {
  return to_equilibrium(allocate_budget(nodes, server, task), nodes);
}

Equilibrium solve_equilibrium_from(std::span<const NodeParamsd> nodes,
                                   const ServerParamsd& server, const TaskParamsd& task,
                                   std::span<const double> initial_bids) {
  validate(server);
  if (initial_bids.size() != nodes.size())
    throw std::invalid_argument("solve_equilibrium_from: one initial bid per node required");
  std::vector<Exclusion> excluded;
  std::vector<NodeModel> models;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    validate(nodes[i], task);
    try {
      const RewardInterval box = feasible_reward_interval(nodes[i], server, task);
      models.push_back({i, nodes[i], box, 0.0, kBindNone});
    } catch (const InfeasibleError& e) {
      excluded.push_back({i, e.constraint(), e.what()});
    }
  }
  const std::size_t m = models.size();
  double floor_total = 0.0;
  for (const auto& nm : models) floor_total += nm.box.r_lo;
  if (floor_total > server.R_max)
    throw InfeasibleError("budget", "budget: minimum admissible bids exceed R_max");

  // Projection onto box ∩ {sum r <= R_max} in the metric diag(h).
  auto project = [&](const std::vector<double>& y, const std::vector<double>& h, double& nu) {
    std::vector<double> p(m);
    auto fill = [&](double v) {
      double s = 0.0;
      for (std::size_t k = 0; k < m; ++k) {
        p[k] = std::clamp(y[k] - v / h[k], models[k].box.r_lo, models[k].box.r_hi);
        s += p[k];
      }
      return s;
    };
    nu = 0.0;
    if (fill(0.0) <= server.R_max) return p;
    double lo = 0.0, hi = 0.0;
    for (std::size_t k = 0; k < m; ++k)
      hi = std::max(hi, h[k] * (y[k] - models[k].box.r_lo));
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      if (fill(mid) > server.R_max)
        lo = mid;
      else
        hi = mid;
    }
    nu = hi;
    fill(hi);
    return p;
  };
  auto objective = [&](const std::vector<double>& r) {
    double v = 0.0;
    for (std::size_t k = 0; k < m; ++k)
      v += reduced_server_utility(r[k], models[k].node, server, task);
    return v;
  };

  std::vector<double> r(m), g(m), h(m), y(m);
  for (std::size_t k = 0; k < m; ++k) {
    r[k] = std::clamp(initial_bids[models[k].index], models[k].box.r_lo, models[k].box.r_hi);
    h[k] = 1.0;
  }
  double nu = 0.0;
  r = project(r, h, nu);
  for (int iter = 0; iter < 2000; ++iter) {
    for (std::size_t k = 0; k < m; ++k) {
      const auto dv = reduced_server_utility_derivatives(r[k], models[k].node, server, task);
      g[k] = dv.first;
      h[k] = std::max(-dv.second, 1e-12);
      y[k] = r[k] + g[k] / h[k];
    }
    const std::vector<double> p = project(y, h, nu);
    double step = 0.0, slope = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      step = std::max(step, std::abs(p[k] - r[k]) / std::max(1.0, r[k]));
      slope += g[k] * (p[k] - r[k]);
    }
    if (step < 1e-15) break;
    const double f0 = objective(r);
    double alpha = 1.0;
    std::vector<double> trial(m);
    for (;;) {
      for (std::size_t k = 0; k < m; ++k) trial[k] = r[k] + alpha * (p[k] - r[k]);
      if (objective(trial) >= f0 + 1e-4 * alpha * slope || alpha < 1e-12) break;
      alpha *= 0.5;
    }
    r = trial;
  }

  WaterFill fill{r, nu};
  return to_equilibrium(assemble(nodes, models, fill, std::move(excluded), server, task), nodes);
}

std::string Witness::describe() const {
  std::ostringstream os;
  if (kind == Kind::node) {
    os << "node " << node << " gains " << gain << " by switching to theta=" << deviation;
  } else if (donor == node) {
    os << "server gains " << gain << " by setting r[" << node << "]=" << deviation;
  } else {
    os << "server gains " << gain << " by moving reward from node " << donor << " to node "
       << node << " (r[" << node << "]=" << deviation << ")";
  }
  return os.str();
}

Verdict verify_equilibrium(const Equilibrium& eq, std::span<const NodeParamsd> nodes,
                           const ServerParamsd& server, const TaskParamsd& task, double eps,
                           const VerifyGrid& grid) {
  const std::size_t n = nodes.size();
  if (eq.profile.r.size() != n || eq.profile.theta.size() != n)
    throw std::invalid_argument("verify_equilibrium: profile length must match node count");
  auto is_active = [&](std::size_t i) { return eq.active.empty() || eq.active[i]; };

  Verdict verdict;
  auto reject = [&](Witness w) {
    verdict.accepted = false;
    verdict.witness = std::move(w);
    return verdict;
  };

  // Followers: no profitable theta deviation.
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_active(i)) continue;
    const auto& node = nodes[i];
    const double r = eq.profile.r[i];
    const double base = node_utility(r, eq.profile.theta[i], node.sigma);
    const auto steps = static_cast<std::size_t>((node.theta_max - node.theta_min) / grid.theta_step);
    for (std::size_t k = 0; k <= steps + 1; ++k) {
      const double theta = std::min(node.theta_min + k * grid.theta_step, node.theta_max);
      const double gain = node_utility(r, theta, node.sigma) - base;
      if (gain > eps) return reject({Witness::Kind::node, i, i, theta, gain});
    }
  }

  // Leader: no profitable bid change that keeps every constraint.
  std::vector<RewardInterval> boxes(n);
  double spent = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_active(i)) continue;
    boxes[i] = feasible_reward_interval(nodes[i], server, task);
    spent += eq.profile.r[i];
  }
  const double slack = std::max(0.0, server.R_max - spent);
  auto value = [&](std::size_t i, double r) {
    return server_node_utility(r, best_response(nodes[i], r), nodes[i], server, task);
  };
  std::vector<double> base(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    if (is_active(i)) base[i] = value(i, eq.profile.r[i]);

  for (std::size_t i = 0; i < n; ++i) {
    if (!is_active(i)) continue;
    const double lo = boxes[i].r_lo;
    const double hi = std::min(boxes[i].r_hi, eq.profile.r[i] + slack);
    if (hi < lo) continue;
    const auto steps = static_cast<std::size_t>((hi - lo) / grid.r_step);
    for (std::size_t k = 0; k <= steps + 1; ++k) {
      const double r = std::min(lo + k * grid.r_step, hi);
      const double gain = value(i, r) - base[i];
      if (gain > eps) return reject({Witness::Kind::server, i, i, r, gain});
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_active(i)) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || !is_active(j)) continue;
      const double room =
          std::min(boxes[i].r_hi - eq.profile.r[i], eq.profile.r[j] - boxes[j].r_lo);
      for (double delta = grid.r_step; delta <= room; delta *= 2.0) {
        const double ri = eq.profile.r[i] + delta, rj = eq.profile.r[j] - delta;
        const double gain = value(i, ri) - base[i] + value(j, rj) - base[j];
        if (gain > eps) return reject({Witness::Kind::server, i, j, ri, gain});
      }
    }
  }
  return verdict;
}

double subset_value(std::span<const NodeParamsd> nodes, std::span<const std::size_t> subset,
                    const ServerParamsd& server, const TaskParamsd& task) {
  std::vector<NodeParamsd> chosen;
  chosen.reserve(subset.size());
  for (auto i : subset) chosen.push_back(nodes[i]);
  try {
    const Allocation alloc = allocate_budget(chosen, server, task);
    if (!alloc.excluded.empty()) return -kInf;
    return alloc.utility;
  } catch (const InfeasibleError&) {
    return -kInf;
  }
}

namespace {

// Subset evaluation on pre-modelled candidates (avoids re-solving per-node optima).
double models_value(std::span<const NodeModel> all, const std::vector<std::size_t>& subset,
                    const ServerParamsd& server, const TaskParamsd& task) {
  std::vector<NodeModel> chosen;
  chosen.reserve(subset.size());
  for (auto k : subset) chosen.push_back(all[k]);
  try {
    const WaterFill fill = water_fill(chosen, server, task);
    double v = 0.0;
    for (std::size_t k = 0; k < chosen.size(); ++k)
      v += server_node_utility(fill.r[k], best_response(chosen[k].node, fill.r[k]),
                               chosen[k].node, server, task);
    return v;
  } catch (const InfeasibleError&) {
    return -kInf;
  }
}

bool improves(double candidate, double incumbent) {
  if (std::isinf(incumbent) && incumbent < 0) return !std::isinf(candidate) || candidate > 0;
  return candidate > incumbent + 1e-12 * std::max(1.0, std::abs(incumbent));
}

Selection finish_selection(std::span<const NodeParamsd> nodes, std::vector<std::size_t> subset,
                           const ServerParamsd& server, const TaskParamsd& task) {
  std::sort(subset.begin(), subset.end());
  Selection sel;
  sel.subset = std::move(subset);
  std::vector<NodeParamsd> chosen;
  for (auto i : sel.subset) chosen.push_back(nodes[i]);
  sel.allocation = allocate_budget(chosen, server, task);
  sel.utility = sel.allocation.utility;
  return sel;
}

}  // namespace

Selection select_nodes(std::span<const NodeParamsd> nodes, std::size_t n,
                       const ServerParamsd& server, const TaskParamsd& task) {
  validate(server);
  if (n < 1 || n > nodes.size())
    throw std::invalid_argument("select_nodes: n must be in [1, node count]");
  std::vector<Exclusion> excluded;
  const auto models = model_nodes(nodes, server, task, excluded);
  if (models.size() < n)
    throw InfeasibleError("selection", "select_nodes: only " + std::to_string(models.size()) +
                                           " feasible candidates for n=" + std::to_string(n));

  // Positions into `models`.
  std::vector<std::size_t> chosen;
  std::vector<bool> taken(models.size(), false);
  double current = 0.0;
  for (std::size_t step = 0; step < n; ++step) {
    double best = -kInf;
    std::size_t pick = models.size();
    for (std::size_t k = 0; k < models.size(); ++k) {
      if (taken[k]) continue;
      auto trial = chosen;
      trial.push_back(k);
      const double v = models_value(models, trial, server, task);
      if (pick == models.size() || improves(v, best)) {
        best = v;
        pick = k;
      }
    }
    chosen.push_back(pick);
    taken[pick] = true;
    current = best;
  }

  for (;;) {
    double best = current;
    std::size_t out_pos = n, in_k = models.size();
    for (std::size_t pos = 0; pos < n; ++pos) {
      for (std::size_t k = 0; k < models.size(); ++k) {
        if (taken[k]) continue;
        auto trial = chosen;
        trial[pos] = k;
        const double v = models_value(models, trial, server, task);
        if (improves(v, best)) {
          best = v;
          out_pos = pos;
          in_k = k;
        }
      }
    }
    if (out_pos == n) break;
    taken[chosen[out_pos]] = false;
    taken[in_k] = true;
    chosen[out_pos] = in_k;
    current = best;
  }

  std::vector<std::size_t> subset;
  for (auto k : chosen) subset.push_back(models[k].index);
  return finish_selection(nodes, std::move(subset), server, task);
}

BaselineKind parse_baseline(const std::string& name) {
  if (name == "quality_first") return BaselineKind::quality_first;
  if (name == "price_first") return BaselineKind::price_first;
  if (name == "random_pricing") return BaselineKind::random_pricing;
  if (name == "random_subset") return BaselineKind::random_subset;
  throw std::invalid_argument("unknown baseline kind: " + name);
}

std::string to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::quality_first: return "quality_first";
    case BaselineKind::price_first: return "price_first";
    case BaselineKind::random_pricing: return "random_pricing";
    case BaselineKind::random_subset: return "random_subset";
  }
  return "unknown";
}

Selection baseline_strategy(BaselineKind kind, std::span<const NodeParamsd> nodes,
                            std::size_t count, const ServerParamsd& server,
                            const TaskParamsd& task, std::uint64_t seed) {
  validate(server);
  if (count < 1 || count > nodes.size())
    throw std::invalid_argument("baseline_strategy: count must be in [1, node count]");
  std::vector<Exclusion> excluded;
  const auto models = model_nodes(nodes, server, task, excluded);
  if (models.size() < count)
    throw InfeasibleError("selection", "baseline_strategy: not enough feasible candidates");
  std::mt19937_64 rng(seed);

  if (kind == BaselineKind::random_subset) {
    std::vector<std::size_t> pool(models.size());
    std::iota(pool.begin(), pool.end(), 0);
    std::shuffle(pool.begin(), pool.end(), rng);
    // Draw order doubles as rank: trailing draws drop out if floors overrun the budget.
    std::size_t kept = count;
    double floors = 0.0;
    for (std::size_t k = 0; k < count; ++k) floors += models[pool[k]].box.r_lo;
    while (kept > 1 && floors > server.R_max) floors -= models[pool[--kept]].box.r_lo;
    std::vector<std::size_t> subset;
    for (std::size_t k = 0; k < kept; ++k) subset.push_back(models[pool[k]].index);
    return finish_selection(nodes, std::move(subset), server, task);
  }

  Selection sel;
  std::vector<const NodeModel*> picked;
  if (kind == BaselineKind::random_pricing) {
    sel.subset = select_nodes(nodes, count, server, task).subset;
    for (auto i : sel.subset)
      for (const auto& m : models)
        if (m.index == i) picked.push_back(&m);
  } else {
    std::vector<std::pair<double, std::size_t>> keyed;
    for (std::size_t k = 0; k < models.size(); ++k) {
      const auto& m = models[k];
      double key;
      if (kind == BaselineKind::quality_first) {
        const double theta = best_response(m.node, m.r_star);
        key = -model_quality(cycle_at(m.node, task, theta), server.satisfaction());
      } else {
        key = m.node.sigma;
      }
      keyed.emplace_back(key, k);
    }
    std::stable_sort(keyed.begin(), keyed.end(),
                     [](const auto& x, const auto& y) { return x.first < y.first; });
    for (std::size_t k = 0; k < count; ++k) picked.push_back(&models[keyed[k].second]);
  }

  // Every picked node is first paid its admission floor; if the floors alone
  // overrun the budget the lowest-ranked nodes drop out.
  std::size_t funded_count = picked.size();
  double floors = 0.0;
  for (const auto* m : picked) floors += m->box.r_lo;
  while (funded_count > 0 && floors > server.R_max) floors -= picked[--funded_count]->box.r_lo;

  std::vector<double> r(picked.size(), 0.0);
  double remaining = server.R_max - floors;
  if (kind == BaselineKind::random_pricing) {
    double extra_total = 0.0;
    for (std::size_t k = 0; k < funded_count; ++k) {
      std::uniform_real_distribution<double> draw(0.0, picked[k]->box.r_hi - picked[k]->box.r_lo);
      r[k] = draw(rng);
      extra_total += r[k];
    }
    const double scale = extra_total > remaining ? remaining / extra_total : 1.0;
    for (std::size_t k = 0; k < funded_count; ++k) r[k] = picked[k]->box.r_lo + scale * r[k];
  } else {
    // Top up in rank order towards each node's own optimum.
    for (std::size_t k = 0; k < funded_count; ++k) {
      const double extra = std::clamp(picked[k]->r_star - picked[k]->box.r_lo, 0.0, remaining);
      r[k] = picked[k]->box.r_lo + extra;
      remaining -= extra;
    }
  }

  // Report in ascending node order.
  std::vector<std::size_t> order(picked.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return picked[x]->index < picked[y]->index; });
  sel.subset.clear();
  Allocation& alloc = sel.allocation;
  alloc.utility = 0.0;
  for (auto k : order) {
    // A bid below the admissible floor does not buy participation.
    const bool funded = k < funded_count;
    const double bid = funded ? r[k] : 0.0;
    const double theta = funded ? best_response(picked[k]->node, bid) : picked[k]->node.theta_max;
    sel.subset.push_back(picked[k]->index);
    alloc.profile.r.push_back(bid);
    alloc.profile.theta.push_back(theta);
    alloc.active.push_back(funded);
    alloc.binding.push_back(kBindNone);
    if (funded) alloc.utility += server_node_utility(bid, theta, picked[k]->node, server, task);
  }
  sel.utility = alloc.utility;
  return sel;
}

Selection baseline_strategy(BaselineKind kind, std::span<const NodeParamsd> nodes,
                            const ServerParamsd& server, const TaskParamsd& task,
                            std::uint64_t seed) {
  return baseline_strategy(kind, nodes, nodes.size(), server, task, seed);
}

}  // namespace satfl
