#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "satfl/oracles.hpp"
#include "satfl/game.hpp"

using namespace satfl;

namespace {

const TaskParamsd kTask{10, 1};

NodeParamsd ref_node(double sigma = 2, int a = 2, double d = 10) {
  return {sigma, a, d, a + 0.01, 60};
}

ServerParamsd ref_server(double beta = 3) {
  ServerParamsd s;
  s.tau = s.lambda = s.rho = 1;
  s.beta = beta;
  return s;
}

NodeParamsd random_node(std::mt19937_64& rng, double sigma_lo = 1, double sigma_hi = 5) {
  std::uniform_int_distribution<int> a(1, 8);
  std::uniform_real_distribution<double> u(0, 1);
  NodeParamsd n;
  n.a = a(rng);
  n.sigma = sigma_lo + (sigma_hi - sigma_lo) * u(rng);
  n.d = 10 + 70 * u(rng);
  n.theta_min = n.a + 0.2 + 0.5 * u(rng);
  n.theta_max = n.theta_min + 10 + 10 * u(rng);
  return n;
}

ServerParamsd random_server(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  ServerParamsd s;
  s.tau = 1;
  s.lambda = 1;
  s.rho = 3 + 4 * u(rng);
  s.beta = 3;
  return s;
}

}  // namespace

TEST_CASE("node reward, cost and utility") {
  // 0.5 ln(1/4) = -0.693147...
  CHECK(node_reward(0.5, 4.0) == doctest::Approx(-0.6931471805599453).epsilon(1e-14));
  CHECK(node_reward(0.0, 7.0) == 0.0);
  CHECK(node_reward(2.0, 1.0) == 0.0);
  CHECK_THROWS_AS(node_reward(1.0, 0.0), std::domain_error);

  CHECK(node_cost(2.0, 4.0) == doctest::Approx(0.5));
  CHECK(node_cost(2.0, 2.0) == doctest::Approx(1.0));
  CHECK(node_cost(0.5, 0.5) == doctest::Approx(1.0));
  CHECK_THROWS_AS(node_cost(1.0, -1.0), std::domain_error);

  CHECK(node_utility(0.5, 4.0, 2.0) == doctest::Approx(-1.1931471805599454).epsilon(1e-14));
  CHECK(node_utility(0.0, 4.0, 2.0) == doctest::Approx(-0.5));
  CHECK(node_utility(1.0, 1.0, 1.0) == doctest::Approx(-1.0));
}

TEST_CASE("node utility derivatives") {
  auto d = node_utility_derivatives(0.5, 4.0, 2.0);
  CHECK(d.first == doctest::Approx(0.0));
  CHECK(d.second == doctest::Approx(-0.03125));
  d = node_utility_derivatives(0.5, 2.0, 2.0);
  CHECK(d.first == doctest::Approx(0.25));
  CHECK(d.second == doctest::Approx(-0.375));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.05, 5);
  for (int k = 0; k < 500; ++k) {
    const double r = u(rng), sigma = u(rng), theta = 0.5 + u(rng);
    const auto dv = node_utility_derivatives(r, theta, sigma);
    const double fd = oracle::central_difference(
        [&](double x) { return node_utility(r, x, sigma); }, theta, 1e-6);
    CHECK(std::abs(fd - dv.first) <= 1e-5 * std::max(1e-3, std::abs(dv.first)) + 1e-9);
    const double fd2 = oracle::central_difference(
        [&](double x) { return node_utility_derivatives(r, x, sigma).first; }, theta, 1e-6);
    CHECK(std::abs(fd2 - dv.second) <= 1e-5 * std::max(1e-3, std::abs(dv.second)) + 1e-9);
    if (theta < 2 * sigma / r) CHECK(dv.second < 0);
  }
}

TEST_CASE("best response") {
  const NodeParamsd node{2, 2, 10, 1 + 1e-9 + 2, 10};
  NodeParamsd wide = node;
  wide.theta_min = 1;  // bounds only; clamping does not look at a
  CHECK(best_response(wide, 0.5) == doctest::Approx(4.0));
  CHECK(best_response(wide, 0.1) == doctest::Approx(10.0));
  CHECK(best_response(wide, 5.0) == doctest::Approx(1.0));
  CHECK(best_response(wide, 0.0) == doctest::Approx(10.0));
  CHECK_THROWS(best_response(wide, -1.0));

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 1);
  for (int k = 0; k < 1000; ++k) {
    const NodeParamsd n = random_node(rng);
    const double r = 0.01 + 4 * u(rng);
    const double theta = best_response(n, r);
    const double best = node_utility(r, theta, n.sigma);
    const double step = (n.theta_max - n.theta_min) / 9999.0;
    for (int j = 0; j < 10000; ++j) {
      const double grid_theta = n.theta_min + j * step;
      REQUIRE(best >= node_utility(r, grid_theta, n.sigma) - 1e-6);
    }
  }
}

TEST_CASE("server utility") {
  const NodeParamsd node = ref_node();
  const ServerParamsd server = ref_server();
  StrategyProfile one{{0.5}, {4.0}};
  const std::vector<NodeParamsd> nodes{node};
  CHECK(server_utility(one, nodes, server, kTask) ==
        doctest::Approx(21.0 + 0.6931471805599453).epsilon(1e-13));

  ServerParamsd flat = server;
  flat.beta = 0;
  StrategyProfile idle{{0.0}, {7.0}};
  CHECK(server_utility(idle, nodes, flat, kTask) == 0.0);

  const std::vector<NodeParamsd> twins{node, node};
  StrategyProfile two{{0.5, 0.5}, {4.0, 4.0}};
  CHECK(server_utility(two, twins, server, kTask) ==
        doctest::Approx(2 * server_utility(one, nodes, server, kTask)));
  CHECK_THROWS(server_utility(two, nodes, server, kTask));
}

TEST_CASE("reduced server utility") {
  const NodeParamsd node = ref_node();
  CHECK(reduced_server_utility(0.5, node, ref_server(), kTask) ==
        doctest::Approx(21.0 + 0.6931471805599453).epsilon(1e-13));
  CHECK(reduced_server_utility(0.5, node, ref_server(0), kTask) ==
        doctest::Approx(0.6931471805599453).epsilon(1e-13));
  // At r = sigma/theta_max the follower sits exactly on its upper bound.
  const double r_edge = node.sigma / node.theta_max;
  const StrategyProfile edge{{r_edge}, {node.theta_max}};
  const std::vector<NodeParamsd> nodes{node};
  CHECK(reduced_server_utility(r_edge, node, ref_server(), kTask) ==
        doctest::Approx(server_utility(edge, nodes, ref_server(), kTask)).epsilon(1e-10));
  CHECK_THROWS_AS(reduced_server_utility(0.0, node, ref_server(), kTask), std::domain_error);
  CHECK_THROWS_AS(reduced_server_utility(1.0, node, ref_server(), kTask), std::domain_error);
}

TEST_CASE("substitution consistency") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  for (int k = 0; k < 1000; ++k) {
    const NodeParamsd n = random_node(rng);
    const ServerParamsd s = random_server(rng);
    const double theta = n.theta_min + (n.theta_max - n.theta_min) * (0.001 + 0.998 * u(rng));
    const double r = n.sigma / theta;
    const double reduced = reduced_server_utility(r, n, s, kTask);
    const StrategyProfile p{{r}, {best_response(n, r)}};
    const std::vector<NodeParamsd> nodes{n};
    const double full = server_utility(p, nodes, s, kTask);
    CHECK(std::abs(reduced - full) <= 1e-10 * std::max(1.0, std::abs(full)));
  }
}

TEST_CASE("reduced derivatives match finite differences and are concave") {
  const NodeParamsd node = ref_node();
  const auto dv = reduced_server_utility_derivatives(0.3, node, ref_server(), kTask);
  const double fd = oracle::central_difference(
      [&](double r) { return reduced_server_utility(r, node, ref_server(), kTask); }, 0.3, 1e-6);
  CHECK(std::abs(fd - dv.first) <= 1e-5 * std::abs(dv.first));
  CHECK(dv.second < 0);
  // Lambda = sigma - (a-1) t r at r = 0.9 sigma/(a t)
  const double r = 0.9 * node.sigma / (node.a * kTask.t);
  CHECK(node.sigma - (node.a - 1) * kTask.t * r == doctest::Approx(1.1));

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0, 1);
  for (int k = 0; k < 1000; ++k) {
    NodeParamsd n = random_node(rng);
    if (n.a == 1) n.a = 2 + k % 7;
    n.theta_min = n.a + 0.2;
    const ServerParamsd s = random_server(rng);
    const double cap = n.sigma / (n.a * kTask.t);
    const double x = cap * (0.02 + 0.96 * u(rng));
    const auto d = reduced_server_utility_derivatives(x, n, s, kTask);
    auto f = [&](double r) { return reduced_server_utility(r, n, s, kTask); };
    const double h = 1e-6 * x;
    CHECK(std::abs(oracle::central_difference(f, x, h) - d.first) <=
          1e-5 * std::max(1.0, std::abs(d.first)));
    auto g = [&](double r) { return reduced_server_utility_derivatives(r, n, s, kTask).first; };
    CHECK(std::abs(oracle::central_difference(g, x, h) - d.second) <=
          1e-5 * std::max(1.0, std::abs(d.second)));
    CHECK(d.second < 0);
  }
  CHECK_THROWS_AS(reduced_server_utility_derivatives(2.0, node, ref_server(), kTask),
                  std::domain_error);
}

TEST_CASE("constraint translation") {
  // AoI = t + t^2 a (a+1)/2/(theta - a t); a = 2, t = 1: 1 + 3/(theta - 2)
  CHECK(theta_for_aoi_ceiling(2, kTask, 2.5) == doctest::Approx(4.0));
  CHECK(std::isinf(theta_for_aoi_ceiling(2, kTask, 1.0)));
  // latency(4) = 3 with a = 2
  const auto range = theta_range_for_latency_ceiling(2, kTask, 3.0);
  REQUIRE(range);
  CHECK(range->first == doctest::Approx(2.0));
  CHECK(range->second == doctest::Approx(4.0).epsilon(1e-12));
  // Latency dips below t right after theta = a t.
  const auto dip = theta_range_for_latency_ceiling(2, kTask, 0.99);
  REQUIRE(dip);
  CHECK(dip->first > 2.0);
  CHECK(average_service_latency(CycleParamsd{dip->first, 2, 1, 10, 10}) ==
        doctest::Approx(0.99).epsilon(1e-9));
  CHECK_FALSE(theta_range_for_latency_ceiling(2, kTask, 0.1));

  ServerParamsd s = ref_server();
  s.A_max = 2.5;
  s.E_max = 5.8;
  const auto box = feasible_reward_interval(ref_node(), s, kTask);
  CHECK(box.theta_lo == doctest::Approx(4.0));
  CHECK(box.theta_hi == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(box.hi_binding == kBindAoi);
  CHECK(box.lo_binding == kBindLatency);
  CHECK(box.r_lo == doctest::Approx(2.0 / 5.0));
  CHECK(box.r_hi == doctest::Approx(0.5));
}

TEST_CASE("optimize_unit_reward") {
  const NodeParamsd node = ref_node();
  SUBCASE("matches grid search") {
    const auto best = optimize_unit_reward(node, ref_server(), kTask);
    const double grid = oracle::grid_unit_reward(node, ref_server(), kTask, best.interval.r_lo,
                                                 0.999, 1e-4);
    CHECK(std::abs(best.r - grid) <= 1e-3);
    CHECK(std::abs(reduced_server_utility_derivatives(best.r, node, ref_server(), kTask).first) <=
          1e-8);
    CHECK(best.binding == kBindNone);
  }
  SUBCASE("pure payment objective peaks at sigma/e") {
    const auto best = optimize_unit_reward(node, ref_server(0), kTask);
    CHECK(best.r == doctest::Approx(2.0 / std::exp(1.0)).epsilon(1e-10));
  }
  SUBCASE("unreachable AoI ceiling is infeasible") {
    ServerParamsd s = ref_server();
    s.A_max = 1.01;  // needs theta ~ 302 > theta_max
    try {
      optimize_unit_reward(node, s, kTask);
      FAIL("expected infeasibility");
    } catch (const InfeasibleError& e) {
      CHECK(e.constraint() == "aoi");
    }
    s.A_max = INFINITY;
    s.E_max = 0.1;
    CHECK_THROWS_AS(optimize_unit_reward(node, s, kTask), InfeasibleError);
  }
  SUBCASE("bound solutions carry the right gradient sign") {
    ServerParamsd s = ref_server();
    s.A_max = 1.2;  // theta >= 17
    const auto best = optimize_unit_reward(node, s, kTask);
    CHECK(best.r == doctest::Approx(best.interval.r_hi));
    CHECK(best.binding == kBindAoi);
    CHECK(reduced_server_utility_derivatives(best.r, node, s, kTask).first >= 0);
  }
  SUBCASE("random instances against a fine grid") {
    std::mt19937_64 rng(21);
    for (int k = 0; k < 30; ++k) {
      const NodeParamsd n = random_node(rng);
      const ServerParamsd s = random_server(rng);
      const auto best = optimize_unit_reward(n, s, kTask);
      const double grid = oracle::grid_unit_reward(n, s, kTask, best.interval.r_lo,
                                                   best.interval.r_hi, 1e-4);
      CHECK(std::abs(best.r - grid) <= 1e-3);
    }
  }
}

TEST_CASE("allocate_budget") {
  const NodeParamsd node = ref_node();
  const ServerParamsd server = ref_server();
  const double single = optimize_unit_reward(node, server, kTask).r;

  SUBCASE("slack budget returns the per-node optima") {
    std::mt19937_64 rng(2);
    std::vector<NodeParamsd> nodes;
    for (int i = 0; i < 5; ++i) nodes.push_back(random_node(rng));
    ServerParamsd s = random_server(rng);
    s.R_max = 1e9;
    const auto alloc = allocate_budget(nodes, s, kTask);
    CHECK(alloc.multiplier == 0.0);
    for (std::size_t i = 0; i < nodes.size(); ++i)
      CHECK(alloc.profile.r[i] == doctest::Approx(optimize_unit_reward(nodes[i], s, kTask).r));
  }
  SUBCASE("identical twins split a binding budget evenly") {
    ServerParamsd s = server;
    s.R_max = single;
    const std::vector<NodeParamsd> twins{node, node};
    const auto alloc = allocate_budget(twins, s, kTask);
    CHECK(alloc.profile.r[0] == doctest::Approx(single / 2).epsilon(1e-9));
    CHECK(alloc.profile.r[1] == doctest::Approx(single / 2).epsilon(1e-9));
    CHECK(alloc.multiplier > 0);
    CHECK((alloc.binding[0] & kBindBudget));
  }
  SUBCASE("three heterogeneous nodes under a tight budget match a 3-D grid") {
    const std::vector<NodeParamsd> nodes{{1.5, 2, 30, 2.3, 12},
                                         {3.0, 1, 60, 1.4, 12},
                                         {2.2, 3, 45, 3.4, 14}};
    ServerParamsd s = ref_server();
    s.rho = 4;
    double free_total = 0;
    for (const auto& n : nodes) free_total += optimize_unit_reward(n, s, kTask).r;
    s.R_max = 0.6 * free_total;
    const auto alloc = allocate_budget(nodes, s, kTask);
    const auto grid = oracle::grid_allocation3(nodes, s, kTask, 1e-2);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(alloc.profile.r[i] - grid[i]) <= 2e-2);
    const double spent = std::accumulate(alloc.profile.r.begin(), alloc.profile.r.end(), 0.0);
    CHECK(std::abs(spent - s.R_max) <= 1e-8);
    // Interior bids share one marginal value.
    for (int i = 0; i < 3; ++i) {
      const auto box = feasible_reward_interval(nodes[i], s, kTask);
      if (alloc.profile.r[i] > box.r_lo && alloc.profile.r[i] < box.r_hi)
        CHECK(reduced_server_utility_derivatives(alloc.profile.r[i], nodes[i], s, kTask).first ==
              doctest::Approx(alloc.multiplier).epsilon(1e-6));
    }
  }
  SUBCASE("infeasible nodes are excluded and reported") {
    ServerParamsd s = server;
    s.A_max = 1.3;  // a=2 needs theta >= 12, a=8 needs theta >= 126
    const std::vector<NodeParamsd> nodes{node, {2, 8, 10, 8.5, 30}};
    const auto alloc = allocate_budget(nodes, s, kTask);
    CHECK(alloc.active[0]);
    CHECK_FALSE(alloc.active[1]);
    REQUIRE(alloc.excluded.size() == 1);
    CHECK(alloc.excluded[0].node == 1);
    CHECK(alloc.excluded[0].constraint == "aoi");
  }
  SUBCASE("unfundable minimum bids") {
    ServerParamsd s = server;
    s.R_max = 1e-3;
    const std::vector<NodeParamsd> nodes{node, node};
    CHECK_THROWS_AS(allocate_budget(nodes, s, kTask), InfeasibleError);
  }
}

TEST_CASE("budget feasibility of emitted profiles") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0, 1);
  for (int k = 0; k < 60; ++k) {
    std::vector<NodeParamsd> nodes;
    for (int i = 0; i < 6; ++i) nodes.push_back(random_node(rng));
    ServerParamsd s = random_server(rng);
    s.R_max = 0.5 + 4 * u(rng);
    s.A_max = 1.5 + 6 * u(rng);
    s.E_max = 20 + 100 * u(rng);
    Allocation alloc;
    try {
      alloc = allocate_budget(nodes, s, kTask);
    } catch (const InfeasibleError& e) {
      CHECK(e.constraint() == "budget");
      continue;
    }
    const double spent = std::accumulate(alloc.profile.r.begin(), alloc.profile.r.end(), 0.0);
    CHECK(spent <= s.R_max + 1e-9);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (!alloc.active[i]) continue;
      const auto c = cycle_at(nodes[i], kTask, alloc.profile.theta[i]);
      CHECK(average_aoi(c) <= s.A_max * (1 + 1e-9));
      CHECK(average_service_latency(c) <= s.E_max * (1 + 1e-9));
    }
  }
}

TEST_CASE("solve_equilibrium") {
  const ServerParamsd server = ref_server();
  SUBCASE("single node matches a joint grid search") {
    const NodeParamsd node{2, 2, 10, 2.01, 12};
    const std::vector<NodeParamsd> nodes{node};
    const auto eq = solve_equilibrium(nodes, server, kTask);
    const auto grid = oracle::grid_stackelberg(node, server, kTask, node.sigma / node.theta_max,
                                               node.sigma / node.theta_min, 1e-3, 1e-2);
    CHECK(std::abs(eq.profile.r[0] - grid.r) <= 1e-2);
    CHECK(std::abs(eq.profile.theta[0] - grid.theta) <= 1e-2);
    CHECK(std::abs(eq.server_utility - grid.value) <= 1e-3 * std::abs(grid.value));
    CHECK(verify_equilibrium(eq, nodes, server, kTask, 1e-6).accepted);
  }
  SUBCASE("symmetric nodes get identical strategies") {
    const std::vector<NodeParamsd> nodes(4, ref_node());
    ServerParamsd s = server;
    s.R_max = 1.0;
    const auto eq = solve_equilibrium(nodes, s, kTask);
    for (std::size_t i = 1; i < nodes.size(); ++i) {
      CHECK(eq.profile.r[i] == doctest::Approx(eq.profile.r[0]).epsilon(1e-10));
      CHECK(eq.profile.theta[i] == doctest::Approx(eq.profile.theta[0]).epsilon(1e-10));
    }
  }
  SUBCASE("tiny budget binds") {
    const std::vector<NodeParamsd> nodes{ref_node(2), ref_node(3), ref_node(4)};
    ServerParamsd s = server;
    s.R_max = 0.3;
    const auto eq = solve_equilibrium(nodes, s, kTask);
    const double spent = std::accumulate(eq.profile.r.begin(), eq.profile.r.end(), 0.0);
    CHECK(spent == doctest::Approx(0.3).epsilon(1e-8));
    CHECK(eq.kkt_multiplier > 0);
    CHECK(verify_equilibrium(eq, nodes, s, kTask, 1e-6).accepted);
  }
  SUBCASE("node utilities follow the reward formula and may be negative") {
    const std::vector<NodeParamsd> nodes{ref_node()};
    const auto eq = solve_equilibrium(nodes, server, kTask);
    const double r = eq.profile.r[0], theta = eq.profile.theta[0];
    CHECK(eq.node_utilities[0] == doctest::Approx(-r * std::log(theta) - r));
    CHECK(eq.node_utilities[0] < 0);
  }
}

TEST_CASE("equilibrium is unique across starting points") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0, 1);
  for (int inst = 0; inst < 10; ++inst) {
    std::vector<NodeParamsd> nodes;
    for (int i = 0; i < 5; ++i) nodes.push_back(random_node(rng));
    ServerParamsd s = random_server(rng);
    double free_total = 0;
    for (const auto& n : nodes) free_total += optimize_unit_reward(n, s, kTask).r;
    s.R_max = (inst % 2 ? 0.5 : 2.0) * free_total;
    const auto reference = solve_equilibrium(nodes, s, kTask);
    for (int start = 0; start < 10; ++start) {
      std::vector<double> init;
      for (const auto& n : nodes)
        init.push_back(n.sigma / n.theta_max + u(rng) * (n.sigma / n.theta_min - n.sigma / n.theta_max));
      const auto eq = solve_equilibrium_from(nodes, s, kTask, init);
      for (std::size_t i = 0; i < nodes.size(); ++i)
        CHECK(std::abs(eq.profile.r[i] - reference.profile.r[i]) <= 1e-5);
    }
  }
}

TEST_CASE("verify_equilibrium rejects perturbations") {
  const std::vector<NodeParamsd> nodes{ref_node(2), ref_node(3)};
  const ServerParamsd server = ref_server();
  const auto eq = solve_equilibrium(nodes, server, kTask);
  REQUIRE(verify_equilibrium(eq, nodes, server, kTask, 1e-6).accepted);

  auto bent = eq;
  bent.profile.theta[0] *= 1.2;
  auto verdict = verify_equilibrium(bent, nodes, server, kTask, 1e-6);
  CHECK_FALSE(verdict.accepted);
  REQUIRE(verdict.witness);
  CHECK(verdict.witness->kind == Witness::Kind::node);
  CHECK(verdict.witness->node == 0);

  auto cheap = eq;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    cheap.profile.r[i] *= 0.5;
    cheap.profile.theta[i] = best_response(nodes[i], cheap.profile.r[i]);
  }
  verdict = verify_equilibrium(cheap, nodes, server, kTask, 1e-6);
  CHECK_FALSE(verdict.accepted);
  REQUIRE(verdict.witness);
  CHECK(verdict.witness->kind == Witness::Kind::server);
  CHECK_FALSE(verdict.witness->describe().empty());
}

TEST_CASE("select_nodes") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(0, 1);
  SUBCASE("n = all nodes") {
    std::vector<NodeParamsd> nodes;
    for (int i = 0; i < 5; ++i) nodes.push_back(random_node(rng));
    const auto sel = select_nodes(nodes, 5, random_server(rng), kTask);
    CHECK(sel.subset == std::vector<std::size_t>{0, 1, 2, 3, 4});
  }
  SUBCASE("n = 1 picks the best singleton") {
    std::vector<NodeParamsd> nodes;
    for (int i = 0; i < 6; ++i) nodes.push_back(random_node(rng));
    ServerParamsd s = random_server(rng);
    s.R_max = 1.0;
    double best_v = -INFINITY;
    std::size_t best = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const std::vector<std::size_t> one{i};
      const double v = subset_value(nodes, one, s, kTask);
      if (v > best_v) {
        best_v = v;
        best = i;
      }
    }
    const auto sel = select_nodes(nodes, 1, s, kTask);
    CHECK(sel.subset == std::vector<std::size_t>{best});
  }
  SUBCASE("matches exhaustive enumeration on small pools") {
    for (int inst = 0; inst < 25; ++inst) {
      const std::size_t m = inst < 10 ? 6 : 8;
      std::vector<NodeParamsd> nodes;
      for (std::size_t i = 0; i < m; ++i) nodes.push_back(random_node(rng, 3, 15));
      ServerParamsd s = random_server(rng);
      s.R_max = 2 + 6 * u(rng);
      for (std::size_t n : {std::size_t{3}, m / 2 + 1, m - 1}) {
        double exhaustive_v = 0;
        const auto best = oracle::exhaustive_subset(nodes, n, s, kTask, &exhaustive_v);
        if (best.empty()) {
          CHECK_THROWS_AS(select_nodes(nodes, n, s, kTask), InfeasibleError);
          continue;
        }
        const auto sel = select_nodes(nodes, n, s, kTask);
        CHECK(sel.utility == doctest::Approx(exhaustive_v).epsilon(1e-9));
        CHECK(sel.subset == best);
      }
    }
  }
}

TEST_CASE("baselines") {
  const ServerParamsd server = ref_server();
  SUBCASE("price_first funds the cheapest nodes first") {
    const std::vector<NodeParamsd> nodes{ref_node(1), ref_node(2), ref_node(3)};
    ServerParamsd s = server;
    s.R_max = optimize_unit_reward(nodes[0], s, kTask).r + optimize_unit_reward(nodes[1], s, kTask).r;
    const auto sel = baseline_strategy(BaselineKind::price_first, nodes, s, kTask, 1);
    // Floors first, then top-ups in ascending sigma; the dearest node keeps its floor.
    CHECK(sel.allocation.profile.r[0] ==
          doctest::Approx(optimize_unit_reward(nodes[0], s, kTask).r));
    CHECK(sel.allocation.profile.r[1] > nodes[1].sigma / nodes[1].theta_max);
    CHECK(sel.allocation.profile.r[2] == doctest::Approx(nodes[2].sigma / nodes[2].theta_max));
    CHECK(sel.allocation.profile.theta[2] == doctest::Approx(nodes[2].theta_max));
    const double spent = std::accumulate(sel.allocation.profile.r.begin(),
                                         sel.allocation.profile.r.end(), 0.0);
    CHECK(spent == doctest::Approx(s.R_max));
  }
  SUBCASE("random pricing is reproducible") {
    std::mt19937_64 rng(3);
    std::vector<NodeParamsd> nodes;
    for (int i = 0; i < 8; ++i) nodes.push_back(random_node(rng));
    ServerParamsd s = random_server(rng);
    s.R_max = 8;
    const auto x = baseline_strategy(BaselineKind::random_pricing, nodes, 5, s, kTask, 99);
    const auto y = baseline_strategy(BaselineKind::random_pricing, nodes, 5, s, kTask, 99);
    CHECK(x.allocation.profile.r == y.allocation.profile.r);
    CHECK(x.utility == y.utility);
    const double spent =
        std::accumulate(x.allocation.profile.r.begin(), x.allocation.profile.r.end(), 0.0);
    CHECK(spent <= s.R_max + 1e-9);
  }
  SUBCASE("proposed scheme beats quality_first") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0, 1);
    for (int inst = 0; inst < 100; ++inst) {
      std::vector<NodeParamsd> nodes;
      for (int i = 0; i < 6; ++i) nodes.push_back(random_node(rng, 2, 12));
      ServerParamsd s = random_server(rng);
      s.R_max = 1 + 5 * u(rng);
      Selection proposed;
      try {
        proposed = select_nodes(nodes, 4, s, kTask);
      } catch (const InfeasibleError& e) {
        CHECK(e.constraint() == "budget");
        continue;
      }
      for (auto kind : {BaselineKind::quality_first, BaselineKind::price_first,
                        BaselineKind::random_pricing, BaselineKind::random_subset}) {
        const auto base = baseline_strategy(kind, nodes, 4, s, kTask, inst);
        const double spent = std::accumulate(base.allocation.profile.r.begin(),
                                             base.allocation.profile.r.end(), 0.0);
        CHECK(spent <= s.R_max + 1e-9);
        // Fewer participants is a different problem; only full subsets compare.
        const auto participants = std::count(base.allocation.active.begin(),
                                             base.allocation.active.end(), true);
        if (participants == 4)
          CHECK(proposed.utility >= base.utility - 1e-9 * std::abs(base.utility));
      }
    }
  }
  CHECK(parse_baseline("random_subset") == BaselineKind::random_subset);
  CHECK_THROWS(parse_baseline("cheapest"));
}
