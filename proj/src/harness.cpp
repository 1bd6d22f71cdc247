#include "satfl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "satfl/env.hpp"
#include "satfl/error.hpp"
#include "satfl/flsim.hpp"
#include "satfl/maddpg.hpp"
#include "satfl/neural.hpp"
#include "satfl/oracles.hpp"

namespace satfl {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string percent(double fraction) {
  std::ostringstream os;
  os.precision(3);
  os << 100 * fraction << '%';
  return os.str();
}

template <typename T>
std::string str(const T& v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

const std::vector<BaselineKind>& baselines() {
  static const std::vector<BaselineKind> kinds{BaselineKind::quality_first, BaselineKind::price_first,
                                               BaselineKind::random_pricing,
                                               BaselineKind::random_subset};
  return kinds;
}

double proposed_utility(std::span<const NodeParamsd> nodes, int n, const ServerParamsd& server,
                        const TaskParamsd& task) {
  try {
    return select_nodes(nodes, static_cast<std::size_t>(n), server, task).utility;
  } catch (const InfeasibleError&) {
    return kNaN;
  }
}

double baseline_utility(BaselineKind kind, std::span<const NodeParamsd> nodes, int n,
                        const ServerParamsd& server, const TaskParamsd& task, std::uint64_t seed) {
  try {
    return baseline_strategy(kind, nodes, static_cast<std::size_t>(n), server, task, seed).utility;
  } catch (const InfeasibleError&) {
    return kNaN;
  }
}

std::vector<int> counts_within(const std::vector<int>& counts, std::size_t pool) {
  std::vector<int> out;
  for (int n : counts)
    if (static_cast<std::size_t>(n) <= pool) out.push_back(n);
  return out;
}

/// Index of the largest finite value; -1 if none.
int argmax_finite(const std::vector<double>& v) {
  int best = -1;
  for (int i = 0; i < static_cast<int>(v.size()); ++i)
    if (std::isfinite(v[i]) && (best < 0 || v[i] > v[best])) best = i;
  return best;
}

// Random single-node instances over the reference parameter ranges.
NodeParamsd reference_node(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> a(1, 8);
  std::uniform_real_distribution<double> u(0, 1);
  NodeParamsd n;
  n.a = a(rng);
  n.sigma = 1 + 4 * u(rng);
  n.d = 10 + 70 * u(rng);
  n.theta_min = n.a + 0.2 + 0.5 * u(rng);
  n.theta_max = n.theta_min + 10 + 10 * u(rng);
  return n;
}

ServerParamsd reference_server(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  ServerParamsd s;
  s.rho = 3 + 4 * u(rng);
  s.beta = 3;
  return s;
}

const TaskParamsd kReferenceTask{10, 1};

}  // namespace

// ---------------------------------------------------------------------------

ResultSet run_scenario(const Scenario& s) {
  ResultSet out;
  out.scenario = s.name;
  out.kind = s.kind;
  out.seed = s.seed;
  out.warnings = s.warnings;
  if (s.kind == "fig2") run_satisfaction_sweep(s, out);
  else if (s.kind == "fig3") run_mechanism_comparison(s, out);
  else if (s.kind == "fig5") run_budget_sweep(s, out);
  else if (s.kind == "fig6") run_bid_cost_sweep(s, out);
  else if (s.kind == "fig8" || s.kind == "fig9") run_fl_comparison(s, out);
  else if (s.kind == "fig15") run_drl(s, out);
  else if (s.kind == "fl") run_fl(s, out);
  else if (s.kind == "equilibrium") run_equilibrium(s, out);
  else if (s.kind == "oracle") run_oracles(s, out);
  else throw ConfigError("scenario.kind", "unknown kind '" + s.kind + "'");
  return out;
}

// ---------------------------------------------------------------------------
// Satisfaction over the update period

void run_satisfaction_sweep(const Scenario& s, ResultSet& out) {
  const auto& w = s.sweep;
  Table curve{"satisfaction", {"a", "d", "rho", "theta", "satisfaction"}, {}};
  Table peaks{"peaks", {"a", "d", "rho", "theta_peak", "satisfaction_peak"}, {}};
  // peak[(a, d, rho)] and the curves themselves for the d comparison
  std::map<std::tuple<int, double, double>, double> peak;
  std::map<std::tuple<int, double, double>, std::vector<double>> curves;
  int unimodal = 0, total = 0;

  for (int a : w.a)
    for (double d : w.d)
      for (double rho : w.rho) {
        const SatisfactionParamsd sp{s.server.tau, s.server.lambda, rho};
        std::vector<double> g;
        double best = -std::numeric_limits<double>::infinity(), best_theta = 0;
        for (int k = 0; k < w.theta_points; ++k) {
          const double theta = a * s.task.t + w.theta_offset.lo +
                               k * (w.theta_offset.hi - w.theta_offset.lo) / (w.theta_points - 1);
          const double v = satisfaction(CycleParamsd{theta, a, s.task.t, s.task.T, d}, sp);
          g.push_back(v);
          curve.add({static_cast<long long>(a), d, rho, theta, v});
          if (v > best) {
            best = v;
            best_theta = theta;
          }
        }
        // Unimodal: once the curve has gone down it never goes up again.
        bool fell = false, ok = true;
        for (std::size_t k = 1; k < g.size(); ++k) {
          if (g[k] < g[k - 1]) fell = true;
          if (g[k] > g[k - 1] && fell) ok = false;
        }
        unimodal += ok;
        ++total;
        peaks.add({static_cast<long long>(a), d, rho, best_theta, best});
        peak[{a, d, rho}] = best;
        curves[{a, d, rho}] = std::move(g);
      }

  std::vector<int> as = w.a;
  std::vector<double> ds = w.d;
  std::sort(as.begin(), as.end());
  std::sort(ds.begin(), ds.end());
  int a_series = 0, a_ok = 0, d_series = 0, d_ok = 0;
  for (double d : ds)
    for (double rho : w.rho) {
      bool ok = true;
      for (std::size_t k = 1; k < as.size(); ++k)
        if (as[k] != as[k - 1]) ok = ok && peak[{as[k], d, rho}] < peak[{as[k - 1], d, rho}];
      ++a_series;
      a_ok += ok;
    }
  for (int a : as)
    for (double rho : w.rho) {
      bool ok = true;
      for (std::size_t k = 1; k < ds.size(); ++k) {
        if (ds[k] == ds[k - 1]) continue;
        const auto& lo = curves[{a, ds[k - 1], rho}];
        const auto& hi = curves[{a, ds[k], rho}];
        for (std::size_t j = 0; j < lo.size(); ++j) ok = ok && hi[j] >= lo[j];
        ok = ok && peak[{a, ds[k], rho}] > peak[{a, ds[k - 1], rho}];
      }
      ++d_series;
      d_ok += ok;
    }

  Check c{"satisfaction_shape", unimodal == total && a_ok == a_series && d_ok == d_series, ""};
  c.detail = str(unimodal) + "/" + str(total) + " curves unimodal; peak falls with a in " +
             str(a_ok) + "/" + str(a_series) + " series; curve rises with d in " + str(d_ok) +
             "/" + str(d_series) + " series";
  out.tables.push_back(std::move(curve));
  out.tables.push_back(std::move(peaks));
  out.checks.push_back(std::move(c));
}

// ---------------------------------------------------------------------------
// Proposed mechanism against the four baselines

void run_mechanism_comparison(const Scenario& s, ResultSet& out) {
  Table util{"utility", {"instance", "n", "scheme", "utility"}, {}};
  Table margins{"margin", {"instance", "peak_n", "peak_utility", "peak_margin", "sweep_margin"}, {}};
  std::vector<std::string> schemes{"proposed"};
  for (auto k : baselines()) schemes.push_back(to_string(k));
  std::map<std::pair<int, std::string>, std::pair<double, int>> sums;  // (n, scheme) -> sum, count

  long comparisons = 0, violations = 0;
  int positive = 0, rated = 0;
  double margin_sum = 0, sweep_sum = 0;
  for (int inst = 0; inst < s.instances; ++inst) {
    ServerParamsd server;
    const auto nodes = instance_nodes(s, inst, server);
    const auto counts = counts_within(s.sweep.counts, nodes.size());
    std::vector<double> prop;
    std::vector<std::vector<double>> base(baselines().size());
    for (int n : counts) {
      prop.push_back(proposed_utility(nodes, n, server, s.task));
      util.add({static_cast<long long>(inst), static_cast<long long>(n), schemes[0], prop.back()});
      for (std::size_t b = 0; b < baselines().size(); ++b) {
        const auto seed = derive_seed(s.seed, 100000 + 1000 * static_cast<std::uint64_t>(inst) + n);
        base[b].push_back(baseline_utility(baselines()[b], nodes, n, server, s.task, seed));
        util.add({static_cast<long long>(inst), static_cast<long long>(n), schemes[b + 1], base[b].back()});
      }
      for (std::size_t k = 0; k < schemes.size(); ++k) {
        const double v = k == 0 ? prop.back() : base[k - 1].back();
        if (!std::isfinite(v)) continue;
        auto& acc = sums[{n, schemes[k]}];
        acc.first += v;
        ++acc.second;
      }
    }

    // Dominance at every n where both sides are defined.
    double sweep = 0;
    int sweep_terms = 0;
    for (std::size_t j = 0; j < counts.size(); ++j) {
      double worst = std::numeric_limits<double>::infinity();
      for (const auto& b : base) {
        if (!std::isfinite(prop[j]) || !std::isfinite(b[j])) continue;
        ++comparisons;
        if (b[j] > prop[j] + 1e-9 * std::max(1.0, std::abs(prop[j]))) ++violations;
        worst = std::min(worst, (prop[j] - b[j]) / std::max(1e-12, std::abs(b[j])));
      }
      if (std::isfinite(worst)) {
        sweep += worst;
        ++sweep_terms;
      }
    }
    // Peak-to-peak margin against the strongest baseline.
    const int p = argmax_finite(prop);
    if (p < 0) continue;
    double margin = std::numeric_limits<double>::infinity();
    for (const auto& b : base) {
      const int q = argmax_finite(b);
      if (q >= 0) margin = std::min(margin, (prop[p] - b[q]) / std::max(1e-12, std::abs(b[q])));
    }
    const double sweep_margin = sweep_terms ? sweep / sweep_terms : kNaN;
    margins.add({static_cast<long long>(inst), static_cast<long long>(counts[p]), prop[p], margin,
                 sweep_margin});
    ++rated;
    positive += margin > 0;
    margin_sum += margin;
    if (std::isfinite(sweep_margin)) sweep_sum += sweep_margin;
  }

  Table mean{"mean_utility", {"n", "scheme", "mean_utility", "instances"}, {}};
  for (int n : s.sweep.counts)
    for (const auto& scheme : schemes)
      if (auto it = sums.find({n, scheme}); it != sums.end())
        mean.add({static_cast<long long>(n), scheme, it->second.first / it->second.second,
                  static_cast<long long>(it->second.second)});

  const double frac = rated ? static_cast<double>(positive) / rated : 0.0;
  Check c{"mechanism_dominance", violations == 0 && rated > 0 && frac >= 0.95, ""};
  c.detail = str(violations) + " of " + str(comparisons) +
             " comparisons favour a baseline; peak margin > 0 on " + str(positive) + "/" +
             str(rated) + " instances; mean peak margin " +
             percent(rated ? margin_sum / rated : 0) + "; mean sweep margin " +
             percent(rated ? sweep_sum / rated : 0);
  out.tables.push_back(std::move(util));
  out.tables.push_back(std::move(mean));
  out.tables.push_back(std::move(margins));
  out.checks.push_back(std::move(c));
}

// ---------------------------------------------------------------------------
// Utility against node count under several budgets

void run_budget_sweep(const Scenario& s, ResultSet& out) {
  Table util{"utility", {"instance", "R_max", "n", "utility", "normalized"}, {}};
  Table peaks{"peaks", {"instance", "R_max", "peak_n"}, {}};
  std::map<std::pair<double, int>, std::pair<double, int>> sums;
  const double tight = *std::min_element(s.sweep.budgets.begin(), s.sweep.budgets.end());
  int interior = 0, rated = 0;

  for (int inst = 0; inst < s.instances; ++inst) {
    ServerParamsd server;
    const auto nodes = instance_nodes(s, inst, server);
    const auto counts = counts_within(s.sweep.counts, nodes.size());
    std::vector<std::vector<double>> v;
    double top = -std::numeric_limits<double>::infinity();
    for (double R : s.sweep.budgets) {
      server.R_max = R;
      v.emplace_back();
      for (int n : counts) {
        v.back().push_back(proposed_utility(nodes, n, server, s.task));
        if (std::isfinite(v.back().back())) top = std::max(top, v.back().back());
      }
    }
    for (std::size_t b = 0; b < s.sweep.budgets.size(); ++b) {
      const double R = s.sweep.budgets[b];
      for (std::size_t j = 0; j < counts.size(); ++j) {
        const double norm = std::isfinite(v[b][j]) && top > 0 ? v[b][j] / top : kNaN;
        util.add({static_cast<long long>(inst), R, static_cast<long long>(counts[j]), v[b][j], norm});
        if (std::isfinite(norm)) {
          auto& acc = sums[{R, counts[j]}];
          acc.first += norm;
          ++acc.second;
        }
      }
      const int p = argmax_finite(v[b]);
      peaks.add({static_cast<long long>(inst), R, static_cast<long long>(p >= 0 ? counts[p] : -1)});
      if (R == tight && p >= 0) {
        ++rated;
        interior += p > 0 && p + 1 < static_cast<int>(counts.size());
      }
    }
  }
  Table mean{"mean_normalized", {"R_max", "n", "mean_normalized", "instances"}, {}};
  for (const auto& [key, acc] : sums)
    mean.add({key.first, static_cast<long long>(key.second), acc.first / acc.second,
              static_cast<long long>(acc.second)});

  const double frac = rated ? static_cast<double>(interior) / rated : 0.0;
  Check c{"rise_then_fall", rated > 0 && frac >= 0.8, ""};
  c.detail = "interior utility peak at R_max = " + str(tight) + " on " + str(interior) + "/" +
             str(rated) + " instances (" + percent(frac) + ")";
  out.tables.push_back(std::move(util));
  out.tables.push_back(std::move(mean));
  out.tables.push_back(std::move(peaks));
  out.checks.push_back(std::move(c));
}

// ---------------------------------------------------------------------------
// Optimal bid against node cost

void run_bid_cost_sweep(const Scenario& s, ResultSet& out) {
  NodeParamsd base{1, 2, 45, 2 * s.task.t + 0.5, 2 * s.task.t + 10};
  if (!s.nodes.empty()) base = s.nodes.front();
  Table bids{"bids", {"panel", "setting", "sigma", "r_star", "theta_star", "binding"}, {}};
  Table trend{"trend", {"panel", "setting", "spearman"}, {}};
  int ok = 0, series = 0;
  std::string worst;
  double worst_rho = -2;

  auto run_series = [&](const std::string& panel, double setting, ServerParamsd server, NodeParamsd node) {
    std::vector<double> sig, r;
    for (double sigma : s.sweep.sigmas) {
      node.sigma = sigma;
      double r_star = kNaN, theta = kNaN;
      std::string binding = "infeasible";
      try {
        const auto u = optimize_unit_reward(node, server, s.task);
        r_star = u.r;
        theta = best_response(node, u.r);
        binding = describe_binding(u.binding);
      } catch (const InfeasibleError&) {
      }
      bids.add({panel, setting, sigma, r_star, theta, binding});
      sig.push_back(sigma);
      r.push_back(r_star);
    }
    const bool finite = std::all_of(r.begin(), r.end(), [](double v) { return std::isfinite(v); });
    const double rho = finite && r.size() >= 2 ? spearman(sig, r) : kNaN;
    trend.add({panel, setting, rho});
    ++series;
    ok += finite && rho <= -0.9;
    if (!finite || rho > worst_rho) {
      worst_rho = finite ? rho : 2;
      worst = panel + "=" + str(setting);
    }
  };

  for (double beta : s.sweep.betas) {
    ServerParamsd server = s.server;
    server.beta = beta;
    run_series("beta", beta, server, base);
  }
  for (double d : s.sweep.ds) {
    NodeParamsd node = base;
    node.d = d;
    run_series("d", d, s.server, node);
  }
  Check c{"bid_cost_trend", ok == series && series > 0, ""};
  c.detail = str(ok) + "/" + str(series) + " series with rank correlation <= -0.9 between sigma and the optimal bid; least negative " +
             (worst_rho > 1 ? std::string("undefined") : str(worst_rho)) + " at " + worst;
  out.tables.push_back(std::move(bids));
  out.tables.push_back(std::move(trend));
  out.checks.push_back(std::move(c));
}

// ---------------------------------------------------------------------------
// Federated learning driven by the incentive outcome

namespace {

SplitDataset load_fl_data(const Scenario& s, int needed_train) {
  DatasetConfig dc = s.fl.data;
  dc.train_samples = std::max(dc.train_samples, needed_train);
  if (s.fl.data_file.empty()) return generate_dataset(dc);

  std::ifstream in(s.fl.data_file);
  if (!in) throw ConfigError("fl.data_file", "cannot open '" + s.fl.data_file + "'");
  const Dataset all = read_dataset(in);
  if (all.size() < needed_train + dc.test_samples)
    throw ConfigError("fl.data_file", "needs " + std::to_string(needed_train + dc.test_samples) +
                                          " samples, file has " + std::to_string(all.size()));
  const std::vector<int> split{static_cast<int>(all.size()) - dc.test_samples, dc.test_samples};
  auto parts = partition_data(all, split, derive_seed(s.seed, 11));
  return {std::move(parts[0]), std::move(parts[1])};
}

std::vector<double> compute_rates(const Scenario& s, std::size_t count) {
  std::mt19937_64 rng(derive_seed(s.seed, 2000));
  std::vector<double> rates;
  for (std::size_t i = 0; i < count; ++i) rates.push_back(s.fl.compute_rate.draw(rng));
  return rates;
}

FLConfig fl_config(const Scenario& s, std::vector<int> shards, std::vector<double> rates) {
  FLConfig c;
  c.shard_sizes = std::move(shards);
  c.compute_rate = std::move(rates);
  c.round_overhead = s.fl.round_overhead;
  c.local_epochs = s.fl.local_epochs;
  c.learning_rate = s.fl.learning_rate;
  c.rounds = s.fl.rounds;
  c.data = s.fl.data;
  c.partition_seed = derive_seed(s.seed, 3);
  return c;
}

struct FlRun {
  int n;
  std::string scheme;
  std::vector<int> shards;     // over the whole candidate pool
};

}  // namespace

void run_fl_comparison(const Scenario& s, ResultSet& out) {
  ServerParamsd server;
  const auto nodes = instance_nodes(s, 0, server);
  const auto rates = compute_rates(s, nodes.size());

  // Shard sizes for every (n, scheme) pair; dataset size follows the largest.
  std::vector<FlRun> runs;
  auto spread = [&](const Selection& sel, bool unpaid) {
    std::vector<int> shards(nodes.size(), 0);
    for (std::size_t k = 0; k < sel.subset.size(); ++k) {
      const auto& node = nodes[sel.subset[k]];
      const bool active = unpaid || sel.allocation.active[k];
      const double theta = unpaid ? node.theta_max : sel.allocation.profile.theta[k];
      if (active)
        shards[sel.subset[k]] =
            std::max(1, static_cast<int>(std::lround(data_size(cycle_at(node, s.task, theta)))));
    }
    return shards;
  };
  for (int n : counts_within(s.sweep.counts, nodes.size())) {
    try {
      const Selection prop = select_nodes(nodes, static_cast<std::size_t>(n), server, s.task);
      runs.push_back({n, "proposed", spread(prop, false)});
      // Same nodes without payment: every node settles at its slowest cycle.
      runs.push_back({n, "no_incentive", spread(prop, true)});
    } catch (const InfeasibleError& e) {
      out.warnings.push_back("n = " + std::to_string(n) + ": proposed scheme infeasible (" + e.what() + ")");
    }
    for (auto kind : baselines()) {
      try {
        const auto seed = derive_seed(s.seed, 100000 + static_cast<std::uint64_t>(n));
        runs.push_back({n, to_string(kind),
                        spread(baseline_strategy(kind, nodes, static_cast<std::size_t>(n), server, s.task, seed), false)});
      } catch (const InfeasibleError& e) {
        out.warnings.push_back("n = " + std::to_string(n) + ": " + to_string(kind) + " infeasible (" + e.what() + ")");
      }
    }
  }
  int needed = 0;
  for (const auto& r : runs) needed = std::max(needed, std::accumulate(r.shards.begin(), r.shards.end(), 0));
  const SplitDataset data = load_fl_data(s, needed);

  Table summary{"runs",
                {"n", "scheme", "participants", "samples", "round_time", "total_time",
                 "final_accuracy", "final_loss"},
                {}};
  Table rounds{"rounds", {"n", "scheme", "round", "global_loss", "test_accuracy", "modeled_time"}, {}};
  for (const auto& r : runs) {
    const int samples = std::accumulate(r.shards.begin(), r.shards.end(), 0);
    const auto participants = std::count_if(r.shards.begin(), r.shards.end(), [](int v) { return v > 0; });
    if (samples == 0) continue;
    const FLConfig cfg = fl_config(s, r.shards, rates);
    const FLResult res = run_federated(cfg, data);
    for (const auto& rec : res.records)
      rounds.add({static_cast<long long>(r.n), r.scheme, static_cast<long long>(rec.round),
                  rec.global_loss, rec.test_accuracy, rec.modeled_time});
    summary.add({static_cast<long long>(r.n), r.scheme, static_cast<long long>(participants),
                 static_cast<long long>(samples), round_time(cfg), res.records.back().modeled_time,
                 res.records.back().test_accuracy, res.records.back().global_loss});
  }
  out.tables.push_back(std::move(summary));
  out.tables.push_back(std::move(rounds));
}

namespace {

// Aggregation identities on fixed examples and random inputs. Returns the worst error.
double aggregation_error(std::uint64_t seed) {
  auto scalar = [](double v) { return Eigen::MatrixXd::Constant(1, 1, v); };
  double err = 0;
  const std::vector<LocalModel> even{{scalar(1), 1}, {scalar(3), 1}};
  err = std::max(err, std::abs(aggregate(even)(0, 0) - 2));
  const std::vector<LocalModel> skew{{scalar(0), 1}, {scalar(4), 3}};
  err = std::max(err, std::abs(aggregate(skew)(0, 0) - 3));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0, 1);
  std::uniform_int_distribution<int> w(1, 500);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<LocalModel> locals;
    double total = 0;
    for (int i = 0; i < 1 + trial % 10; ++i) {
      Eigen::MatrixXd p(3, 4);
      for (Eigen::Index k = 0; k < p.size(); ++k) p(k) = g(rng);
      locals.push_back({p, static_cast<double>(w(rng))});
      total += locals.back().weight;
    }
    Eigen::MatrixXd expect = Eigen::MatrixXd::Zero(3, 4);
    for (const auto& m : locals) expect += (m.weight / total) * m.params;
    err = std::max(err, (aggregate(locals) - expect).cwiseAbs().maxCoeff() / std::max(1.0, expect.cwiseAbs().maxCoeff()));
  }
  return err;
}

}  // namespace

void run_fl(const Scenario& s, ResultSet& out) {
  ServerParamsd server;
  const auto nodes = instance_nodes(s, 0, server);
  const Equilibrium eq = solve_equilibrium(nodes, server, s.task);
  const auto shards = shard_sizes(eq.profile, nodes, s.task, eq.active);
  const auto rates = compute_rates(s, nodes.size());
  const int needed = std::accumulate(shards.begin(), shards.end(), 0);
  const SplitDataset data = load_fl_data(s, needed);
  const FLConfig cfg = fl_config(s, shards, rates);
  const FLResult res = run_federated(cfg, data);

  Table shard_table{"shards", {"node", "r", "theta", "samples", "compute_rate"}, {}};
  for (std::size_t i = 0; i < nodes.size(); ++i)
    shard_table.add({static_cast<long long>(i), eq.profile.r[i], eq.profile.theta[i],
                     static_cast<long long>(shards[i]), rates[i]});
  Table rounds{"rounds", {"round", "global_loss", "test_accuracy", "modeled_time_cumulative"}, {}};
  int drops = 0;
  for (const auto& rec : res.records) {
    rounds.add({static_cast<long long>(rec.round), rec.global_loss, rec.test_accuracy, rec.modeled_time});
    if (rec.round > 0) drops += rec.global_loss < res.records[static_cast<std::size_t>(rec.round) - 1].global_loss;
  }

  // One node holding the union of the shards must retrace centralized descent.
  FLConfig single = cfg;
  single.shard_sizes = {needed};
  single.compute_rate = {1.0};
  const FLResult one = run_federated(single, data);
  const Dataset pooled = partition_data(data.train, single.shard_sizes, single.partition_seed).front();
  Eigen::MatrixXd w = zero_model(data.train.classes, static_cast<int>(data.train.dim()));
  for (int k = 0; k < single.rounds; ++k)
    for (int e = 0; e < single.local_epochs; ++e) w -= single.learning_rate * loss_gradient(w, pooled);
  const double central_gap = (one.model - w).norm() / std::max(1.0, w.norm());
  const double agg_err = aggregation_error(derive_seed(s.seed, 5));

  const double acc = res.records.back().test_accuracy;
  const double drop_frac = static_cast<double>(drops) / cfg.rounds;
  Check c{"fedavg", central_gap <= 1e-10 && agg_err <= 1e-12 && acc >= 0.9 && drop_frac >= 0.95, ""};
  c.detail = "final accuracy " + str(acc) + " after " + str(cfg.rounds) + " rounds on " +
             str(std::count_if(shards.begin(), shards.end(), [](int v) { return v > 0; })) +
             " nodes; loss fell in " + str(drops) + "/" + str(cfg.rounds) +
             " rounds; single-node gap to centralized descent " + str(central_gap) +
             "; aggregation error " + str(agg_err);
  out.tables.push_back(std::move(shard_table));
  out.tables.push_back(std::move(rounds));
  out.checks.push_back(std::move(c));
}

// ---------------------------------------------------------------------------
// Learned play against the analytic equilibrium

void run_drl(const Scenario& s, ResultSet& out) {
  ServerParamsd server;
  const auto nodes = instance_nodes(s, 0, server);
  const Equilibrium eq = solve_equilibrium(nodes, server, s.task);

  EnvConfig env;
  env.nodes = nodes;
  env.server = server;
  env.task = s.task;
  env.history = s.drl.history;
  env.max_steps = s.drl.max_steps;
  env.observe_posted_bid = s.drl.observe_posted_bid;
  env.server_reward_scale = s.drl.server_reward_scale.value_or(
      std::abs(eq.server_utility) > 0 ? std::abs(eq.server_utility) : 1.0);
  env.node_reward_scale = s.drl.node_reward_scale;
  env.seed = derive_seed(s.seed, 17);

  MaddpgConfig cfg = s.drl.train;
  cfg.seed = derive_seed(s.seed, 19);
  const TrainingResult res = train(cfg, env);

  auto bid_gap = [&](const std::vector<double>& bids) {
    double g = 0;
    for (std::size_t i = 0; i < bids.size(); ++i)
      g = std::max(g, std::abs(bids[i] - eq.profile.r[i]) / eq.profile.r[i]);
    return g;
  };
  auto utility_gap = [&](double v) { return std::abs(v - eq.server_utility) / std::abs(eq.server_utility); };

  Table log{"training", {"episode", "agent", "mean_reward", "action_mean", "noise_scale"}, {}};
  for (const auto& row : res.log)
    log.add({static_cast<long long>(row.episode), row.agent, row.mean_reward, row.action_mean, row.noise_scale});
  Table conv{"convergence", {"episode", "server_bid_gap_vs_SE", "server_utility", "server_utility_gap"}, {}};
  for (const auto& g : res.greedy)
    conv.add({static_cast<long long>(g.episode), bid_gap(g.bids), g.server_utility, utility_gap(g.server_utility)});

  const GreedyEval last = res.greedy.empty() ? greedy_rollout(res.system, 0) : res.greedy.back();
  Table fin{"final", {"node", "se_bid", "drl_bid", "bid_gap", "se_theta", "drl_theta"}, {}};
  for (std::size_t i = 0; i < nodes.size(); ++i)
    fin.add({static_cast<long long>(i), eq.profile.r[i], last.bids[i],
             std::abs(last.bids[i] - eq.profile.r[i]) / eq.profile.r[i], eq.profile.theta[i],
             last.periods[i]});

  const double bg = bid_gap(last.bids), ug = utility_gap(last.server_utility);
  Check c{"drl_convergence", bg <= 0.1 && ug <= 0.1, ""};
  c.detail = "worst server bid gap " + percent(bg) + ", server utility gap " + percent(ug) +
             " after " + str(cfg.episodes) + " episodes (equilibrium utility " +
             str(eq.server_utility) + ")";
  out.tables.push_back(std::move(log));
  out.tables.push_back(std::move(conv));
  out.tables.push_back(std::move(fin));
  out.checks.push_back(std::move(c));
}

// ---------------------------------------------------------------------------
// One instance, solved and verified

void run_equilibrium(const Scenario& s, ResultSet& out) {
  ServerParamsd server;
  const auto nodes = instance_nodes(s, 0, server);
  Table eq_table{"equilibrium", {"node", "r", "theta", "node_utility", "active", "binding"}, {}};
  Table srv{"server", {"solver", "server_utility", "budget_spent", "R_max", "multiplier"}, {}};

  if (s.solver == "analytic") {
    const Equilibrium eq = solve_equilibrium(nodes, server, s.task);
    for (std::size_t i = 0; i < nodes.size(); ++i)
      eq_table.add({static_cast<long long>(i), eq.profile.r[i], eq.profile.theta[i],
                    eq.node_utilities[i], static_cast<long long>(eq.active[i]),
                    describe_binding(eq.binding_constraints[i])});
    const double spent = std::accumulate(eq.profile.r.begin(), eq.profile.r.end(), 0.0);
    srv.add({s.solver, eq.server_utility, spent, server.R_max, eq.kkt_multiplier});
    for (const auto& ex : eq.excluded)
      out.warnings.push_back("node " + std::to_string(ex.node) + " excluded (" + ex.constraint + "): " + ex.reason);
    const Verdict v = verify_equilibrium(eq, nodes, server, s.task);
    out.checks.push_back({"equilibrium_verified", v.accepted,
                          v.accepted ? "no profitable node or server deviation on the verification grids"
                                     : v.witness->describe()});
  } else {
    const Selection sel = baseline_strategy(parse_baseline(s.solver), nodes, server, s.task,
                                            derive_seed(s.seed, 23));
    double spent = 0;
    for (std::size_t k = 0; k < sel.subset.size(); ++k) {
      const double r = sel.allocation.profile.r[k], theta = sel.allocation.profile.theta[k];
      eq_table.add({static_cast<long long>(sel.subset[k]), r, theta,
                    node_utility(r, theta, nodes[sel.subset[k]].sigma),
                    static_cast<long long>(sel.allocation.active[k]), std::string("none")});
      spent += r;
    }
    srv.add({s.solver, sel.utility, spent, server.R_max, kNaN});
    out.checks.push_back({"budget_respected", spent <= server.R_max * (1 + 1e-12),
                          "spent " + str(spent) + " of " + str(server.R_max)});
  }
  out.tables.push_back(std::move(eq_table));
  out.tables.push_back(std::move(srv));
}

// ---------------------------------------------------------------------------
// Brute-force checks

Check check_equilibrium_oracle(std::uint64_t seed, Table* detail) {
  std::mt19937_64 rng(seed);
  int ok = 0;
  const int instances = 25;
  double worst_r = 0, worst_theta = 0, worst_v = 0;
  // Theta moves by (theta/r) per unit r, so the r step alone limits how well
  // the grid can resolve theta on steep instances.
  double steepest_miss = 0;
  for (int k = 0; k < instances; ++k) {
    const NodeParamsd node = reference_node(rng);
    const ServerParamsd server = reference_server(rng);
    const std::vector<NodeParamsd> nodes{node};
    const Equilibrium eq = solve_equilibrium(nodes, server, kReferenceTask);
    const auto grid = oracle::grid_stackelberg(node, server, kReferenceTask, node.sigma / node.theta_max,
                                               node.sigma / node.theta_min, 1e-3, 1e-2);
    const double dr = std::abs(eq.profile.r[0] - grid.r);
    const double dt = std::abs(eq.profile.theta[0] - grid.theta);
    const double dv = std::abs(eq.server_utility - grid.value) / std::abs(grid.value);
    worst_r = std::max(worst_r, dr);
    worst_theta = std::max(worst_theta, dt);
    worst_v = std::max(worst_v, dv);
    const bool match = dr <= 1e-2 && dt <= 1e-2 && dv <= 1e-3;
    ok += match;
    if (!match) steepest_miss = std::max(steepest_miss, eq.profile.theta[0] / eq.profile.r[0]);
    if (detail)
      detail->add({static_cast<long long>(k), eq.profile.r[0], grid.r, eq.profile.theta[0], grid.theta,
                   eq.server_utility, grid.value});
  }
  return {"equilibrium_oracle", ok == instances,
          str(ok) + "/" + str(instances) + " single-node instances match the grid search; worst |dr| " +
              str(worst_r) + ", |dtheta| " + str(worst_theta) + ", relative dV " + str(worst_v) +
              (ok == instances ? std::string()
                               : "; steepest mismatched instance has theta/r " + str(steepest_miss) +
                                     ", so one r step moves theta by " + str(steepest_miss * 1e-3))};
}

Check check_best_response(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  const int draws = 1000;
  int ok = 0;
  double worst = 0;
  for (int k = 0; k < draws; ++k) {
    const NodeParamsd node = reference_node(rng);
    const double r = 2 * node.sigma / node.theta_min * u(rng);
    const double best = node_utility(r, best_response(node, r), node.sigma);
    double excess = -std::numeric_limits<double>::infinity();
    for (double theta = node.theta_min; theta <= node.theta_max + 1e-12; theta += 1e-2)
      excess = std::max(excess, node_utility(r, theta, node.sigma) - best);
    excess = std::max(excess, node_utility(r, node.theta_max, node.sigma) - best);
    worst = std::max(worst, excess);
    ok += excess <= 1e-6;
  }
  return {"best_response", ok == draws,
          str(ok) + "/" + str(draws) + " draws where no grid period beats the best response; largest grid excess " + str(worst)};
}

Check check_derivatives(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  const int points = 1000;
  int node_ok = 0, server_ok = 0, concave = 0, concave_points = 0;
  double worst = 0;
  for (int k = 0; k < points; ++k) {
    NodeParamsd n = reference_node(rng);
    const ServerParamsd s = reference_server(rng);

    // Follower utility in theta.
    const double r = n.sigma / n.theta_max + (n.sigma / n.theta_min - n.sigma / n.theta_max) * u(rng);
    const double theta = n.theta_min + (n.theta_max - n.theta_min) * u(rng);
    const auto nd = node_utility_derivatives(r, theta, n.sigma);
    const double h1 = 1e-6 * theta;
    const double fd1 = oracle::central_difference([&](double x) { return node_utility(r, x, n.sigma); }, theta, h1);
    const double fd2 = oracle::central_difference(
        [&](double x) { return node_utility_derivatives(r, x, n.sigma).first; }, theta, h1);
    const double e1 = std::max(std::abs(fd1 - nd.first) / std::max(1.0, std::abs(nd.first)),
                               std::abs(fd2 - nd.second) / std::max(1.0, std::abs(nd.second)));
    node_ok += e1 <= 1e-5;

    // Reduced leader objective in r on its domain (0, sigma/(a t)).
    const double cap = n.sigma / (n.a * kReferenceTask.t);
    const double x = cap * (0.02 + 0.96 * u(rng));
    const auto sd = reduced_server_utility_derivatives(x, n, s, kReferenceTask);
    const double h2 = 1e-6 * x;
    const double g1 = oracle::central_difference(
        [&](double y) { return reduced_server_utility(y, n, s, kReferenceTask); }, x, h2);
    const double g2 = oracle::central_difference(
        [&](double y) { return reduced_server_utility_derivatives(y, n, s, kReferenceTask).first; }, x, h2);
    const double e2 = std::max(std::abs(g1 - sd.first) / std::max(1.0, std::abs(sd.first)),
                               std::abs(g2 - sd.second) / std::max(1.0, std::abs(sd.second)));
    server_ok += e2 <= 1e-5;
    worst = std::max({worst, e1, e2});
    if (n.a > 1) {
      ++concave_points;
      concave += sd.second < 0;
    }
  }
  return {"derivatives", node_ok == points && server_ok == points && concave == concave_points,
          "closed forms within 1e-5 of central differences at " + str(node_ok) + "/" + str(points) +
              " follower and " + str(server_ok) + "/" + str(points) +
              " leader points (worst " + str(worst) + "); leader second derivative negative at " +
              str(concave) + "/" + str(concave_points) + " points with a > 1"};
}

Check check_neural_gradients(std::uint64_t seed) {
  using Matrix = Eigen::MatrixXd;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> width(1, 8);
  std::normal_distribution<double> g(0, 1);
  const Activation hidden[] = {Activation::tanh, Activation::sigmoid, Activation::identity};
  const Activation heads[] = {Activation::identity, Activation::sigmoid, Activation::tanh};
  auto random = [&](Eigen::Index r, Eigen::Index c) {
    Matrix m(r, c);
    for (Eigen::Index k = 0; k < m.size(); ++k) m(k) = g(rng);
    return m;
  };
  int ok = 0;
  const int nets = 20;
  double worst = 0;
  for (int k = 0; k < nets; ++k) {
    const std::vector<int> widths{width(rng), width(rng), width(rng), width(rng)};
    Networkd net = make_network(widths, hidden[k % 3], heads[(k / 3) % 3], derive_seed(seed, k));
    if (net.bounded())
      set_head_range(net, Eigen::VectorXd(Eigen::VectorXd::Constant(widths.back(), -2.0)),
                     Eigen::VectorXd(Eigen::VectorXd::Constant(widths.back(), 3.0)));
    const Matrix x = random(widths.front(), 3);
    const Matrix w = random(widths.back(), 3);
    auto probe = [&](const Networkd& n, const Matrix& in) { return (forward(n, in).array() * w.array()).sum(); };
    const auto bp = backward(net, x, w);
    const double h = 1e-5;
    double err = 0;
    auto compare = [&](double fd, double an) {
      err = std::max(err, std::abs(fd - an) / std::max(1e-2, std::abs(an)));
    };
    for (std::size_t l = 0; l < net.weights.layers(); ++l) {
      for (Eigen::Index i = 0; i < net.weights.W[l].size(); ++i) {
        Networkd p = net, m = net;
        p.weights.W[l].data()[i] += h;
        m.weights.W[l].data()[i] -= h;
        compare((probe(p, x) - probe(m, x)) / (2 * h), bp.grad.W[l].data()[i]);
      }
      for (Eigen::Index i = 0; i < net.weights.b[l].size(); ++i) {
        Networkd p = net, m = net;
        p.weights.b[l](i) += h;
        m.weights.b[l](i) -= h;
        compare((probe(p, x) - probe(m, x)) / (2 * h), bp.grad.b[l](i));
      }
    }
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      Matrix xp = x, xm = x;
      xp.data()[i] += h;
      xm.data()[i] -= h;
      compare((probe(net, xp) - probe(net, xm)) / (2 * h), bp.input.data()[i]);
    }
    worst = std::max(worst, err);
    ok += err <= 1e-4;
  }

  // Target blending endpoints are exact.
  const Networkd main = make_network({3, 5, 2}, Activation::tanh, Activation::identity, derive_seed(seed, 99));
  Networkd target = make_network({3, 5, 2}, Activation::tanh, Activation::identity, derive_seed(seed, 98));
  const Networkd before = target;
  bool exact = true;
  soft_update(target, main, 0.0);
  for (std::size_t l = 0; l < main.weights.layers(); ++l)
    exact = exact && target.weights.W[l] == before.weights.W[l] && target.weights.b[l] == before.weights.b[l];
  soft_update(target, main, 1.0);
  for (std::size_t l = 0; l < main.weights.layers(); ++l)
    exact = exact && target.weights.W[l] == main.weights.W[l] && target.weights.b[l] == main.weights.b[l];

  return {"neural_gradients", ok == nets && exact,
          str(ok) + "/" + str(nets) + " random networks within 1e-4 of finite differences (worst " +
              str(worst) + "); soft update endpoints " + (exact ? "exact" : "inexact")};
}

Check check_aoi_discordance() {
  double worst = 0;
  for (int c = 1; c <= 12; ++c)
    for (int a = 1; a <= 8; ++a)
      for (double t : {0.5, 1.0, 2.0}) {
        const auto o = discrete_cycle_oracle(c, a, t);
        worst = std::max({worst, std::abs(o.aoi - prose_average_aoi(c, a, t)),
                          std::abs(o.latency - prose_average_latency(c, a, t))});
      }
  const auto o = discrete_cycle_oracle(3, 2, 1.0);
  const CycleParamsd p{5.0, 2, 1.0, 10.0, 10.0};
  const double aoi = average_aoi(p), latency = average_service_latency(p);
  const bool pinned = std::abs(o.aoi - 1.2) <= 1e-12 && std::abs(o.latency - 2.2) <= 1e-12 &&
                      std::abs(aoi - 2.0) <= 1e-12 && std::abs(latency - 5.8) <= 1e-12;
  return {"aoi_discordance", worst <= 1e-12 && pinned,
          "slot enumeration matches the slot-averaged forms to " + str(worst) +
              "; at c=3, a=2, t=1 the enumeration gives AoI " + str(o.aoi) + ", latency " +
              str(o.latency) + " while the period forms give " + str(aoi) + ", " + str(latency)};
}

void run_oracles(const Scenario& s, ResultSet& out) {
  Table eq{"equilibrium_oracle",
           {"instance", "r_solver", "r_grid", "theta_solver", "theta_grid", "V_solver", "V_grid"}, {}};
  out.checks.push_back(check_equilibrium_oracle(derive_seed(s.seed, 31), &eq));
  out.checks.push_back(check_best_response(derive_seed(s.seed, 32)));
  out.checks.push_back(check_derivatives(derive_seed(s.seed, 33)));
  out.checks.push_back(check_neural_gradients(derive_seed(s.seed, 34)));
  out.checks.push_back(check_aoi_discordance());
  out.tables.push_back(std::move(eq));
}

}  // namespace satfl
