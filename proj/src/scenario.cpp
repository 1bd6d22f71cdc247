#include "satfl/scenario.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "satfl/error.hpp"

namespace satfl {

namespace pt = boost::property_tree;

double Range::draw(std::mt19937_64& rng) const {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

const std::vector<std::string>& scenario_kinds() {
  static const std::vector<std::string> kinds{"fig2", "fig3",  "fig5", "fig6",        "fig8",
                                              "fig9", "fig15", "fl",   "equilibrium", "oracle"};
  return kinds;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 over the pair
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

// Known keys per section. Node entries (node0, node1, ...) are matched separately.
const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"scenario", {"name", "kind", "solver", "seed", "instances"}},
      {"task", {"T", "t"}},
      {"server", {"tau", "lambda", "rho", "beta", "R_max", "A_max", "E_max"}},
      {"nodes", {"count", "sigma", "a", "d", "theta_min_offset", "theta_span"}},
      {"sweep",
       {"counts", "budgets", "a", "d", "rho", "theta_offset", "theta_points", "sigmas", "betas",
        "ds"}},
      {"maddpg",
       {"episodes", "batch", "buffer_capacity", "warmup", "updates_per_step", "gamma",
        "soft_rate", "actor_lr", "server_actor_lr", "critic_lr", "saturation_penalty", "hidden",
        "activation", "noise_start", "noise_end", "noise_decay_episodes",
        "terminal_on_truncation", "history", "max_steps", "observe_posted_bid",
        "server_reward_scale", "node_reward_scale"}},
      {"fl",
       {"rounds", "local_epochs", "learning_rate", "round_overhead", "compute_rate", "classes",
        "dim", "separation", "train_samples", "test_samples", "data_file"}},
  };
  return keys;
}

bool is_node_key(const std::string& key) {
  return key.size() > 4 && key.rfind("node", 0) == 0 &&
         std::all_of(key.begin() + 4, key.end(), [](char c) { return c >= '0' && c <= '9'; });
}

class Reader {
 public:
  Reader(const pt::ptree& tree, std::vector<std::string>& warnings)
      : tree_(tree), warnings_(warnings) {}

  std::optional<std::string> raw(const std::string& field) const {
    if (auto v = tree_.get_optional<std::string>(pt::ptree::path_type(field, '.'))) return *v;
    return std::nullopt;
  }

  static std::vector<std::string> tokens(const std::string& text) {
    std::istringstream is(text);
    std::vector<std::string> out;
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
  }

  static double number(const std::string& field, const std::string& tok) {
    if (tok == "inf" || tok == "+inf") return std::numeric_limits<double>::infinity();
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size() || std::isnan(v))
      throw ConfigError(field, "expected a number, got '" + tok + "'");
    return v;
  }

  static long long integer(const std::string& field, const std::string& tok) {
    const double v = number(field, tok);
    if (v != std::floor(v) || !std::isfinite(v) || std::abs(v) > 9e15)
      throw ConfigError(field, "expected an integer, got '" + tok + "'");
    return static_cast<long long>(v);
  }

  template <typename F>
  static auto single(const std::string& field, const std::string& text, F parse) {
    const auto toks = tokens(text);
    if (toks.size() != 1) throw ConfigError(field, "expected one value");
    return parse(toks[0]);
  }

  void get(const std::string& field, double& out) const {
    if (auto v = raw(field)) out = single(field, *v, [&](const std::string& t) { return number(field, t); });
  }
  void get(const std::string& field, int& out) const {
    if (auto v = raw(field))
      out = static_cast<int>(single(field, *v, [&](const std::string& t) { return integer(field, t); }));
  }
  void get(const std::string& field, std::uint64_t& out) const {
    if (auto v = raw(field)) {
      const auto toks = tokens(*v);
      if (toks.size() != 1) throw ConfigError(field, "expected one value");
      std::size_t used = 0;
      try {
        out = std::stoull(toks[0], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != toks[0].size() || toks[0][0] == '-')
        throw ConfigError(field, "expected an unsigned integer, got '" + toks[0] + "'");
    }
  }
  void get(const std::string& field, bool& out) const {
    if (auto v = raw(field)) {
      const auto toks = tokens(*v);
      if (toks.size() == 1 && (toks[0] == "true" || toks[0] == "1"))
        out = true;
      else if (toks.size() == 1 && (toks[0] == "false" || toks[0] == "0"))
        out = false;
      else
        throw ConfigError(field, "expected true or false");
    }
  }
  void get(const std::string& field, std::string& out) const {
    if (auto v = raw(field)) {
      const auto toks = tokens(*v);
      if (toks.size() != 1) throw ConfigError(field, "expected one word");
      out = toks[0];
    }
  }
  void get(const std::string& field, Range& out) const {
    if (auto v = raw(field)) {
      const auto toks = tokens(*v);
      if (toks.empty() || toks.size() > 2) throw ConfigError(field, "expected 'lo hi' or one value");
      out.lo = number(field, toks[0]);
      out.hi = toks.size() == 2 ? number(field, toks[1]) : out.lo;
      if (!(out.lo <= out.hi) || !std::isfinite(out.lo) || !std::isfinite(out.hi))
        throw ConfigError(field, "range must be finite with lo <= hi");
    }
  }
  void get(const std::string& field, std::vector<double>& out) const {
    if (auto v = raw(field)) {
      out.clear();
      for (const auto& tok : tokens(*v)) out.push_back(number(field, tok));
      if (out.empty()) throw ConfigError(field, "list is empty");
    }
  }
  void get(const std::string& field, std::vector<int>& out) const {
    if (auto v = raw(field)) {
      out.clear();
      for (const auto& tok : tokens(*v)) {
        if (auto dots = tok.find(".."); dots != std::string::npos) {
          const auto lo = integer(field, tok.substr(0, dots));
          const auto hi = integer(field, tok.substr(dots + 2));
          if (hi < lo || hi - lo > 100000) throw ConfigError(field, "bad integer range '" + tok + "'");
          for (auto k = lo; k <= hi; ++k) out.push_back(static_cast<int>(k));
        } else {
          out.push_back(static_cast<int>(integer(field, tok)));
        }
      }
      if (out.empty()) throw ConfigError(field, "list is empty");
    }
  }

  void warn_outside(const std::string& field, double v, double lo, double hi) const {
    if (raw(field) && (v < lo || v > hi)) {
      std::ostringstream os;
      os << field << ": " << v << " is outside the reference range [" << lo << ", " << hi
         << "], kept as given";
      warnings_.push_back(os.str());
    }
  }
  void warn_outside(const std::string& field, const Range& r, double lo, double hi) const {
    if (raw(field) && (r.lo < lo || r.hi > hi)) {
      std::ostringstream os;
      os << field << ": [" << r.lo << ", " << r.hi << "] leaves the reference range [" << lo
         << ", " << hi << "], kept as given";
      warnings_.push_back(os.str());
    }
  }

 private:
  const pt::ptree& tree_;
  std::vector<std::string>& warnings_;
};

void check_keys(const pt::ptree& tree) {
  const auto& known = known_keys();
  for (const auto& [section, body] : tree) {
    auto it = known.find(section);
    if (it == known.end()) throw ConfigError(section, "unknown section");
    if (!body.data().empty() && body.empty())
      throw ConfigError(section, "key outside any section");
    for (const auto& [key, value] : body) {
      if (section == "nodes" && is_node_key(key)) continue;
      if (!it->second.count(key)) throw ConfigError(section + "." + key, "unknown key");
    }
  }
}

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError(field, what);
}

Scenario from_tree(const pt::ptree& tree, std::vector<std::string> warnings) {
  check_keys(tree);
  Scenario s;
  s.warnings = std::move(warnings);
  Reader in(tree, s.warnings);

  in.get("scenario.name", s.name);
  in.get("scenario.kind", s.kind);
  in.get("scenario.solver", s.solver);
  in.get("scenario.seed", s.seed);
  in.get("scenario.instances", s.instances);
  require(std::find(scenario_kinds().begin(), scenario_kinds().end(), s.kind) !=
              scenario_kinds().end(),
          "scenario.kind", "unknown kind '" + s.kind + "'");
  require(s.instances >= 1, "scenario.instances", "must be >= 1");
  if (s.solver != "analytic" && s.solver != "maddpg") {
    try {
      parse_baseline(s.solver);
    } catch (const std::exception&) {
      throw ConfigError("scenario.solver", "unknown solver '" + s.solver + "'");
    }
  }
  require(s.name.find_first_of("/\\") == std::string::npos && !s.name.empty(), "scenario.name",
          "must be a plain file name");

  in.get("task.T", s.task.T);
  in.get("task.t", s.task.t);
  require(s.task.T > 0 && std::isfinite(s.task.T), "task.T", "must be positive");
  require(s.task.t > 0 && std::isfinite(s.task.t), "task.t", "must be positive");
  in.warn_outside("task.T", s.task.T, 10, 10);
  in.warn_outside("task.t", s.task.t, 1, 1);

  in.get("server.tau", s.server.tau);
  in.get("server.lambda", s.server.lambda);
  in.get("server.rho", s.rho);
  in.get("server.beta", s.server.beta);
  in.get("server.R_max", s.server.R_max);
  in.get("server.A_max", s.server.A_max);
  in.get("server.E_max", s.server.E_max);
  s.server.rho = s.rho.lo;
  in.warn_outside("server.rho", s.rho, 3, 7);
  in.warn_outside("server.beta", s.server.beta, 3, 3);
  require(s.rho.lo > 0, "server.rho", "must be positive");
  require(s.server.tau >= 0 && std::isfinite(s.server.tau), "server.tau", "must be finite and >= 0");
  require(s.server.lambda >= 0 && std::isfinite(s.server.lambda), "server.lambda",
          "must be finite and >= 0");
  require(s.server.beta >= 0 && std::isfinite(s.server.beta), "server.beta", "must be finite and >= 0");
  require(s.server.R_max > 0, "server.R_max", "must be positive");
  require(s.server.A_max > 0, "server.A_max", "must be positive");
  require(s.server.E_max > 0, "server.E_max", "must be positive");

  // Explicit nodes are read in index order; gaps are errors.
  if (auto nodes = tree.get_child_optional("nodes")) {
    std::map<int, std::string> explicit_nodes;
    for (const auto& [key, value] : *nodes)
      if (is_node_key(key)) explicit_nodes[std::stoi(key.substr(4))] = value.data();
    int expect = 0;
    for (const auto& [index, text] : explicit_nodes) {
      const std::string field = "nodes.node" + std::to_string(index);
      require(index == expect++, field, "node indices must be consecutive from 0");
      const auto toks = Reader::tokens(text);
      require(toks.size() == 5, field, "expected 'sigma a d theta_min theta_max'");
      NodeParamsd n;
      n.sigma = Reader::number(field, toks[0]);
      n.a = static_cast<int>(Reader::integer(field, toks[1]));
      n.d = Reader::number(field, toks[2]);
      n.theta_min = Reader::number(field, toks[3]);
      n.theta_max = Reader::number(field, toks[4]);
      try {
        validate(n, s.task);
      } catch (const std::exception& e) {
        throw ConfigError(field, e.what());
      }
      if (n.a < 1 || n.a > 8 || n.d < 10 || n.d > 80) {
        std::ostringstream os;
        os << field << ": a = " << n.a << ", d = " << n.d
           << " leaves the reference ranges a in [1, 8], d in [10, 80], kept as given";
        s.warnings.push_back(os.str());
      }
      s.nodes.push_back(n);
    }
  }
  auto& g = s.generator;
  in.get("nodes.count", g.count);
  in.get("nodes.sigma", g.sigma);
  in.get("nodes.a", g.a);
  in.get("nodes.d", g.d);
  in.get("nodes.theta_min_offset", g.theta_min_offset);
  in.get("nodes.theta_span", g.theta_span);
  require(g.count >= 1, "nodes.count", "must be >= 1");
  require(g.sigma.lo > 0, "nodes.sigma", "must be positive");
  require(g.a.lo >= 1 && std::ceil(g.a.lo) <= std::floor(g.a.hi), "nodes.a",
          "must contain an integer >= 1");
  require(g.d.lo > 0, "nodes.d", "must be positive");
  require(g.theta_min_offset.lo > 0, "nodes.theta_min_offset", "must be positive");
  require(g.theta_span.lo > 0, "nodes.theta_span", "must be positive");
  in.warn_outside("nodes.count", g.count, 5, 25);
  in.warn_outside("nodes.a", g.a, 1, 8);
  in.warn_outside("nodes.d", g.d, 10, 80);
  if (!s.nodes.empty() && in.raw("nodes.count"))
    require(g.count == static_cast<int>(s.nodes.size()), "nodes.count",
            "does not match the number of explicit nodes");

  auto& w = s.sweep;
  in.get("sweep.counts", w.counts);
  in.get("sweep.budgets", w.budgets);
  in.get("sweep.a", w.a);
  in.get("sweep.d", w.d);
  in.get("sweep.rho", w.rho);
  in.get("sweep.theta_offset", w.theta_offset);
  in.get("sweep.theta_points", w.theta_points);
  in.get("sweep.sigmas", w.sigmas);
  in.get("sweep.betas", w.betas);
  in.get("sweep.ds", w.ds);
  for (int n : w.counts) require(n >= 1, "sweep.counts", "counts must be >= 1");
  for (double b : w.budgets) require(b > 0, "sweep.budgets", "budgets must be positive");
  for (int a : w.a) require(a >= 1, "sweep.a", "a must be >= 1");
  for (double d : w.d) require(d > 0, "sweep.d", "d must be positive");
  for (double r : w.rho) require(r > 0, "sweep.rho", "rho must be positive");
  for (double v : w.sigmas) require(v > 0, "sweep.sigmas", "sigmas must be positive");
  for (double v : w.betas) require(v >= 0, "sweep.betas", "betas must be >= 0");
  for (double v : w.ds) require(v > 0, "sweep.ds", "ds must be positive");
  require(w.theta_offset.lo > 0, "sweep.theta_offset", "must be positive");
  require(w.theta_points >= 3, "sweep.theta_points", "must be >= 3");
  for (int a : w.a) in.warn_outside("sweep.a", a, 1, 8);
  for (double d : w.d) in.warn_outside("sweep.d", d, 10, 80);
  for (double r : w.rho) in.warn_outside("sweep.rho", r, 3, 7);

  auto& m = s.drl.train;
  in.get("maddpg.episodes", m.episodes);
  in.get("maddpg.batch", m.batch);
  in.get("maddpg.buffer_capacity", m.buffer_capacity);
  in.get("maddpg.warmup", m.warmup);
  in.get("maddpg.updates_per_step", m.updates_per_step);
  in.get("maddpg.gamma", m.gamma);
  in.get("maddpg.soft_rate", m.soft_rate);
  in.get("maddpg.actor_lr", m.actor_lr);
  in.get("maddpg.server_actor_lr", m.server_actor_lr);
  in.get("maddpg.critic_lr", m.critic_lr);
  in.get("maddpg.saturation_penalty", m.saturation_penalty);
  in.get("maddpg.hidden", m.hidden);
  if (auto act = in.raw("maddpg.activation")) {
    try {
      m.hidden_activation = parse_activation(Reader::tokens(*act).empty() ? "" : Reader::tokens(*act)[0]);
    } catch (const std::exception&) {
      throw ConfigError("maddpg.activation", "unknown activation '" + *act + "'");
    }
  }
  in.get("maddpg.noise_start", m.noise_start);
  in.get("maddpg.noise_end", m.noise_end);
  in.get("maddpg.noise_decay_episodes", m.noise_decay_episodes);
  in.get("maddpg.terminal_on_truncation", m.terminal_on_truncation);
  in.get("maddpg.history", s.drl.history);
  in.get("maddpg.max_steps", s.drl.max_steps);
  in.get("maddpg.observe_posted_bid", s.drl.observe_posted_bid);
  if (auto scale = in.raw("maddpg.server_reward_scale"); scale && Reader::tokens(*scale) != std::vector<std::string>{"auto"}) {
    double v = 0;
    in.get("maddpg.server_reward_scale", v);
    require(v > 0 && std::isfinite(v), "maddpg.server_reward_scale", "must be positive or 'auto'");
    s.drl.server_reward_scale = v;
  }
  in.get("maddpg.node_reward_scale", s.drl.node_reward_scale);
  require(m.episodes >= 0, "maddpg.episodes", "must be >= 0");
  require(m.batch >= 1, "maddpg.batch", "must be >= 1");
  require(m.buffer_capacity >= static_cast<std::size_t>(m.batch), "maddpg.buffer_capacity",
          "must hold at least one batch");
  require(m.warmup >= m.batch, "maddpg.warmup", "must be >= batch");
  require(m.updates_per_step >= 0, "maddpg.updates_per_step", "must be >= 0");
  require(m.gamma >= 0 && m.gamma < 1, "maddpg.gamma", "must be in [0, 1)");
  require(m.soft_rate >= 0 && m.soft_rate <= 1, "maddpg.soft_rate", "must be in [0, 1]");
  require(m.actor_lr > 0, "maddpg.actor_lr", "must be positive");
  require(m.server_actor_lr > 0, "maddpg.server_actor_lr", "must be positive");
  require(m.critic_lr > 0, "maddpg.critic_lr", "must be positive");
  require(m.saturation_penalty >= 0, "maddpg.saturation_penalty", "must be >= 0");
  require(m.hidden >= 1, "maddpg.hidden", "must be >= 1");
  require(m.noise_start >= m.noise_end && m.noise_end >= 0, "maddpg.noise_end",
          "need noise_start >= noise_end >= 0");
  require(m.noise_decay_episodes >= 1, "maddpg.noise_decay_episodes", "must be >= 1");
  require(s.drl.history >= 1, "maddpg.history", "must be >= 1");
  require(s.drl.max_steps >= 1, "maddpg.max_steps", "must be >= 1");
  require(s.drl.node_reward_scale > 0, "maddpg.node_reward_scale", "must be positive");
  m.seed = s.seed;

  auto& f = s.fl;
  in.get("fl.rounds", f.rounds);
  in.get("fl.local_epochs", f.local_epochs);
  in.get("fl.learning_rate", f.learning_rate);
  in.get("fl.round_overhead", f.round_overhead);
  in.get("fl.compute_rate", f.compute_rate);
  in.get("fl.classes", f.data.classes);
  in.get("fl.dim", f.data.dim);
  in.get("fl.separation", f.data.separation);
  in.get("fl.train_samples", f.data.train_samples);
  in.get("fl.test_samples", f.data.test_samples);
  in.get("fl.data_file", f.data_file);
  require(f.rounds >= 1, "fl.rounds", "must be >= 1");
  require(f.local_epochs >= 0, "fl.local_epochs", "must be >= 0");
  require(f.learning_rate > 0, "fl.learning_rate", "must be positive");
  require(f.round_overhead >= 0, "fl.round_overhead", "must be >= 0");
  require(f.compute_rate.lo > 0, "fl.compute_rate", "must be positive");
  require(f.data.classes >= 2, "fl.classes", "must be >= 2");
  require(f.data.dim >= 1, "fl.dim", "must be >= 1");
  require(f.data.separation >= 0, "fl.separation", "must be >= 0");
  require(f.data.train_samples >= 1, "fl.train_samples", "must be >= 1");
  require(f.data.test_samples >= 1, "fl.test_samples", "must be >= 1");
  f.data.seed = derive_seed(s.seed, 7);

  if (s.kind == "fig15" && s.nodes.empty())
    throw ConfigError("nodes", "fig15 needs explicit nodes");
  if (s.solver == "maddpg" && s.kind != "fig15")
    throw ConfigError("scenario.solver", "maddpg is only available for fig15 scenarios");
  return s;
}

pt::ptree read_tree(std::istream& is, const std::string& source) {
  pt::ptree tree;
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("file", source + ": line " + std::to_string(e.line()) + ": " + e.message());
  }
  return tree;
}

}  // namespace

Scenario parse_scenario(std::istream& is, const std::string& source) {
  return from_tree(read_tree(is, source), {});
}

Scenario load_scenario(const std::string& path) { return load_scenario(path, {}); }

Scenario load_scenario(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("scenario", "cannot open '" + path + "'");
  pt::ptree tree = read_tree(in, path);
  std::vector<std::string> warnings;
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    const std::string key = o.substr(0, eq);
    if (eq == std::string::npos || key.find('.') == std::string::npos)
      throw ConfigError(key, "override must look like section.key=value");
    tree.put(pt::ptree::path_type(key, '.'), o.substr(eq + 1));
    warnings.push_back("override " + key + " = " + o.substr(eq + 1));
  }
  return from_tree(tree, std::move(warnings));
}

std::vector<NodeParamsd> instance_nodes(const Scenario& s, int instance, ServerParamsd& server) {
  std::mt19937_64 rng(derive_seed(s.seed, 1000 + static_cast<std::uint64_t>(instance)));
  server = s.server;
  server.rho = s.rho.draw(rng);
  if (!s.nodes.empty()) return s.nodes;
  const auto& g = s.generator;
  const int a_lo = static_cast<int>(std::ceil(g.a.lo)), a_hi = static_cast<int>(std::floor(g.a.hi));
  std::uniform_int_distribution<int> draw_a(a_lo, a_hi);
  std::vector<NodeParamsd> nodes;
  for (int i = 0; i < g.count; ++i) {
    NodeParamsd n;
    n.a = draw_a(rng);
    n.sigma = g.sigma.draw(rng);
    n.d = g.d.draw(rng);
    n.theta_min = n.a * s.task.t + g.theta_min_offset.draw(rng);
    n.theta_max = n.theta_min + g.theta_span.draw(rng);
    nodes.push_back(n);
  }
  return nodes;
}

}  // namespace satfl
