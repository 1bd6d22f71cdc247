#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "satfl/error.hpp"
#include "satfl/flsim.hpp"

using namespace satfl;
using Eigen::MatrixXd;

namespace {

// Plain-loop softmax regression, written independently of the Eigen code path.
struct LoopModel {
  std::vector<std::vector<double>> w;  // classes x (dim + 1)
};

std::vector<double> loop_proba(const LoopModel& m, const Dataset& d, Eigen::Index k) {
  const std::size_t C = m.w.size(), D = m.w[0].size() - 1;
  std::vector<double> z(C);
  double peak = -1e300;
  for (std::size_t c = 0; c < C; ++c) {
    double s = m.w[c][D];
    for (std::size_t j = 0; j < D; ++j) s += m.w[c][j] * d.features(static_cast<Eigen::Index>(j), k);
    z[c] = s;
    peak = std::max(peak, s);
  }
  double total = 0;
  for (auto& v : z) total += (v = std::exp(v - peak));
  for (auto& v : z) v /= total;
  return z;
}

void loop_descent_step(LoopModel& m, const Dataset& d, double rate) {
  const std::size_t C = m.w.size(), D = m.w[0].size() - 1;
  std::vector<std::vector<double>> g(C, std::vector<double>(D + 1, 0.0));
  for (Eigen::Index k = 0; k < d.size(); ++k) {
    auto p = loop_proba(m, d, k);
    p[static_cast<std::size_t>(d.labels(k))] -= 1;
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t j = 0; j < D; ++j) g[c][j] += p[c] * d.features(static_cast<Eigen::Index>(j), k);
      g[c][D] += p[c];
    }
  }
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t j = 0; j <= D; ++j) m.w[c][j] -= rate * g[c][j] / static_cast<double>(d.size());
}

double loop_accuracy(const LoopModel& m, const Dataset& d) {
  int hits = 0;
  for (Eigen::Index k = 0; k < d.size(); ++k) {
    const auto p = loop_proba(m, d, k);
    hits += static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin()) == d.labels(k);
  }
  return static_cast<double>(hits) / static_cast<double>(d.size());
}

MatrixXd to_matrix(const LoopModel& m) {
  MatrixXd out(static_cast<Eigen::Index>(m.w.size()), static_cast<Eigen::Index>(m.w[0].size()));
  for (std::size_t c = 0; c < m.w.size(); ++c)
    for (std::size_t j = 0; j < m.w[0].size(); ++j)
      out(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j)) = m.w[c][j];
  return out;
}

double rel_diff(const MatrixXd& a, const MatrixXd& b) {
  return (a - b).norm() / std::max(1.0, b.norm());
}

Dataset two_class_shard() {
  DatasetConfig c;
  c.classes = 2;
  c.dim = 3;
  c.train_samples = 60;
  c.test_samples = 10;
  c.separation = 6;
  c.seed = 11;
  return generate_dataset(c).train;
}

}  // namespace

TEST_CASE("generate_dataset") {
  DatasetConfig c;
  c.seed = 5;
  const auto a = generate_dataset(c);
  const auto b = generate_dataset(c);
  CHECK(a.train.features == b.train.features);
  CHECK(a.test.labels == b.test.labels);
  CHECK(a.train.size() == c.train_samples);
  CHECK(a.test.size() == c.test_samples);
  CHECK(a.train.dim() == c.dim);

  SUBCASE("classes balanced within one sample") {
    c.train_samples = 1003;
    const auto d = generate_dataset(c);
    std::vector<int> count(c.classes, 0);
    for (Eigen::Index k = 0; k < d.train.size(); ++k) ++count[d.train.labels(k)];
    const auto [lo, hi] = std::minmax_element(count.begin(), count.end());
    CHECK(*hi - *lo <= 1);
  }
  SUBCASE("different seeds differ") {
    c.seed = 6;
    CHECK(generate_dataset(c).train.features != a.train.features);
  }
  SUBCASE("well separated clusters are linearly learnable") {
    DatasetConfig w;
    w.classes = 4;
    w.dim = 5;
    w.train_samples = 400;
    w.test_samples = 400;
    w.separation = 8;
    w.seed = 3;
    const auto d = generate_dataset(w);
    LoopModel m{std::vector<std::vector<double>>(4, std::vector<double>(6, 0.0))};
    for (int it = 0; it < 100; ++it) loop_descent_step(m, d.train, 0.5);
    CHECK(loop_accuracy(m, d.test) >= 0.95);
  }
  SUBCASE("bad config names the field") {
    DatasetConfig bad;
    bad.classes = 1;
    try {
      generate_dataset(bad);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.field() == "classes");
    }
  }
}

TEST_CASE("read_dataset") {
  std::istringstream in("# header comment\n1.5,2,0\n\n-1 4e-1 1\n3;3;2\n");
  const Dataset d = read_dataset(in);
  CHECK(d.size() == 3);
  CHECK(d.dim() == 2);
  CHECK(d.classes == 3);
  CHECK(d.features(1, 1) == doctest::Approx(0.4));
  CHECK(d.labels(2) == 2);

  std::istringstream ragged("1,2,0\n1,0\n");
  CHECK_THROWS_AS(read_dataset(ragged), ConfigError);
  std::istringstream label("1,2,0.5\n");
  CHECK_THROWS_AS(read_dataset(label), ConfigError);
  std::istringstream junk("1,x,0\n");
  CHECK_THROWS_AS(read_dataset(junk), ConfigError);
}

TEST_CASE("partition_data") {
  DatasetConfig c;
  c.train_samples = 100;
  const Dataset data = generate_dataset(c).train;
  const std::vector<int> sizes{25, 75};
  const auto shards = partition_data(data, sizes, 1);
  REQUIRE(shards.size() == 2);
  CHECK(shards[0].size() == 25);
  CHECK(shards[1].size() == 75);

  // Disjoint: every training column appears at most once across shards.
  std::set<std::vector<double>> seen;
  for (const auto& s : shards)
    for (Eigen::Index k = 0; k < s.size(); ++k) {
      const Eigen::VectorXd col = s.features.col(k);
      CHECK(seen.insert(std::vector<double>(col.data(), col.data() + col.size())).second);
    }
  CHECK(seen.size() == 100);

  const auto again = partition_data(data, sizes, 1);
  CHECK(again[0].features == shards[0].features);

  const std::vector<int> with_empty{0, 10};
  CHECK(partition_data(data, with_empty, 1)[0].size() == 0);
  const std::vector<int> too_many{60, 41};
  CHECK_THROWS_AS(partition_data(data, too_many, 1), std::invalid_argument);
}

TEST_CASE("shard_sizes follow the equilibrium periods") {
  const std::vector<NodeParamsd> nodes{{2, 1, 30, 2, 10}, {2, 1, 45, 2, 10}, {2, 1, 10, 2, 10}};
  StrategyProfile p{{0.5, 0.4, 0}, {4, 6, 10}};
  const TaskParamsd task{10, 1};
  const auto sizes = shard_sizes(p, nodes, task, {true, true, false});
  CHECK(sizes == std::vector<int>{75, 75, 0});
  p.theta[0] = 1e6;
  CHECK(shard_sizes(p, nodes, task, {true, true, false})[0] == 1);
}

TEST_CASE("loss and gradient") {
  const Dataset d = two_class_shard();
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0, 0.5);
  MatrixXd w(2, 4);
  for (Eigen::Index k = 0; k < w.size(); ++k) w(k) = n(rng);

  // Zero model: every class equally likely.
  CHECK(loss(zero_model(2, 3), d) == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  const MatrixXd g = loss_gradient(w, d);
  for (Eigen::Index k = 0; k < w.size(); ++k) {
    const double h = 1e-6;
    MatrixXd up = w, down = w;
    up(k) += h;
    down(k) -= h;
    const double fd = (loss(up, d) - loss(down, d)) / (2 * h);
    CHECK(g(k) == doctest::Approx(fd).epsilon(1e-6));
  }
  CHECK(predict_proba(w, d.features).colwise().sum().isOnes(1e-12));
  CHECK_THROWS(loss(w, Dataset{MatrixXd(3, 0), Eigen::VectorXi(0), 2}));
}

TEST_CASE("local_train") {
  const Dataset d = two_class_shard();
  MatrixXd w = MatrixXd::Constant(2, 4, 0.1);
  w(0, 0) = -0.3;
  CHECK(local_train(w, d, 0, 0.5) == w);
  CHECK(local_train(w, d, 1, 0.5) == w - 0.5 * loss_gradient(w, d));

  double prev = loss(w, d);
  MatrixXd cur = w;
  for (int e = 0; e < 10; ++e) {
    cur = local_train(cur, d, 1, 0.5);
    const double now = loss(cur, d);
    CHECK(now <= prev);
    prev = now;
  }
  CHECK(prev < loss(w, d));
  CHECK_THROWS_AS(local_train(w, Dataset{MatrixXd(3, 0), Eigen::VectorXi(0), 2}, 1, 0.5),
                  std::invalid_argument);
}

TEST_CASE("aggregate") {
  auto scalar = [](double v) { return MatrixXd::Constant(1, 1, v); };
  {
    const std::vector<LocalModel> locals{{scalar(1), 1}, {scalar(3), 1}};
    CHECK(aggregate(locals)(0, 0) == 2);
  }
  {
    const std::vector<LocalModel> locals{{scalar(0), 1}, {scalar(4), 3}};
    CHECK(aggregate(locals)(0, 0) == 3);
  }
  {
    const MatrixXd p = MatrixXd::Random(3, 4);
    const std::vector<LocalModel> locals{{p, 17}};
    CHECK(aggregate(locals) == p);
  }
  {
    const std::vector<LocalModel> locals{{scalar(5), 0}, {scalar(4), 2}};
    CHECK(aggregate(locals)(0, 0) == 4);
  }
  const std::vector<LocalModel> none{{scalar(1), 0}};
  CHECK_THROWS_AS(aggregate(none), std::invalid_argument);

  SUBCASE("weighted-average identity on random inputs") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<LocalModel> locals;
      double total = 0;
      for (int i = 0; i < 6; ++i) {
        locals.push_back({MatrixXd::Random(2, 3), std::floor(1 + 100 * u(rng))});
        total += locals.back().weight;
      }
      MatrixXd expect = MatrixXd::Zero(2, 3);
      for (const auto& m : locals) expect += m.params * (m.weight / total);
      CHECK((aggregate(locals) - expect).cwiseAbs().maxCoeff() <= 1e-15);
    }
  }
  SUBCASE("a larger shard never loses weight") {
    // With the other shards fixed, node 0's share D_0 / D_all grows with D_0.
    double prev = 0;
    for (double D0 = 1; D0 < 200; D0 += 7) {
      const std::vector<LocalModel> locals{{scalar(1), D0}, {scalar(0), 40}, {scalar(0), 9}};
      const double share = aggregate(locals)(0, 0);
      CHECK(share >= prev);
      prev = share;
    }
  }
}

TEST_CASE("one node holding everything matches centralized descent") {
  DatasetConfig dc;
  dc.classes = 3;
  dc.dim = 4;
  dc.train_samples = 150;
  dc.test_samples = 30;
  dc.seed = 4;
  const auto data = generate_dataset(dc);

  FLConfig c;
  c.shard_sizes = {150};
  c.compute_rate = {10};
  c.rounds = 12;
  c.learning_rate = 0.3;
  c.data = dc;
  const FLResult fed = run_federated(c, data);

  LoopModel central{std::vector<std::vector<double>>(3, std::vector<double>(5, 0.0))};
  for (int k = 0; k < c.rounds; ++k) loop_descent_step(central, data.train, c.learning_rate);
  CHECK(rel_diff(fed.model, to_matrix(central)) <= 1e-10);
  CHECK(fed.records.back().global_loss ==
        doctest::Approx(loss(to_matrix(central), data.train)).epsilon(1e-10));
}

TEST_CASE("run_federated on the default dataset") {
  FLConfig c;
  c.shard_sizes = {40, 80, 120, 160, 200, 60, 100, 140, 180, 20};
  c.compute_rate.assign(10, 50.0);
  c.rounds = 30;
  const FLResult r = run_federated(c);
  REQUIRE(r.records.size() == 31);
  CHECK(r.records.back().test_accuracy >= 0.9);
  int drops = 0;
  for (std::size_t k = 1; k < r.records.size(); ++k) {
    CHECK(r.records[k].round == static_cast<int>(k));
    drops += r.records[k].global_loss < r.records[k - 1].global_loss;
  }
  CHECK(drops >= 0.95 * c.rounds);

  const FLResult again = run_federated(c);
  CHECK(again.model == r.model);

  SUBCASE("modeled time") {
    CHECK(round_time(c) == doctest::Approx(200.0 / 50.0 + c.round_overhead));
    CHECK(r.records.back().modeled_time == doctest::Approx(30 * round_time(c)));
    FLConfig fast = c;
    fast.compute_rate.assign(10, 100.0);
    CHECK(round_time(fast) - fast.round_overhead ==
          doctest::Approx((round_time(c) - c.round_overhead) / 2));
    FLConfig skip = c;
    skip.shard_sizes[4] = 0;  // the slowest node sits out
    CHECK(round_time(skip) == doctest::Approx(180.0 / 50.0 + c.round_overhead));
  }
  SUBCASE("config errors name the field") {
    FLConfig bad = c;
    bad.compute_rate.pop_back();
    try {
      run_federated(bad);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.field() == "compute_rate");
    }
    bad = c;
    bad.rounds = 0;
    CHECK_THROWS_AS(run_federated(bad), ConfigError);
  }
}

TEST_CASE("rounds csv") {
  std::ostringstream empty;
  write_rounds_csv(empty, {});
  CHECK(empty.str() == "round,global_loss,test_accuracy,modeled_time_cumulative\n");
  std::ostringstream os;
  const std::vector<RoundRecord> rows{{1, 0.123456789, 0.5, 3}};
  write_rounds_csv(os, rows);
  CHECK(os.str() == "round,global_loss,test_accuracy,modeled_time_cumulative\n1,0.123457,0.5,3\n");
}
