#include "satfl/flsim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

#include "satfl/error.hpp"

namespace satfl {

namespace {

Dataset sample_clusters(const Eigen::MatrixXd& means, int count, std::mt19937_64& rng) {
  const auto dim = means.rows();
  const int classes = static_cast<int>(means.cols());
  std::normal_distribution<double> noise(0.0, 1.0);
  Dataset out;
  out.classes = classes;
  out.features.resize(dim, count);
  out.labels.resize(count);
  // Round-robin labels give exact balance; the shuffle hides the pattern.
  std::vector<int> labels(count);
  for (int k = 0; k < count; ++k) labels[k] = k % classes;
  std::shuffle(labels.begin(), labels.end(), rng);
  for (int k = 0; k < count; ++k) {
    out.labels(k) = labels[k];
    for (Eigen::Index j = 0; j < dim; ++j) out.features(j, k) = means(j, labels[k]) + noise(rng);
  }
  return out;
}

Dataset gather(const Dataset& data, std::span<const Eigen::Index> columns) {
  Dataset out;
  out.classes = data.classes;
  out.features.resize(data.dim(), static_cast<Eigen::Index>(columns.size()));
  out.labels.resize(static_cast<Eigen::Index>(columns.size()));
  for (std::size_t k = 0; k < columns.size(); ++k) {
    out.features.col(static_cast<Eigen::Index>(k)) = data.features.col(columns[k]);
    out.labels(static_cast<Eigen::Index>(k)) = data.labels(columns[k]);
  }
  return out;
}

Eigen::MatrixXd logits(const Eigen::MatrixXd& model, const Eigen::MatrixXd& features) {
  if (model.cols() != features.rows() + 1)
    throw std::invalid_argument("model width does not match feature dimension");
  const auto dim = features.rows();
  Eigen::MatrixXd z = model.leftCols(dim) * features;
  z.colwise() += model.col(dim);
  return z;
}

void validate(const FLConfig& config) {
  const std::size_t n = config.shard_sizes.size();
  if (n == 0) throw ConfigError("shard_sizes", "at least one node is required");
  if (config.compute_rate.size() != n)
    throw ConfigError("compute_rate", "one compute rate per node is required");
  for (int s : config.shard_sizes)
    if (s < 0) throw ConfigError("shard_sizes", "shard sizes must be >= 0");
  for (double c : config.compute_rate)
    if (!(c > 0) || !std::isfinite(c)) throw ConfigError("compute_rate", "rates must be positive");
  if (std::accumulate(config.shard_sizes.begin(), config.shard_sizes.end(), 0L) == 0)
    throw ConfigError("shard_sizes", "every shard is empty");
  if (config.rounds < 1) throw ConfigError("rounds", "rounds must be >= 1");
  if (config.local_epochs < 0) throw ConfigError("local_epochs", "local_epochs must be >= 0");
  if (!(config.learning_rate > 0) || !std::isfinite(config.learning_rate))
    throw ConfigError("learning_rate", "learning rate must be positive");
  if (!(config.round_overhead >= 0) || !std::isfinite(config.round_overhead))
    throw ConfigError("round_overhead", "overhead must be >= 0");
}

}  // namespace

SplitDataset generate_dataset(const DatasetConfig& config) {
  if (config.classes < 2) throw ConfigError("classes", "need at least two classes");
  if (config.dim < 1) throw ConfigError("dim", "dimension must be >= 1");
  if (config.train_samples < 1 || config.test_samples < 1)
    throw ConfigError("samples", "train and test splits must be non-empty");
  if (!(config.separation >= 0) || !std::isfinite(config.separation))
    throw ConfigError("separation", "separation must be finite and >= 0");

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd means(config.dim, config.classes);
  for (int c = 0; c < config.classes; ++c) {
    for (int j = 0; j < config.dim; ++j) means(j, c) = normal(rng);
    const double len = means.col(c).norm();
    means.col(c) *= len > 0 ? config.separation / len : 0.0;
  }
  SplitDataset out;
  out.train = sample_clusters(means, config.train_samples, rng);
  out.test = sample_clusters(means, config.test_samples, rng);
  return out;
}

Dataset read_dataset(std::istream& is) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::replace_if(line.begin(), line.end(), [](char ch) { return ch == ',' || ch == ';' || ch == '\t'; }, ' ');
    std::istringstream fields(line);
    std::vector<double> row;
    std::string token;
    while (fields >> token) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(token, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != token.size())
        throw ConfigError("dataset", "line " + std::to_string(line_no) + ": bad number '" + token + "'");
      row.push_back(v);
    }
    if (row.empty()) continue;
    if (row.size() < 2)
      throw ConfigError("dataset", "line " + std::to_string(line_no) + ": need features and a label");
    if (!rows.empty() && row.size() != rows.front().size())
      throw ConfigError("dataset", "line " + std::to_string(line_no) + ": inconsistent column count");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError("dataset", "no samples");

  const auto dim = static_cast<Eigen::Index>(rows.front().size() - 1);
  Dataset out;
  out.features.resize(dim, static_cast<Eigen::Index>(rows.size()));
  out.labels.resize(static_cast<Eigen::Index>(rows.size()));
  int max_label = 0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const double label = rows[k].back();
    if (label < 0 || label != std::floor(label))
      throw ConfigError("dataset", "sample " + std::to_string(k) + ": label must be a non-negative integer");
    const auto col = static_cast<Eigen::Index>(k);
    for (Eigen::Index j = 0; j < dim; ++j) out.features(j, col) = rows[k][j];
    out.labels(col) = static_cast<int>(label);
    max_label = std::max(max_label, out.labels(col));
  }
  out.classes = std::max(2, max_label + 1);
  return out;
}

std::vector<Dataset> partition_data(const Dataset& data, std::span<const int> sizes,
                                    std::uint64_t seed) {
  long total = 0;
  for (int s : sizes) {
    if (s < 0) throw std::invalid_argument("partition_data: shard sizes must be >= 0");
    total += s;
  }
  if (total > data.size())
    throw std::invalid_argument("partition_data: " + std::to_string(total) +
                                " samples requested from a set of " + std::to_string(data.size()));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Dataset> shards;
  std::size_t next = 0;
  for (int s : sizes) {
    shards.push_back(gather(data, std::span<const Eigen::Index>(order).subspan(next, s)));
    next += static_cast<std::size_t>(s);
  }
  return shards;
}

std::vector<int> shard_sizes(const StrategyProfile& profile, std::span<const NodeParamsd> nodes,
                             const TaskParamsd& task, const std::vector<bool>& active) {
  if (profile.size() != nodes.size() || active.size() != nodes.size())
    throw std::invalid_argument("shard_sizes: profile, nodes and flags must align");
  std::vector<int> out;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (!active[i]) {
      out.push_back(0);
      continue;
    }
    const double D = data_size(cycle_at(nodes[i], task, profile.theta[i]));
    out.push_back(std::max(1, static_cast<int>(std::lround(D))));
  }
  return out;
}

Eigen::MatrixXd zero_model(int classes, int dim) { return Eigen::MatrixXd::Zero(classes, dim + 1); }

Eigen::MatrixXd predict_proba(const Eigen::MatrixXd& model, const Eigen::MatrixXd& features) {
  Eigen::MatrixXd z = logits(model, features);
  const Eigen::RowVectorXd peak = z.colwise().maxCoeff();
  z = (z.rowwise() - peak).array().exp().matrix();
  const Eigen::RowVectorXd total = z.colwise().sum();
  return z.array().rowwise() / total.array();
}

double loss(const Eigen::MatrixXd& model, const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("loss: empty data set");
  const Eigen::MatrixXd z = logits(model, data.features);
  double sum = 0.0;
  for (Eigen::Index k = 0; k < data.size(); ++k) {
    const double peak = z.col(k).maxCoeff();
    const double lse = peak + std::log((z.col(k).array() - peak).exp().sum());
    sum += lse - z(data.labels(k), k);
  }
  return sum / static_cast<double>(data.size());
}

Eigen::MatrixXd loss_gradient(const Eigen::MatrixXd& model, const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("loss_gradient: empty data set");
  Eigen::MatrixXd residual = predict_proba(model, data.features);
  for (Eigen::Index k = 0; k < data.size(); ++k) residual(data.labels(k), k) -= 1.0;
  residual /= static_cast<double>(data.size());
  const auto dim = data.dim();
  Eigen::MatrixXd grad(model.rows(), model.cols());
  grad.leftCols(dim) = residual * data.features.transpose();
  grad.col(dim) = residual.rowwise().sum();
  return grad;
}

double accuracy(const Eigen::MatrixXd& model, const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("accuracy: empty data set");
  const Eigen::MatrixXd z = logits(model, data.features);
  Eigen::Index hits = 0;
  for (Eigen::Index k = 0; k < data.size(); ++k) {
    Eigen::Index best;
    z.col(k).maxCoeff(&best);
    hits += best == data.labels(k);
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

Eigen::MatrixXd local_train(const Eigen::MatrixXd& model, const Dataset& shard, int epochs,
                            double rate) {
  if (shard.size() == 0) throw std::invalid_argument("local_train: empty shard");
  if (epochs < 0) throw std::invalid_argument("local_train: epochs must be >= 0");
  Eigen::MatrixXd w = model;
  for (int e = 0; e < epochs; ++e) w -= rate * loss_gradient(w, shard);
  return w;
}

Eigen::MatrixXd aggregate(std::span<const LocalModel> locals) {
  double total = 0.0;
  for (const auto& m : locals) {
    if (!(m.weight >= 0) || !std::isfinite(m.weight))
      throw std::invalid_argument("aggregate: weights must be finite and >= 0");
    total += m.weight;
  }
  if (!(total > 0)) throw std::invalid_argument("aggregate: all weights are zero");
  Eigen::MatrixXd out;
  for (const auto& m : locals) {
    if (m.weight == 0) continue;
    if (out.size() == 0)
      out = (m.weight / total) * m.params;
    else
      out += (m.weight / total) * m.params;
  }
  return out;
}

double round_time(const FLConfig& config) {
  double slowest = 0.0;
  for (std::size_t i = 0; i < config.shard_sizes.size(); ++i)
    if (config.shard_sizes[i] > 0)
      slowest = std::max(slowest, config.local_epochs * config.shard_sizes[i] / config.compute_rate[i]);
  return slowest + config.round_overhead;
}

FLResult run_federated(const FLConfig& config) {
  validate(config);
  return run_federated(config, generate_dataset(config.data));
}

FLResult run_federated(const FLConfig& config, const SplitDataset& data) {
  validate(config);
  const auto shards = partition_data(data.train, config.shard_sizes, config.partition_seed);
  const double total = std::accumulate(config.shard_sizes.begin(), config.shard_sizes.end(), 0.0);

  // Loss over the union of shards, written as the shard-weighted sum of local losses.
  auto global_loss = [&](const Eigen::MatrixXd& w) {
    double sum = 0.0;
    for (const auto& s : shards)
      if (s.size() > 0) sum += static_cast<double>(s.size()) / total * loss(w, s);
    return sum;
  };

  FLResult out;
  out.model = zero_model(data.train.classes, static_cast<int>(data.train.dim()));
  out.records.push_back({0, global_loss(out.model), accuracy(out.model, data.test), 0.0});
  const double per_round = round_time(config);
  std::vector<LocalModel> locals;
  for (int k = 1; k <= config.rounds; ++k) {
    locals.clear();
    // Nodes are independent within a round; visiting them by index keeps the sum order fixed.
    for (const auto& s : shards)
      if (s.size() > 0)
        locals.push_back({local_train(out.model, s, config.local_epochs, config.learning_rate),
                          static_cast<double>(s.size())});
    out.model = aggregate(locals);
    out.records.push_back({k, global_loss(out.model), accuracy(out.model, data.test),
                           out.records.back().modeled_time + per_round});
  }
  return out;
}

void write_rounds_csv(std::ostream& os, std::span<const RoundRecord> records) {
  os << "round,global_loss,test_accuracy,modeled_time_cumulative\n";
  const auto flags = os.flags();
  const auto precision = os.precision(6);
  for (const auto& r : records)
    os << r.round << ',' << r.global_loss << ',' << r.test_accuracy << ',' << r.modeled_time << '\n';
  os.flags(flags);
  os.precision(precision);
}

}  // namespace satfl
