#pragma once

// Federated averaging on a multinomial linear classifier.
//
// Samples are stored column-wise (features x samples). Model parameters are a
// classes x (features + 1) matrix whose last column is the bias. Every node
// runs full-batch gradient descent on the mean cross-entropy of its shard and
// the server averages the results weighted by shard size.

#include <Eigen/Dense>

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <vector>

#include "satfl/game.hpp"

namespace satfl {

struct Dataset {
  Eigen::MatrixXd features;  // dim x samples
  Eigen::VectorXi labels;
  int classes = 0;

  Eigen::Index size() const { return features.cols(); }
  Eigen::Index dim() const { return features.rows(); }
};

struct SplitDataset {
  Dataset train;
  Dataset test;
};

/// Gaussian class clusters. Class means are random directions of length
/// `separation`; samples add isotropic unit-variance noise.
struct DatasetConfig {
  int classes = 10;
  int dim = 20;
  int train_samples = 2000;
  int test_samples = 1000;
  double separation = 4.0;
  std::uint64_t seed = 0;
};

/// Balanced within one sample per class in both splits; same seed, same data.
SplitDataset generate_dataset(const DatasetConfig& config);

/// Rows of delimited numbers (comma, semicolon, tab or space) whose last entry
/// is an integer label in [0, classes). Blank lines and '#' comments are skipped.
Dataset read_dataset(std::istream& is);

/// Disjoint shards of the requested sizes drawn from a seeded permutation.
std::vector<Dataset> partition_data(const Dataset& data, std::span<const int> sizes,
                                    std::uint64_t seed);

/// Selected nodes get D_i = round(T d_i / theta_i), at least 1; others get 0.
std::vector<int> shard_sizes(const StrategyProfile& profile, std::span<const NodeParamsd> nodes,
                             const TaskParamsd& task, const std::vector<bool>& active);

Eigen::MatrixXd zero_model(int classes, int dim);

/// Column-wise class probabilities.
Eigen::MatrixXd predict_proba(const Eigen::MatrixXd& model, const Eigen::MatrixXd& features);

/// Mean cross-entropy over the shard.
double loss(const Eigen::MatrixXd& model, const Dataset& data);
Eigen::MatrixXd loss_gradient(const Eigen::MatrixXd& model, const Dataset& data);
double accuracy(const Eigen::MatrixXd& model, const Dataset& data);

/// `epochs` full-batch descent steps. Throws on an empty shard.
Eigen::MatrixXd local_train(const Eigen::MatrixXd& model, const Dataset& shard, int epochs,
                            double rate);

struct LocalModel {
  Eigen::MatrixXd params;
  double weight;  // shard size
};

/// sum_i w_i params_i / sum_i w_i. Zero-weight entries are skipped.
Eigen::MatrixXd aggregate(std::span<const LocalModel> locals);

struct FLConfig {
  std::vector<int> shard_sizes;
  std::vector<double> compute_rate;  // samples per time unit, one per node
  double round_overhead = 1.0;       // communication time added to every round
  int local_epochs = 1;
  double learning_rate = 0.5;
  int rounds = 30;
  DatasetConfig data;
  std::uint64_t partition_seed = 0;
};

struct RoundRecord {
  int round;
  double global_loss;  // shard-weighted local losses at the aggregated model
  double test_accuracy;
  double modeled_time;  // cumulative
};

struct FLResult {
  std::vector<RoundRecord> records;  // round 0 is the initial model
  Eigen::MatrixXd model;
};

/// Modeled duration of one synchronous round: the slowest node's
/// epochs * D_i / rate_i plus the fixed overhead.
double round_time(const FLConfig& config);

FLResult run_federated(const FLConfig& config);
/// Same, on caller-supplied data.
FLResult run_federated(const FLConfig& config, const SplitDataset& data);

/// Header: round,global_loss,test_accuracy,modeled_time_cumulative
void write_rounds_csv(std::ostream& os, std::span<const RoundRecord> records);

}  // namespace satfl
