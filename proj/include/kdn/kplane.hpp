#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "kdn/telemetry.hpp"

namespace kdn {

// Per-column z-score statistics. Constant columns get std = 1.
struct Normalizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd stddev;

  static Normalizer fit(const Eigen::MatrixXd& m);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& m) const;
  Eigen::MatrixXd invert(const Eigen::MatrixXd& z) const;
};

struct TrainConfig {
  std::size_t hidden_units = 64;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 500;
  std::size_t patience = 20;
  std::uint64_t seed = 1;
  double validation_fraction = 0.1;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// One hidden sigmoid layer, linear output, in normalized coordinates:
//   y_n = W2 * sigmoid(W1 * x_n + b1) + b2
struct MlpModel {
  Eigen::MatrixXd W1;  // hidden x inputs
  Eigen::VectorXd b1;
  Eigen::MatrixXd W2;  // outputs x hidden
  Eigen::VectorXd b2;
  Normalizer x_norm;
  Normalizer y_norm;
  nlohmann::json meta = nlohmann::json::object();

  // Zero weights, identity normalization.
  static MlpModel zeros(std::size_t inputs, std::size_t hidden, std::size_t outputs);

  std::size_t inputs() const { return static_cast<std::size_t>(W1.cols()); }
  std::size_t hidden() const { return static_cast<std::size_t>(W1.rows()); }
  std::size_t outputs() const { return static_cast<std::size_t>(W2.rows()); }

  // Rows in, rows out; both normalized.
  Eigen::MatrixXd forward_normalized(const Eigen::MatrixXd& xn) const;
  // Mean over rows of 0.5 * ||y_hat - y||^2, normalized space.
  double loss_normalized(const Eigen::MatrixXd& xn, const Eigen::MatrixXd& yn) const;
};

struct Gradients {
  Eigen::MatrixXd W1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd W2;
  Eigen::VectorXd b2;
};

struct EvalMetrics {
  double mse = 0.0;            // normalized target space
  double mean_rel_err = 0.0;   // raw space, over all (sample, output) with y > 0
  std::vector<double> per_pair_rel_err;
  std::vector<double> per_sample_rel_err;
};

struct CurvePoint {
  std::size_t train_size = 0;
  double mse = 0.0;
  double mean_rel_err = 0.0;
};

MlpModel fit(const Dataset& train, const TrainConfig& cfg);

Eigen::MatrixXd predict(const MlpModel& model, const Eigen::MatrixXd& x_rows);

// Backprop gradient of 0.5 * ||y_hat - y||^2 for one raw (x, y) pair, taken in
// normalized space.
Gradients gradient(const MlpModel& model, const Eigen::RowVectorXd& x_row, const Eigen::RowVectorXd& y_row);
// Mean gradient over a batch of normalized rows.
Gradients batch_gradient(const MlpModel& model, const Eigen::MatrixXd& xn, const Eigen::MatrixXd& yn);

EvalMetrics evaluate(const MlpModel& model, const Dataset& test);

// Nested training prefixes of one seeded shuffle; the first test_size shuffled
// rows form the fixed test set.
std::vector<CurvePoint> learning_curve(const Dataset& ds, const std::vector<std::size_t>& sizes,
                                       const TrainConfig& cfg, std::size_t test_size);

// Trailing moving average with the given window.
std::vector<double> smooth(const std::vector<double>& values, std::size_t window);

nlohmann::json to_json(const MlpModel& model);
MlpModel model_from_json(const nlohmann::json& j);

}  // namespace kdn
