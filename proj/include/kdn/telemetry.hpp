#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "kdn/netmodel.hpp"
#include "kdn/simulator.hpp"

namespace kdn {

enum class Backend { analytic, des };

const char* to_string(Backend b);
Backend backend_from_string(const std::string& s);

inline constexpr Range kDefaultDemandRange{10.0, 160.0};

// One joined observation: traffic + configuration -> measured performance.
struct TelemetrySample {
  std::uint64_t sample_id = 0;
  TrafficMatrix tm;
  SplitPolicy pol;
  PathDelayVector delays;
  Backend backend = Backend::analytic;
  std::uint64_t seed = 0;
  std::string created_at;
  nlohmann::json metadata = nlohmann::json::object();
};

// DES seed used for a sample recorded with the given substream seed.
std::uint64_t des_seed_for(std::uint64_t sample_seed);

// Re-runs the recorded backend for a sample.
PathDelayVector resimulate(const RoutingTable& routing, const TelemetrySample& s, std::uint64_t des_horizon);

nlohmann::json to_json(const TelemetrySample& s, const std::string& topology_hash);
TelemetrySample sample_from_json(const nlohmann::json& j);

// Append-only analytics store, optionally mirrored to a `.samples.jsonl` file.
// Appends go through one writer; samples are never modified once stored.
class Store {
 public:
  Store() = default;
  // Loads an existing JSONL file (if present) and appends new samples to it.
  static Store open(const std::string& path);

  const std::optional<std::string>& topology_hash() const { return topo_hash_; }
  const std::vector<TelemetrySample>& samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }

  // Binds an empty store to a topology; rejects a mismatched one.
  void bind(const Topology& topo);
  // Assigns the next sample_id and created_at, then appends.
  const TelemetrySample& append(const Topology& topo, TelemetrySample s);

 private:
  std::optional<std::string> path_;
  std::optional<std::string> topo_hash_;
  std::vector<TelemetrySample> samples_;
};

struct CollectConfig {
  std::size_t n_samples = 0;
  std::uint64_t seed = 1;
  Backend backend = Backend::analytic;
  Range demand_pps = kDefaultDemandRange;
  double rho_max = kDefaultRhoMax;
  std::uint64_t des_horizon = 200'000;
  double des_warmup = 0.2;
  std::size_t max_attempts = 1000;  // per sample, stability resampling
  std::size_t threads = 0;          // 0 = hardware concurrency
};

// Draws a stable (traffic, policy) pair for sample `index`; `attempts` receives
// the number of draws used.
std::pair<TrafficMatrix, SplitPolicy> draw_stable_inputs(const RoutingTable& routing, std::uint64_t sample_seed,
                                                         Range demand, double rho_max, std::size_t max_attempts,
                                                         std::size_t* attempts = nullptr);

// Appends n_samples stable samples; sample i depends only on (seed, i).
std::size_t collect(const Topology& topo, const CollectConfig& cfg, Store& store);

// Row-aligned learning data with deterministic column order.
struct Dataset {
  Eigen::MatrixXd X;
  Eigen::MatrixXd Y;
  std::vector<std::string> feature_names;
  std::vector<std::string> target_names;
  std::string topology_hash;
  std::vector<std::uint64_t> sample_ids;
  nlohmann::json meta = nlohmann::json::object();

  std::size_t rows() const { return static_cast<std::size_t>(X.rows()); }
  Dataset select(const std::vector<std::size_t>& rows) const;
  Dataset select_features(const std::vector<std::size_t>& cols) const;
};

std::vector<std::string> feature_names(const Topology& topo);
std::vector<std::string> target_names(const Topology& topo);
// Demand entries then split ratios, as one feature row.
Eigen::RowVectorXd feature_row(const TrafficMatrix& tm, const SplitPolicy& pol);
PathDelayVector delays_from_row(const Eigen::RowVectorXd& row);

Dataset to_dataset(const Store& store, const Topology& topo);

// Seeded disjoint partition into (train, test).
std::pair<Dataset, Dataset> split(const Dataset& ds, std::size_t n_train, std::size_t n_test, std::uint64_t seed);

nlohmann::json to_json(const Dataset& ds);
Dataset dataset_from_json(const nlohmann::json& j);

}  // namespace kdn
