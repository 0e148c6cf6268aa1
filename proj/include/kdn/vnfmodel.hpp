#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kdn/kplane.hpp"
#include "kdn/random.hpp"
#include "kdn/telemetry.hpp"

namespace kdn {

inline constexpr std::size_t kVnfFeatureCount = 86;

// Feature names for one 20-second traffic batch. The first entries are the
// headline counters (packets, flows, avg_len, ...); the tail is synthetic filler.
const std::vector<std::string>& vnf_feature_names();
std::size_t vnf_feature_index(const std::string& name);

// CPU model of one virtual network function:
//   cpu = base + per_flow*f + per_packet*p + interaction*f*a/(1 + saturation*f)
// with f = flows/1e3, p = packets/1e5, a = avg_len/1e3, clamped to [0, 100].
struct VnfProfile {
  std::string name;
  double base = 0.0;
  double per_flow = 0.0;
  double per_packet = 0.0;
  double interaction = 0.0;
  double saturation = 0.0;
  double noise_std = 0.0;  // percentage points

  static VnfProfile fw_like();
  static VnfProfile ids_like();
  static VnfProfile switch_like();
  static VnfProfile by_name(const std::string& name);
  static std::vector<VnfProfile> all();

  VnfProfile noise_free() const;
  void validate() const;
  nlohmann::json to_json() const;
  static VnfProfile from_json(const nlohmann::json& j);
};

struct FeatureBatch {
  std::vector<double> features;
  double cpu_pct = 0.0;
};

// Noise-free ground truth, clamped to [0, 100].
double vnf_cpu(const VnfProfile& profile, std::span<const double> features);

FeatureBatch gen_feature_batch(const VnfProfile& profile, Rng& rng);

// X = features, Y = measured cpu_pct; meta carries the profile and the
// noise-free cpu of every row.
Dataset gen_vnf_dataset(const VnfProfile& profile, std::size_t n_batches, std::uint64_t seed);

struct CdfPoint {
  double error = 0.0;
  double fraction = 0.0;
};

// Empirical CDF, one point per distinct error value.
std::vector<CdfPoint> error_cdf(std::vector<double> errors);
std::string cdf_csv(const std::vector<CdfPoint>& cdf);
// Nearest-rank percentile, pct in (0, 100].
double percentile(std::vector<double> values, double pct);

struct VnfReport {
  EvalMetrics metrics;
  double p50 = 0.0;
  double p90 = 0.0;
  double p95 = 0.0;
  std::vector<CdfPoint> cdf;
};

// Keeps only the named feature columns (e.g. {"flows"} for the single-feature baseline).
Dataset vnf_feature_subset(const Dataset& ds, const std::vector<std::string>& names);

MlpModel fit_vnf(const Dataset& train, const TrainConfig& cfg);
VnfReport evaluate_vnf(const MlpModel& model, const Dataset& test);

}  // namespace kdn
