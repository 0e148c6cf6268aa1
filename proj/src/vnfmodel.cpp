#include "kdn/vnfmodel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kdn/errors.hpp"

namespace kdn {

namespace {

const char* const kHeadline[] = {
    "packets",      "flows",        "avg_len",      "bytes",        "src_ips",      "dst_ips",
    "src_ports",    "dst_ports",    "tcp_share",    "udp_share",    "icmp_share",   "syn_count",
    "fin_count",    "rst_count",    "app_http",     "app_https",    "app_dns",      "app_smtp",
    "app_ssh",      "app_p2p",      "app_video",    "app_voip",     "app_gaming",   "app_other",
    "flow_pkts_mean", "flow_pkts_max", "short_flows", "len_lt_128", "len_128_512", "len_512_1024",
    "len_gt_1024",
};
constexpr std::size_t kHeadlineCount = std::size(kHeadline);

void normalize_shares(std::span<double> shares, Rng& rng) {
  double sum = 0.0;
  for (double& s : shares) sum += (s = rng.exponential(1.0));
  for (double& s : shares) s /= sum;
}

}  // namespace

const std::vector<std::string>& vnf_feature_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n(std::begin(kHeadline), std::end(kHeadline));
    for (std::size_t i = 0; n.size() < kVnfFeatureCount; ++i) n.push_back("aux_" + std::to_string(i));
    return n;
  }();
  return names;
}

std::size_t vnf_feature_index(const std::string& name) {
  const auto& names = vnf_feature_names();
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw Error(ErrorKind::invalid_argument, "unknown VNF feature " + name);
  return static_cast<std::size_t>(it - names.begin());
}

VnfProfile VnfProfile::fw_like() { return {"fw-like", 3.0, 3.0, 3.0, 16.0, 0.15, 1.5}; }
VnfProfile VnfProfile::ids_like() { return {"ids-like", 5.0, 1.0, 10.0, 10.0, 0.05, 2.0}; }
VnfProfile VnfProfile::switch_like() { return {"switch-like", 2.0, 0.5, 12.0, 3.0, 0.10, 1.0}; }

VnfProfile VnfProfile::by_name(const std::string& name) {
  for (auto& p : all())
    if (p.name == name) return p;
  throw Error(ErrorKind::invalid_argument, "unknown VNF profile " + name + " (fw-like, ids-like, switch-like)");
}

std::vector<VnfProfile> VnfProfile::all() { return {fw_like(), ids_like(), switch_like()}; }

VnfProfile VnfProfile::noise_free() const {
  VnfProfile p = *this;
  p.noise_std = 0.0;
  return p;
}

void VnfProfile::validate() const {
  for (double c : {base, per_flow, per_packet, interaction, saturation, noise_std})
    if (!(c >= 0.0) || !std::isfinite(c)) throw Error(ErrorKind::invalid_argument, "VNF profile costs must be >= 0");
}

nlohmann::json VnfProfile::to_json() const {
  return {{"name", name},
          {"base", base},
          {"per_flow", per_flow},
          {"per_packet", per_packet},
          {"interaction", interaction},
          {"saturation", saturation},
          {"noise_std", noise_std}};
}

VnfProfile VnfProfile::from_json(const nlohmann::json& j) {
  try {
    VnfProfile p{j.at("name").get<std::string>(),     j.at("base").get<double>(),
                 j.at("per_flow").get<double>(),      j.at("per_packet").get<double>(),
                 j.at("interaction").get<double>(),   j.at("saturation").get<double>(),
                 j.at("noise_std").get<double>()};
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::schema, std::string("malformed VNF profile: ") + e.what());
  }
}

double vnf_cpu(const VnfProfile& prof, std::span<const double> x) {
  if (x.size() != kVnfFeatureCount) throw Error(ErrorKind::inconsistent_input, "VNF feature vector has wrong length");
  const double p = x[0] / 1e5, f = x[1] / 1e3, a = x[2] / 1e3;
  const double cpu = prof.base + prof.per_flow * f + prof.per_packet * p + prof.interaction * f * a / (1.0 + prof.saturation * f);
  return std::clamp(cpu, 0.0, 100.0);
}

FeatureBatch gen_feature_batch(const VnfProfile& profile, Rng& rng) {
  FeatureBatch b;
  auto& x = b.features;
  x.assign(kVnfFeatureCount, 0.0);
  // Shared activity level drives correlated counters.
  const double z = rng.normal();
  const double packets = 2e5 * std::exp(0.5 * z + 0.3 * rng.normal());
  const double flows = 4e3 * std::exp(0.45 * z + 0.4 * rng.normal());
  const double avg_len = std::clamp(600.0 * std::exp(0.35 * rng.normal()), 64.0, 1500.0);
  x[0] = packets;
  x[1] = flows;
  x[2] = avg_len;
  x[3] = packets * avg_len;
  x[4] = flows * 0.30 * std::exp(0.2 * rng.normal());
  x[5] = flows * 0.25 * std::exp(0.2 * rng.normal());
  x[6] = flows * 0.90 * std::exp(0.1 * rng.normal());
  x[7] = flows * 0.40 * std::exp(0.2 * rng.normal());
  normalize_shares(std::span(x).subspan(8, 3), rng);
  x[11] = flows * 0.8 * std::exp(0.15 * rng.normal());
  x[12] = flows * 0.7 * std::exp(0.15 * rng.normal());
  x[13] = flows * 0.05 * std::exp(0.5 * rng.normal());
  normalize_shares(std::span(x).subspan(14, 10), rng);
  x[24] = packets / flows;
  x[25] = x[24] * (5.0 + 20.0 * rng.uniform());
  x[26] = flows * rng.uniform(0.3, 0.8);
  normalize_shares(std::span(x).subspan(27, 4), rng);
  // Filler: a few latent factors, weakly tied to the activity level.
  double latent[4];
  for (double& g : latent) g = rng.normal();
  for (std::size_t i = kHeadlineCount; i < kVnfFeatureCount; ++i)
    x[i] = std::exp(0.1 * z + 0.5 * latent[i % 4] + 0.05 * rng.normal());

  const double noise = profile.noise_std > 0.0 ? profile.noise_std * rng.normal() : 0.0;
  const double p = packets / 1e5, f = flows / 1e3, a = avg_len / 1e3;
  const double clean = profile.base + profile.per_flow * f + profile.per_packet * p +
                       profile.interaction * f * a / (1.0 + profile.saturation * f);
  b.cpu_pct = std::clamp(clean + noise, 0.0, 100.0);
  return b;
}

Dataset gen_vnf_dataset(const VnfProfile& profile, std::size_t n_batches, std::uint64_t seed) {
  profile.validate();
  if (n_batches == 0) throw Error(ErrorKind::invalid_argument, "n_batches must be > 0");
  Dataset ds;
  ds.feature_names = vnf_feature_names();
  ds.target_names = {"cpu_pct"};
  ds.topology_hash = content_digest(profile.to_json().dump());
  ds.X.resize(Eigen::Index(n_batches), Eigen::Index(kVnfFeatureCount));
  ds.Y.resize(Eigen::Index(n_batches), 1);
  std::vector<double> clean;
  for (std::size_t i = 0; i < n_batches; ++i) {
    Rng rng(substream_seed(seed, i));
    const FeatureBatch b = gen_feature_batch(profile, rng);
    for (std::size_t c = 0; c < kVnfFeatureCount; ++c) ds.X(Eigen::Index(i), Eigen::Index(c)) = b.features[c];
    ds.Y(Eigen::Index(i), 0) = b.cpu_pct;
    clean.push_back(vnf_cpu(profile, b.features));
    ds.sample_ids.push_back(i);
  }
  ds.meta = {{"profile", profile.to_json()}, {"seed", seed}, {"batch_seconds", 20}, {"noise_free_cpu_pct", clean}};
  return ds;
}

std::vector<CdfPoint> error_cdf(std::vector<double> errors) {
  if (errors.empty()) throw Error(ErrorKind::insufficient_data, "error CDF needs at least one value");
  std::sort(errors.begin(), errors.end());
  std::vector<CdfPoint> cdf;
  const double n = static_cast<double>(errors.size());
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (i + 1 < errors.size() && errors[i + 1] == errors[i]) continue;
    cdf.push_back({errors[i], static_cast<double>(i + 1) / n});
  }
  return cdf;
}

std::string cdf_csv(const std::vector<CdfPoint>& cdf) {
  std::ostringstream os;
  os.precision(17);
  os << "error,cumulative_fraction\n";
  for (const auto& p : cdf) os << p.error << ',' << p.fraction << '\n';
  return os.str();
}

double percentile(std::vector<double> values, double pct) {
  if (values.empty()) throw Error(ErrorKind::insufficient_data, "percentile of empty set");
  if (!(pct > 0.0 && pct <= 100.0)) throw Error(ErrorKind::invalid_argument, "percentile must be in (0, 100]");
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(pct / 100.0 * static_cast<double>(values.size())));
  return values[std::max<std::size_t>(rank, 1) - 1];
}

Dataset vnf_feature_subset(const Dataset& ds, const std::vector<std::string>& names) {
  std::vector<std::size_t> cols;
  for (const auto& n : names) {
    auto it = std::find(ds.feature_names.begin(), ds.feature_names.end(), n);
    if (it == ds.feature_names.end()) throw Error(ErrorKind::invalid_argument, "dataset has no feature " + n);
    cols.push_back(static_cast<std::size_t>(it - ds.feature_names.begin()));
  }
  return ds.select_features(cols);
}

MlpModel fit_vnf(const Dataset& train, const TrainConfig& cfg) {
  if (train.Y.cols() != 1) throw Error(ErrorKind::inconsistent_input, "VNF model has a single CPU target");
  return fit(train, cfg);
}

VnfReport evaluate_vnf(const MlpModel& model, const Dataset& test) {
  VnfReport r;
  r.metrics = evaluate(model, test);
  r.p50 = percentile(r.metrics.per_sample_rel_err, 50);
  r.p90 = percentile(r.metrics.per_sample_rel_err, 90);
  r.p95 = percentile(r.metrics.per_sample_rel_err, 95);
  r.cdf = error_cdf(r.metrics.per_sample_rel_err);
  return r;
}

}  // namespace kdn
