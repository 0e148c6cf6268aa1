#include "kdn/telemetry.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <mutex>
#include <thread>

#include "kdn/errors.hpp"
#include "kdn/log.hpp"
#include "kdn/random.hpp"

namespace kdn {

namespace {

constexpr std::uint64_t kDesStream = 0xD35ULL << 32;

[[noreturn]] void schema(const std::string& msg) { throw Error(ErrorKind::schema, msg); }

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::json matrix_rows(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd rows_matrix(const nlohmann::json& rows, std::size_t cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) schema("dataset row has wrong column count");
    for (std::size_t c = 0; c < cols; ++c) m(Eigen::Index(r), Eigen::Index(c)) = rows[r][c].get<double>();
  }
  return m;
}

}  // namespace

const char* to_string(Backend b) { return b == Backend::analytic ? "analytic" : "des"; }

Backend backend_from_string(const std::string& s) {
  if (s == "analytic") return Backend::analytic;
  if (s == "des") return Backend::des;
  throw Error(ErrorKind::invalid_argument, "unknown backend " + s);
}

std::uint64_t des_seed_for(std::uint64_t sample_seed) { return substream_seed(sample_seed, kDesStream); }

PathDelayVector resimulate(const RoutingTable& routing, const TelemetrySample& s, std::uint64_t des_horizon) {
  if (s.backend == Backend::analytic) return simulate_analytic(routing, s.tm, s.pol);
  DesConfig cfg;
  cfg.seed = s.metadata.value("des_seed", des_seed_for(s.seed));
  cfg.horizon_packets = s.metadata.value("des_horizon", des_horizon);
  cfg.warmup_fraction = s.metadata.value("des_warmup", cfg.warmup_fraction);
  return simulate_des(routing, s.tm, s.pol, cfg).delays;
}

nlohmann::json to_json(const TelemetrySample& s, const std::string& topology_hash) {
  nlohmann::json delays = nlohmann::json::array();
  for (double d : s.delays.delay_s) {
    if (std::isfinite(d))
      delays.push_back(d);
    else
      delays.push_back(nullptr);
  }
  return {{"schema_version", kSchemaVersion},
          {"sample_id", s.sample_id},
          {"topology_hash", topology_hash},
          {"backend", to_string(s.backend)},
          {"seed", s.seed},
          {"created_at", s.created_at},
          {"demand_pps", s.tm.demand_pps},
          {"split_ratios", s.pol.ratios},
          {"delay_s", delays},
          {"metadata", s.metadata}};
}

TelemetrySample sample_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("schema_version", 0) != kSchemaVersion) schema("unsupported sample schema");
  try {
    TelemetrySample s;
    s.sample_id = j.at("sample_id").get<std::uint64_t>();
    s.backend = backend_from_string(j.at("backend").get<std::string>());
    s.seed = j.at("seed").get<std::uint64_t>();
    s.created_at = j.value("created_at", "");
    s.tm.demand_pps = j.at("demand_pps").get<std::vector<double>>();
    s.pol.ratios = j.at("split_ratios").get<std::vector<std::vector<double>>>();
    for (const auto& d : j.at("delay_s"))
      s.delays.delay_s.push_back(d.is_null() ? std::nan("") : d.get<double>());
    s.metadata = j.value("metadata", nlohmann::json::object());
    return s;
  } catch (const nlohmann::json::exception& e) {
    schema(std::string("malformed sample: ") + e.what());
  }
}

Store Store::open(const std::string& path) {
  Store st;
  st.path_ = path;
  std::ifstream in(path);
  std::string line;
  std::size_t lineno = 0;
  while (in && std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      schema(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    const auto hash = j.value("topology_hash", "");
    if (st.topo_hash_ && *st.topo_hash_ != hash) schema(path + ": samples from more than one topology");
    st.topo_hash_ = hash;
    st.samples_.push_back(sample_from_json(j));
    if (st.samples_.back().sample_id != st.samples_.size() - 1) schema(path + ": sample ids are not sequential");
  }
  return st;
}

void Store::bind(const Topology& topo) {
  const std::string h = kdn::topology_hash(topo);
  if (topo_hash_ && *topo_hash_ != h)
    throw Error(ErrorKind::inconsistent_input, "store is bound to topology " + *topo_hash_ + ", not " + h);
  topo_hash_ = h;
}

const TelemetrySample& Store::append(const Topology& topo, TelemetrySample s) {
  bind(topo);
  validate(topo, s.tm);
  validate(topo, s.pol);
  if (s.delays.delay_s.size() != topo.pair_count())
    throw Error(ErrorKind::inconsistent_input, "delay vector does not match topology");
  s.sample_id = samples_.size();
  if (s.created_at.empty()) s.created_at = utc_now();
  if (path_) {
    std::ofstream out(*path_, std::ios::app);
    if (!out) throw Error(ErrorKind::state, "cannot append to " + *path_);
    out << to_json(s, *topo_hash_).dump() << '\n';
  }
  samples_.push_back(std::move(s));
  return samples_.back();
}

std::pair<TrafficMatrix, SplitPolicy> draw_stable_inputs(const RoutingTable& routing, std::uint64_t sample_seed,
                                                         Range demand, double rho_max, std::size_t max_attempts,
                                                         std::size_t* attempts) {
  const Topology& topo = routing.topology();
  for (std::size_t a = 0; a < max_attempts; ++a) {
    TrafficMatrix tm = gen_traffic(substream_seed(sample_seed, 2 * a), topo, demand);
    SplitPolicy pol = gen_policy(substream_seed(sample_seed, 2 * a + 1), topo);
    if (link_loads(routing, tm, pol).max_utilization() < rho_max) {
      if (attempts) *attempts = a + 1;
      return {std::move(tm), std::move(pol)};
    }
  }
  throw Error(ErrorKind::instability,
              "resample budget exhausted: no stable draw in " + std::to_string(max_attempts) + " attempts");
}

std::size_t collect(const Topology& topo, const CollectConfig& cfg, Store& store) {
  if (cfg.n_samples == 0) {
    if (store.topology_hash() && *store.topology_hash() != topology_hash(topo))
      throw Error(ErrorKind::inconsistent_input, "store belongs to a different topology");
    return 0;
  }
  store.bind(topo);
  const RoutingTable routing(topo);
  std::vector<TelemetrySample> out(cfg.n_samples);

  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> failures;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < cfg.n_samples; i = next++) {
      try {
        TelemetrySample& s = out[i];
        s.seed = substream_seed(cfg.seed, i);
        std::size_t attempts = 0;
        std::tie(s.tm, s.pol) =
            draw_stable_inputs(routing, s.seed, cfg.demand_pps, cfg.rho_max, cfg.max_attempts, &attempts);
        s.backend = cfg.backend;
        s.metadata["attempts"] = attempts;
        if (cfg.backend == Backend::analytic) {
          s.delays = simulate_analytic(routing, s.tm, s.pol, cfg.rho_max);
        } else {
          DesConfig des{des_seed_for(s.seed), cfg.des_horizon, cfg.des_warmup, cfg.rho_max};
          DesResult r = simulate_des(routing, s.tm, s.pol, des);
          s.metadata["des_horizon"] = cfg.des_horizon;
          s.metadata["des_warmup"] = cfg.des_warmup;
          s.metadata["under_sampled"] = r.any_under_sampled();
          if (r.any_under_sampled()) log().warn("sample {}: some pairs logged < {} packets", i, kUnderSampledThreshold);
          s.delays = std::move(r.delays);
        }
      } catch (...) {
        std::lock_guard lock(failure_mu);
        failures.push_back(std::current_exception());
        next = cfg.n_samples;
      }
    }
  };
  std::size_t n_threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min(n_threads, cfg.n_samples);
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (!failures.empty()) std::rethrow_exception(failures.front());

  std::size_t resamples = 0;
  for (auto& s : out) {
    resamples += s.metadata["attempts"].get<std::size_t>() - 1;
    store.append(topo, std::move(s));
  }
  log().info("collected {} samples ({} unstable draws resampled)", cfg.n_samples, resamples);
  return cfg.n_samples;
}

Dataset Dataset::select(const std::vector<std::size_t>& rows) const {
  Dataset d;
  d.feature_names = feature_names;
  d.target_names = target_names;
  d.topology_hash = topology_hash;
  d.meta = meta;
  d.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
  d.Y.resize(static_cast<Eigen::Index>(rows.size()), Y.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= this->rows()) throw Error(ErrorKind::invalid_argument, "row index out of range");
    d.X.row(Eigen::Index(i)) = X.row(Eigen::Index(rows[i]));
    d.Y.row(Eigen::Index(i)) = Y.row(Eigen::Index(rows[i]));
    if (!sample_ids.empty()) d.sample_ids.push_back(sample_ids[rows[i]]);
  }
  return d;
}

Dataset Dataset::select_features(const std::vector<std::size_t>& cols) const {
  Dataset d = *this;
  d.X.resize(X.rows(), static_cast<Eigen::Index>(cols.size()));
  d.feature_names.clear();
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (cols[i] >= static_cast<std::size_t>(X.cols())) throw Error(ErrorKind::invalid_argument, "feature out of range");
    d.X.col(Eigen::Index(i)) = X.col(Eigen::Index(cols[i]));
    d.feature_names.push_back(feature_names[cols[i]]);
  }
  return d;
}

std::vector<std::string> feature_names(const Topology& topo) {
  std::vector<std::string> names;
  for (std::size_t p = 0; p < topo.pair_count(); ++p) names.push_back("demand:" + topo.pair_name(p));
  for (std::size_t o = 0; o < topo.overlay_count(); ++o)
    for (LinkId l : topo.attachments(o)) names.push_back("ratio:" + topo.link_name(l));
  return names;
}

std::vector<std::string> target_names(const Topology& topo) {
  std::vector<std::string> names;
  for (std::size_t p = 0; p < topo.pair_count(); ++p) names.push_back("delay:" + topo.pair_name(p));
  return names;
}

Eigen::RowVectorXd feature_row(const TrafficMatrix& tm, const SplitPolicy& pol) {
  Eigen::RowVectorXd row(static_cast<Eigen::Index>(tm.demand_pps.size() + pol.parameter_count()));
  Eigen::Index c = 0;
  for (double v : tm.demand_pps) row(c++) = v;
  for (const auto& r : pol.ratios)
    for (double v : r) row(c++) = v;
  return row;
}

PathDelayVector delays_from_row(const Eigen::RowVectorXd& row) {
  PathDelayVector d;
  d.delay_s.assign(row.data(), row.data() + row.size());
  return d;
}

Dataset to_dataset(const Store& store, const Topology& topo) {
  if (store.empty()) throw Error(ErrorKind::insufficient_data, "store is empty");
  const std::string h = topology_hash(topo);
  if (store.topology_hash() && *store.topology_hash() != h)
    throw Error(ErrorKind::inconsistent_input, "store belongs to a different topology");
  Dataset ds;
  ds.feature_names = feature_names(topo);
  ds.target_names = target_names(topo);
  ds.topology_hash = h;
  const auto n = static_cast<Eigen::Index>(store.size());
  ds.X.resize(n, static_cast<Eigen::Index>(ds.feature_names.size()));
  ds.Y.resize(n, static_cast<Eigen::Index>(ds.target_names.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = store.samples()[std::size_t(i)];
    ds.X.row(i) = feature_row(s.tm, s.pol);
    for (std::size_t p = 0; p < s.delays.delay_s.size(); ++p) ds.Y(i, Eigen::Index(p)) = s.delays.delay_s[p];
    ds.sample_ids.push_back(s.sample_id);
  }
  return ds;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, std::size_t n_train, std::size_t n_test, std::uint64_t seed) {
  if (n_train + n_test > ds.rows())
    throw Error(ErrorKind::insufficient_data, "split needs " + std::to_string(n_train + n_test) + " rows, dataset has " +
                                                  std::to_string(ds.rows()));
  if (n_train == 0) log().warn("split: empty training set (evaluation-only workflow)");
  std::vector<std::size_t> idx(ds.rows());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  shuffle(idx, rng);
  std::vector<std::size_t> train(idx.begin(), idx.begin() + std::ptrdiff_t(n_train));
  std::vector<std::size_t> test(idx.begin() + std::ptrdiff_t(n_train), idx.begin() + std::ptrdiff_t(n_train + n_test));
  return {ds.select(train), ds.select(test)};
}

nlohmann::json to_json(const Dataset& ds) {
  return {{"schema_version", kSchemaVersion},
          {"kind", "dataset"},
          {"topology_hash", ds.topology_hash},
          {"feature_names", ds.feature_names},
          {"target_names", ds.target_names},
          {"sample_ids", ds.sample_ids},
          {"meta", ds.meta},
          {"X", matrix_rows(ds.X)},
          {"Y", matrix_rows(ds.Y)}};
}

Dataset dataset_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("kind", "") != "dataset" || j.value("schema_version", 0) != kSchemaVersion)
    schema("expected a dataset document");
  try {
    Dataset ds;
    ds.topology_hash = j.at("topology_hash").get<std::string>();
    ds.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    ds.target_names = j.at("target_names").get<std::vector<std::string>>();
    ds.sample_ids = j.value("sample_ids", std::vector<std::uint64_t>{});
    ds.meta = j.value("meta", nlohmann::json::object());
    ds.X = rows_matrix(j.at("X"), ds.feature_names.size());
    ds.Y = rows_matrix(j.at("Y"), ds.target_names.size());
    if (ds.X.rows() != ds.Y.rows()) schema("dataset X and Y row counts differ");
    return ds;
  } catch (const nlohmann::json::exception& e) {
    schema(std::string("malformed dataset: ") + e.what());
  }
}

}  // namespace kdn
