#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kdn/controller.hpp"
#include "kdn/errors.hpp"
#include "kdn/intent.hpp"
#include "kdn/kplane.hpp"
#include "kdn/netmodel.hpp"
#include "kdn/optimizer.hpp"
#include "kdn/simulator.hpp"
#include "kdn/telemetry.hpp"
#include "kdn/vnfmodel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace kdn;

namespace {

enum Exit { ok = 0, other = 1, usage = 2, schema = 3, instability = 4, training = 5 };

struct Options {
  std::uint64_t seed = 1;
  std::string topo, store, model, intent, policy, traffic, data, state;
  std::string backend = "analytic";
  std::size_t train_size = 0, test_size = 0;
  std::size_t budget = 2000, restarts = 8;
  std::size_t n = 0;
  std::string out = "kdn-out";
  // topology
  std::size_t n_overlay = 12, n_underlay = 19, n_links = 72;
  // dataset
  double demand_lo = kDefaultDemandRange.lo, demand_hi = kDefaultDemandRange.hi;
  std::uint64_t des_horizon = 200'000;
  std::size_t threads = 0;
  // training
  std::size_t hidden = 64, batch = 32, epochs = 500, patience = 20;
  double lr = 1e-3, val_fraction = 0.1;
  std::string sizes = "600,1200,2400,4800,9600";
  // optimize / loop
  std::string mode = "surrogate";
  bool force = false;
  // vnf
  std::string profile = "fw-like", features = "all";
  bool noise_free = false;
  double threshold = 0.05;
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error(ErrorKind::invalid_argument, "cannot write " + p.string());
  f << text;
}

void write_json(const fs::path& p, const json& j) { write_json_file(p.string(), j); }

std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

TrainConfig train_config(const Options& o) {
  TrainConfig c;
  c.hidden_units = o.hidden;
  c.learning_rate = o.lr;
  c.batch_size = o.batch;
  c.max_epochs = o.epochs;
  c.patience = o.patience;
  c.seed = o.seed;
  c.validation_fraction = o.val_fraction;
  c.validate();
  return c;
}

std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stoul(tok));
    } catch (const std::exception&) {
      throw Error(ErrorKind::invalid_argument, "bad size list: " + s);
    }
  }
  if (out.empty()) throw Error(ErrorKind::invalid_argument, "empty size list");
  return out;
}

std::string require(const std::string& v, const char* flag) {
  if (v.empty()) throw Error(ErrorKind::invalid_argument, std::string("missing required ") + flag);
  return v;
}

std::size_t require_count(std::size_t n) {
  if (n == 0) throw Error(ErrorKind::invalid_argument, "missing required --n (> 0)");
  return n;
}

Topology load_topology(const Options& o) { return topology_from_json(read_json_file(require(o.topo, "--topo"))); }

MlpModel load_model(const Options& o) { return model_from_json(read_json_file(require(o.model, "--model"))); }

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::schema, "cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Intent load_intent(const Options& o, const Topology& topo) {
  return parse_intent(read_text(require(o.intent, "--intent")), topo);
}

TrafficMatrix load_or_gen_traffic(const Options& o, const Topology& topo) {
  if (!o.traffic.empty()) return traffic_from_json(read_json_file(o.traffic), topo);
  return gen_traffic(substream_seed(o.seed, 1), topo, {o.demand_lo, o.demand_hi});
}

SplitPolicy load_or_gen_policy(const Options& o, const Topology& topo) {
  if (!o.policy.empty()) return policy_from_json(read_json_file(o.policy), topo);
  return gen_policy(substream_seed(o.seed, 2), topo);
}

std::string metrics_line(const EvalMetrics& m) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "mse %.6f  mean relative error %.4f%%", m.mse, 100.0 * m.mean_rel_err);
  return buf;
}

json metrics_json(const EvalMetrics& m, const Dataset& test) {
  json per_pair = json::object();
  for (std::size_t i = 0; i < m.per_pair_rel_err.size() && i < test.target_names.size(); ++i)
    per_pair[test.target_names[i]] = m.per_pair_rel_err[i];
  return {{"mse", m.mse}, {"mean_rel_err", m.mean_rel_err}, {"test_rows", test.rows()}, {"per_target_rel_err", per_pair}};
}

Dataset store_dataset(const Options& o, const Topology& topo) {
  const Store store = Store::open(require(o.store, "--store"));
  return to_dataset(store, topo);
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::string csv = "train_size,mse,mean_rel_err\n";
  for (const auto& p : curve) csv += std::to_string(p.train_size) + "," + fmt_double(p.mse) + "," + fmt_double(p.mean_rel_err) + "\n";
  return csv;
}

std::string predictions_csv(const MlpModel& model, const Dataset& ds) {
  const Eigen::MatrixXd pred = predict(model, ds.X);
  std::string csv = "sample_id,target,actual,predicted\n";
  for (Eigen::Index r = 0; r < ds.X.rows(); ++r)
    for (Eigen::Index c = 0; c < ds.Y.cols(); ++c)
      csv += std::to_string(ds.sample_ids.empty() ? std::uint64_t(r) : ds.sample_ids[std::size_t(r)]) + "," +
             ds.target_names[std::size_t(c)] + "," + fmt_double(ds.Y(r, c)) + "," + fmt_double(pred(r, c)) + "\n";
  return csv;
}

CollectConfig collect_config(const Options& o, std::size_t n) {
  CollectConfig c;
  c.n_samples = n;
  c.seed = o.seed;
  c.backend = backend_from_string(o.backend);
  c.demand_pps = {o.demand_lo, o.demand_hi};
  c.des_horizon = o.des_horizon;
  c.threads = o.threads;
  return c;
}

// ---- commands ------------------------------------------------------------

int cmd_topo_gen(const Options& o, const fs::path& out) {
  TopologyParams p;
  p.n_overlay = o.n_overlay;
  p.n_underlay = o.n_underlay;
  p.n_links = o.n_links;
  const Topology topo = gen_topology(o.seed, p);
  write_json(out / "topology.json", to_json(topo));
  std::cout << "topology " << topology_hash(topo) << ": " << topo.overlay_count() << " overlay, "
            << topo.nodes().size() - topo.overlay_count() << " underlay nodes, " << topo.links().size()
            << " directed links -> " << (out / "topology.json").string() << "\n";
  return ok;
}

int cmd_dataset_gen(const Options& o, const fs::path& out) {
  const Topology topo = load_topology(o);
  const std::string store_path = o.store.empty() ? (out / "store.samples.jsonl").string() : o.store;
  Store store = Store::open(store_path);
  const std::size_t before = store.size();
  collect(topo, collect_config(o, require_count(o.n)), store);
  write_json(out / "dataset.json", to_json(to_dataset(store, topo)));
  std::cout << "appended " << store.size() - before << " " << o.backend << " samples to " << store_path << " ("
            << store.size() << " total)\n";
  return ok;
}

int cmd_train(const Options& o, const fs::path& out) {
  const Topology topo = load_topology(o);
  const Dataset ds = store_dataset(o, topo);
  const std::size_t n_train = o.train_size ? o.train_size : ds.rows() - o.test_size;
  auto [train, test] = split(ds, n_train, o.test_size, o.seed);
  const MlpModel model = fit(train, train_config(o));
  write_json(out / "model.json", to_json(model));
  std::cout << "trained on " << train.rows() << " samples (best epoch " << model.meta.value("best_epoch", 0) << ")";
  if (test.rows() > 0) {
    const EvalMetrics m = evaluate(model, test);
    write_json(out / "metrics.json", metrics_json(m, test));
    std::cout << "; test " << metrics_line(m);
  }
  std::cout << "\n";
  return ok;
}

int cmd_eval(const Options& o, const fs::path& out) {
  const Topology topo = load_topology(o);
  const MlpModel model = load_model(o);
  Dataset ds = store_dataset(o, topo);
  if (o.test_size > 0) ds = split(ds, o.train_size, o.test_size, o.seed).second;
  const EvalMetrics m = evaluate(model, ds);
  write_json(out / "metrics.json", metrics_json(m, ds));
  write_text(out / "predictions.csv", predictions_csv(model, ds));
  std::cout << "evaluated " << ds.rows() << " samples: " << metrics_line(m) << "\n";
  return ok;
}

int cmd_curve(const Options& o, const fs::path& out) {
  const Topology topo = load_topology(o);
  const Dataset ds = store_dataset(o, topo);
  const auto curve = learning_curve(ds, parse_sizes(o.sizes), train_config(o), o.test_size ? o.test_size : 300);
  write_text(out / "curve.csv", curve_csv(curve));
  for (const auto& p : curve)
    std::printf("%6zu  mse %.6f  rel %.4f%%\n", p.train_size, p.mse, 100.0 * p.mean_rel_err);
  return ok;
}

int cmd_optimize(const Options& o, const fs::path& out) {
  const Topology topo = load_topology(o);
  const RoutingTable routing(topo);
  const TrafficMatrix tm = load_or_gen_traffic(o, topo);
  const ObjectiveSpec spec = render(load_intent(o, topo));
  OptimizeConfig cfg;
  cfg.budget = o.budget;
  cfg.restarts = o.restarts;
  cfg.seed = o.seed;
  std::unique_ptr<PolicyEvaluator> evaluator;
  std::optional<MlpModel> model;
  if (o.mode == "surrogate") {
    model = load_model(o);
    evaluator = std::make_unique<SurrogateEvaluator>(*model, topo, tm);
  } else if (o.mode == "oracle") {
    evaluator = std::make_unique<OracleEvaluator>(routing, tm);
  } else {
    throw Error(ErrorKind::invalid_argument, "--mode must be surrogate or oracle");
  }
  const OptimizationResult res = optimize(spec, tm, *evaluator, routing, cfg);
  write_json(out / "optimization.json", to_json(res, topo));
  write_json(out / "policy.json", to_json(topo, res.best_policy));
  write_json(out / "traffic.json", to_json(topo, tm));
  std::printf("%s search, %zu evaluations: objective %.6g (base %.6g, penalty %.3g)%s\n", to_string(res.mode),
              res.evaluations, res.objective_value, res.base_value, res.residual_penalty,
              res.infeasible ? " INFEASIBLE" : "");
  return ok;
}

int cmd_whatif(const Options& o, const fs::path& out) {
  const Topology topo = load_topology(o);
  const SplitPolicy pol = load_or_gen_policy(o, topo);
  const TrafficMatrix tm = load_or_gen_traffic(o, topo);
  Controller ctl(topo, pol);
  ctl.bind_model(std::make_shared<const MlpModel>(load_model(o)));
  if (!o.intent.empty()) ctl.set_intent(load_intent(o, topo));
  const WhatIfResult r = ctl.what_if(pol, tm);
  json predicted = json::object();
  for (std::size_t p = 0; p < r.predicted.delay_s.size(); ++p) predicted[topo.pair_name(p)] = r.predicted.delay_s[p];
  json j{{"schema_version", kSchemaVersion},
         {"kind", "what_if"},
         {"policy", to_json(topo, pol)},
         {"traffic", to_json(topo, tm)},
         {"predicted_delay_s", predicted},
         {"predicted_mean_delay_s", r.predicted.mean()},
         {"max_utilization", r.loads.max_utilization()}};
  if (r.objective) j["objective"] = {{"base", r.objective->base}, {"penalty", r.objective->penalty}, {"total", r.objective->total}};
  write_json(out / "whatif.json", j);
  std::printf("predicted mean delay %.6g s, max utilization %.3f\n", r.predicted.mean(), r.loads.max_utilization());
  if (r.objective) std::printf("objective %.6g (penalty %.3g)\n", r.objective->total, r.objective->penalty);
  return ok;
}

int cmd_intent_check(const Options& o, const fs::path&) {
  const Topology topo = load_topology(o);
  std::cout << to_text(load_intent(o, topo), topo);
  return ok;
}

int cmd_intent_apply(const Options& o, const fs::path& out) {
  const Topology topo = load_topology(o);
  const Intent intent = load_intent(o, topo);
  std::unique_ptr<Controller> ctl;
  if (!o.state.empty())
    ctl = Controller::from_snapshot(read_json_file(o.state), topo);
  else
    ctl = std::make_unique<Controller>(topo, load_or_gen_policy(o, topo));
  const MlpModel model = load_model(o);
  ctl->bind_model(std::make_shared<const MlpModel>(model));
  ctl->set_intent(intent);
  const TrafficMatrix tm = load_or_gen_traffic(o, topo);
  Store store = Store::open(o.store.empty() ? (out / "store.samples.jsonl").string() : o.store);
  ClosedLoopConfig cfg;
  cfg.optimize.budget = o.budget;
  cfg.optimize.restarts = o.restarts;
  cfg.optimize.seed = o.seed;
  cfg.ground_truth = backend_from_string(o.backend);
  cfg.des.seed = o.seed;
  cfg.des.horizon_packets = o.des_horizon;
  cfg.force = o.force;
  const ClosedLoopReport rep = closed_loop_step(intent, tm, model, *ctl, store, cfg);
  write_json(out / "closed_loop.json", to_json(rep, topo));
  write_json(out / "controller_state.json", ctl->snapshot());
  std::printf("measured mean delay %.6g s -> %.6g s; objective %.6g -> %.6g (%s)\n", rep.before.mean(), rep.after.mean(),
              rep.before_objective.total, rep.after_objective.total,
              !rep.applied ? "not applied" : rep.improved ? "improved" : "not improved");
  return ok;
}

VnfProfile vnf_profile(const Options& o) {
  VnfProfile p = VnfProfile::by_name(o.profile);
  return o.noise_free ? p.noise_free() : p;
}

Dataset vnf_inputs(const Options& o, const Dataset& ds) {
  if (o.features == "all") return ds;
  std::vector<std::string> names;
  std::stringstream ss(o.features);
  for (std::string tok; std::getline(ss, tok, ',');) names.push_back(tok);
  return vnf_feature_subset(ds, names);
}

int cmd_vnf_gen(const Options& o, const fs::path& out) {
  const Dataset ds = gen_vnf_dataset(vnf_profile(o), require_count(o.n), o.seed);
  write_json(out / "vnf_dataset.json", to_json(ds));
  std::cout << "generated " << ds.rows() << " " << o.profile << " batches with " << ds.feature_names.size()
            << " features\n";
  return ok;
}

std::pair<Dataset, Dataset> vnf_split(const Options& o) {
  const Dataset ds = vnf_inputs(o, dataset_from_json(read_json_file(require(o.data, "--data"))));
  const std::size_t test = o.test_size ? o.test_size : 200;
  const std::size_t train = o.train_size ? o.train_size : ds.rows() - std::min(test, ds.rows());
  return split(ds, train, test, o.seed);
}

void report_vnf(const VnfReport& r, const Dataset& test, const fs::path& out) {
  json j = metrics_json(r.metrics, test);
  j["median_rel_err"] = r.p50;
  j["p90_rel_err"] = r.p90;
  j["p95_rel_err"] = r.p95;
  write_json(out / "vnf_metrics.json", j);
  write_text(out / "error_cdf.csv", cdf_csv(r.cdf));
  std::printf("%s; relative error p50 %.4f%%  p90 %.4f%%  p95 %.4f%%\n", metrics_line(r.metrics).c_str(), 100 * r.p50,
              100 * r.p90, 100 * r.p95);
}

int cmd_vnf_train(const Options& o, const fs::path& out) {
  auto [train, test] = vnf_split(o);
  const MlpModel model = fit_vnf(train, train_config(o));
  write_json(out / "model.json", to_json(model));
  std::cout << "trained on " << train.rows() << " batches, " << train.feature_names.size() << " features\n";
  report_vnf(evaluate_vnf(model, test), test, out);
  return ok;
}

int cmd_vnf_eval(const Options& o, const fs::path& out) {
  const Dataset test = vnf_split(o).second;
  report_vnf(evaluate_vnf(load_model(o), test), test, out);
  return ok;
}

// Shared setup of the overlay experiments: default topology plus analytic telemetry.
std::pair<Topology, Dataset> overlay_experiment(const Options& o, std::size_t n, const fs::path& out) {
  const Topology topo = gen_topology(o.seed);
  write_json(out / "topology.json", to_json(topo));
  Store store;
  collect(topo, collect_config(o, n), store);
  return {topo, to_dataset(store, topo)};
}

int cmd_repro_fig4(const Options& o, const fs::path& out) {
  const auto sizes = parse_sizes(o.sizes);
  const std::size_t test = o.test_size ? o.test_size : 300;
  auto [topo, ds] = overlay_experiment(o, *std::max_element(sizes.begin(), sizes.end()) + test, out);
  const auto curve = learning_curve(ds, sizes, train_config(o), test);
  write_text(out / "fig4.csv", curve_csv(curve));
  std::vector<double> mse;
  for (const auto& p : curve) mse.push_back(p.mse);
  const auto smoothed = smooth(mse, 2);
  for (std::size_t i = 0; i < curve.size(); ++i)
    std::printf("%6zu  mse %.6f  smoothed %.6f  rel %.4f%%\n", curve[i].train_size, curve[i].mse, smoothed[i],
                100.0 * curve[i].mean_rel_err);
  std::cout << "wrote " << (out / "fig4.csv").string() << "\n";
  return ok;
}

int cmd_repro_overlay_error(const Options& o, const fs::path& out) {
  const std::size_t train = o.train_size ? o.train_size : 3000;
  const std::size_t test = o.test_size ? o.test_size : 300;
  auto [topo, ds] = overlay_experiment(o, train + test, out);
  auto [tr, te] = split(ds, train, test, o.seed);
  const MlpModel model = fit(tr, train_config(o));
  const EvalMetrics m = evaluate(model, te);
  write_json(out / "model.json", to_json(model));
  write_json(out / "metrics.json", metrics_json(m, te));
  const bool pass = m.mean_rel_err <= o.threshold;
  std::printf("%zu training samples: mean relative error %.4f%% (threshold %.2f%%) %s\n", train, 100 * m.mean_rel_err,
              100 * o.threshold, pass ? "PASS" : "FAIL");
  return pass ? ok : other;
}

int cmd_repro_closed_loop(const Options& o, const fs::path& out) {
  const std::size_t train = o.train_size ? o.train_size : 9600;
  auto [topo, ds] = overlay_experiment(o, train, out);
  const MlpModel model = fit(ds, train_config(o));
  write_json(out / "model.json", to_json(model));
  const RoutingTable routing(topo);
  auto [tm, initial] = draw_stable_inputs(routing, substream_seed(o.seed, 0xC105ED), {o.demand_lo, o.demand_hi},
                                          kDefaultRhoMax, 1000);
  Controller ctl(topo, initial);
  const std::string text = o.intent.empty() ? "minimize mean_delay\n" : read_text(o.intent);
  const Intent intent = parse_intent(text, topo);
  ctl.bind_model(std::make_shared<const MlpModel>(model));
  ctl.set_intent(intent);
  Store store;
  ClosedLoopConfig cfg;
  cfg.optimize.budget = o.budget;
  cfg.optimize.restarts = o.restarts;
  cfg.optimize.seed = o.seed;
  cfg.force = o.force;
  const ClosedLoopReport rep = closed_loop_step(intent, tm, model, ctl, store, cfg);
  write_json(out / "closed_loop.json", to_json(rep, topo));
  std::printf("random initial policy: mean delay %.6g s; after step: %.6g s (%+.2f%%)\n", rep.before.mean(),
              rep.after.mean(), 100.0 * (rep.after.mean() / rep.before.mean() - 1.0));
  return ok;
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::invalid_argument:
    case ErrorKind::infeasible_parameters:
      return usage;
    case ErrorKind::schema:
    case ErrorKind::parse:
    case ErrorKind::inconsistent_input:
      return schema;
    case ErrorKind::instability:
      return instability;
    case ErrorKind::training_failure:
      return training;
    default:
      return other;
  }
}

json run_config(const CLI::App* sub, const std::vector<std::string>& path) {
  json opts = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    const std::string name = opt->get_name(false, true);
    if (name.empty() || name == "--help" || name == "-h" || name == "--out") continue;
    std::string value;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      for (std::size_t i = 0; i < res.size(); ++i) value += (i ? "," : "") + res[i];
      if (res.empty()) value = "true";
    } else {
      value = opt->get_default_str();
    }
    if (!value.empty()) opts[name.substr(2)] = value;
  }
  return {{"schema_version", kSchemaVersion}, {"kind", "run_config"}, {"command", path}, {"options", opts}};
}

// Flag form of a saved run config, for `kdn rerun`.
std::vector<std::string> argv_from_config(const json& cfg, const std::string& out) {
  std::vector<std::string> args;
  try {
    for (const auto& c : cfg.at("command")) args.push_back(c.get<std::string>());
    for (const auto& [k, v] : cfg.at("options").items()) {
      const std::string s = v.get<std::string>();
      if (s == "true" || s == "false") {
        if (s == "true") args.push_back("--" + k);
        continue;
      }
      args.push_back("--" + k);
      args.push_back(s);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::schema, std::string("malformed run config: ") + e.what());
  }
  args.push_back("--out");
  args.push_back(out);
  return args;
}

int run(std::vector<std::string> args) {
  CLI::App app{"Knowledge-defined networking testbed"};
  app.require_subcommand(1);
  Options o;
  int status = ok;

  auto common = [&](CLI::App* c) {
    c->add_option("--seed", o.seed, "Random seed")->capture_default_str();
    c->add_option("--out", o.out, "Output directory")->capture_default_str();
  };
  auto topo_flag = [&](CLI::App* c) { c->add_option("--topo", o.topo, "Topology JSON"); };
  auto train_flags = [&](CLI::App* c) {
    c->add_option("--train-size", o.train_size, "Training rows (0 = all but test)")->capture_default_str();
    c->add_option("--test-size", o.test_size, "Test rows")->capture_default_str();
    c->add_option("--hidden", o.hidden, "Hidden units")->capture_default_str();
    c->add_option("--lr", o.lr, "Learning rate")->capture_default_str();
    c->add_option("--batch", o.batch, "Mini-batch size")->capture_default_str();
    c->add_option("--epochs", o.epochs, "Maximum epochs")->capture_default_str();
    c->add_option("--patience", o.patience, "Early-stopping patience")->capture_default_str();
    c->add_option("--validation", o.val_fraction, "Validation fraction")->capture_default_str();
  };
  auto collect_flags = [&](CLI::App* c) {
    c->add_option("--backend", o.backend, "analytic or des")->check(CLI::IsMember({"analytic", "des"}))->capture_default_str();
    c->add_option("--demand-lo", o.demand_lo, "Lowest pair demand (pps)")->capture_default_str();
    c->add_option("--demand-hi", o.demand_hi, "Highest pair demand (pps)")->capture_default_str();
    c->add_option("--des-horizon", o.des_horizon, "DES packets per sample")->capture_default_str();
    c->add_option("--threads", o.threads, "Worker threads (0 = all cores)")->capture_default_str();
  };
  auto search_flags = [&](CLI::App* c) {
    c->add_option("--budget", o.budget, "Objective evaluations")->capture_default_str();
    c->add_option("--restarts", o.restarts, "Search restarts")->capture_default_str();
  };

  std::map<CLI::App*, std::pair<std::vector<std::string>, int (*)(const Options&, const fs::path&)>> handlers;
  auto command = [&](CLI::App* parent, const std::string& name, const std::string& desc,
                     int (*fn)(const Options&, const fs::path&), std::vector<std::string> path) {
    CLI::App* c = parent->add_subcommand(name, desc);
    common(c);
    handlers[c] = {std::move(path), fn};
    return c;
  };

  CLI::App* topo = app.add_subcommand("topo", "Topology tools")->require_subcommand(1);
  CLI::App* tg = command(topo, "gen", "Generate a random overlay/underlay topology", cmd_topo_gen, {"topo", "gen"});
  tg->add_option("--overlay", o.n_overlay, "Overlay nodes")->capture_default_str();
  tg->add_option("--underlay", o.n_underlay, "Underlay nodes")->capture_default_str();
  tg->add_option("--links", o.n_links, "Bidirectional connections")->capture_default_str();

  CLI::App* dataset = app.add_subcommand("dataset", "Telemetry collection")->require_subcommand(1);
  CLI::App* dg = command(dataset, "gen", "Collect samples into a store", cmd_dataset_gen, {"dataset", "gen"});
  topo_flag(dg);
  dg->add_option("--store", o.store, "Store file (.samples.jsonl)");
  dg->add_option("-n,--n", o.n, "Samples to append");
  collect_flags(dg);

  CLI::App* tr = command(&app, "train", "Train the delay model", cmd_train, {"train"});
  topo_flag(tr);
  tr->add_option("--store", o.store, "Store file");
  train_flags(tr);

  CLI::App* ev = command(&app, "eval", "Evaluate a model on stored samples", cmd_eval, {"eval"});
  topo_flag(ev);
  ev->add_option("--store", o.store, "Store file");
  ev->add_option("--model", o.model, "Model JSON");
  ev->add_option("--train-size", o.train_size, "Training rows of the split to skip")->capture_default_str();
  ev->add_option("--test-size", o.test_size, "Test rows (0 = evaluate all)")->capture_default_str();

  CLI::App* cv = command(&app, "curve", "Learning curve over training-set sizes", cmd_curve, {"curve"});
  topo_flag(cv);
  cv->add_option("--store", o.store, "Store file");
  cv->add_option("--sizes", o.sizes, "Comma-separated training sizes")->capture_default_str();
  train_flags(cv);

  CLI::App* op = command(&app, "optimize", "Search split policies for an intent", cmd_optimize, {"optimize"});
  topo_flag(op);
  op->add_option("--model", o.model, "Model JSON (surrogate mode)");
  op->add_option("--intent", o.intent, "Intent file");
  op->add_option("--traffic", o.traffic, "Traffic matrix JSON (default: generated from seed)");
  op->add_option("--mode", o.mode, "surrogate or oracle")->check(CLI::IsMember({"surrogate", "oracle"}))->capture_default_str();
  op->add_option("--demand-lo", o.demand_lo, "Lowest generated demand (pps)")->capture_default_str();
  op->add_option("--demand-hi", o.demand_hi, "Highest generated demand (pps)")->capture_default_str();
  search_flags(op);

  CLI::App* wi = command(&app, "whatif", "Predict delays for a candidate policy", cmd_whatif, {"whatif"});
  topo_flag(wi);
  wi->add_option("--model", o.model, "Model JSON");
  wi->add_option("--policy", o.policy, "Candidate policy JSON (default: generated from seed)");
  wi->add_option("--traffic", o.traffic, "Traffic matrix JSON (default: generated from seed)");
  wi->add_option("--intent", o.intent, "Intent file");
  wi->add_option("--demand-lo", o.demand_lo, "Lowest generated demand (pps)")->capture_default_str();
  wi->add_option("--demand-hi", o.demand_hi, "Highest generated demand (pps)")->capture_default_str();

  CLI::App* in = app.add_subcommand("intent", "Intent tools")->require_subcommand(1);
  CLI::App* ic = command(in, "check", "Parse an intent and print its canonical form", cmd_intent_check, {"intent", "check"});
  topo_flag(ic);
  ic->add_option("--intent", o.intent, "Intent file");
  CLI::App* ia = command(in, "apply", "One closed-loop step for an intent", cmd_intent_apply, {"intent", "apply"});
  topo_flag(ia);
  ia->add_option("--intent", o.intent, "Intent file");
  ia->add_option("--model", o.model, "Model JSON");
  ia->add_option("--store", o.store, "Store receiving the re-measured sample");
  ia->add_option("--state", o.state, "Controller snapshot to resume from");
  ia->add_option("--policy", o.policy, "Initial policy JSON (default: generated from seed)");
  ia->add_option("--traffic", o.traffic, "Traffic matrix JSON (default: generated from seed)");
  ia->add_flag("--force", o.force, "Apply even if the model predicts a violation");
  collect_flags(ia);
  search_flags(ia);

  CLI::App* vnf = app.add_subcommand("vnf", "VNF CPU models")->require_subcommand(1);
  CLI::App* vg = command(vnf, "gen", "Generate synthetic traffic batches", cmd_vnf_gen, {"vnf", "gen"});
  vg->add_option("--profile", o.profile, "fw-like, ids-like or switch-like")->capture_default_str();
  vg->add_option("-n,--n", o.n, "Batches");
  vg->add_flag("--noise-free", o.noise_free, "Drop measurement noise");
  CLI::App* vt = command(vnf, "train", "Train a CPU model", cmd_vnf_train, {"vnf", "train"});
  vt->add_option("--data", o.data, "VNF dataset JSON");
  vt->add_option("--features", o.features, "all or a comma-separated feature list")->capture_default_str();
  train_flags(vt);
  CLI::App* ve = command(vnf, "eval", "Error CDF of a CPU model", cmd_vnf_eval, {"vnf", "eval"});
  ve->add_option("--data", o.data, "VNF dataset JSON");
  ve->add_option("--model", o.model, "Model JSON");
  ve->add_option("--features", o.features, "all or a comma-separated feature list")->capture_default_str();
  ve->add_option("--train-size", o.train_size, "Training rows of the split")->capture_default_str();
  ve->add_option("--test-size", o.test_size, "Test rows")->capture_default_str();

  CLI::App* repro = app.add_subcommand("repro", "End-to-end experiments")->require_subcommand(1);
  CLI::App* rf = command(repro, "fig4", "MSE versus training-set size", cmd_repro_fig4, {"repro", "fig4"});
  rf->add_option("--sizes", o.sizes, "Comma-separated training sizes")->capture_default_str();
  train_flags(rf);
  CLI::App* ro = command(repro, "overlay-error", "Delay-model accuracy on the default topology", cmd_repro_overlay_error,
                         {"repro", "overlay-error"});
  ro->add_option("--threshold", o.threshold, "Pass threshold on mean relative error")->capture_default_str();
  train_flags(ro);
  CLI::App* rc = command(repro, "closed-loop", "Surrogate-driven step from a random policy", cmd_repro_closed_loop,
                         {"repro", "closed-loop"});
  rc->add_option("--intent", o.intent, "Intent file (default: minimize mean_delay)");
  rc->add_flag("--force", o.force, "Apply even if the model predicts a violation");
  train_flags(rc);
  search_flags(rc);

  std::string rerun_cfg;
  CLI::App* rr = app.add_subcommand("rerun", "Re-execute a saved run_config.json");
  rr->add_option("config", rerun_cfg, "run_config.json")->required();
  rr->add_option("--out", o.out, "Output directory")->capture_default_str();

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : usage;
  }

  if (rr->parsed()) return run(argv_from_config(read_json_file(rerun_cfg), o.out));

  for (auto& [sub, h] : handlers) {
    if (!sub->parsed()) continue;
    const fs::path out(o.out);
    fs::create_directories(out);
    write_json(out / "run_config.json", run_config(sub, h.first));
    status = h.second(o, out);
  }
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    return run(std::move(args));
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return other;
  }
}
