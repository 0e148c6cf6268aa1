#include "kdn/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kdn/errors.hpp"
#include "kdn/log.hpp"

namespace kdn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Scored {
  ObjectiveValue value;
  PathDelayVector delays;
};

Scored score(const ObjectiveSpec& objective, const TrafficMatrix& tm, const PolicyEvaluator& evaluator,
             const RoutingTable& routing, const SplitPolicy& pol, double rho_max) {
  Scored s;
  const LinkLoadReport loads = link_loads(routing, tm, pol);
  if (!(loads.max_utilization() < rho_max)) {
    s.value.base = s.value.total = kInf;
    return s;
  }
  s.delays = evaluator.delays(pol);
  s.value = objective.evaluate(s.delays, loads);
  return s;
}

nlohmann::json objective_json(const ObjectiveValue& v) {
  auto num = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
  nlohmann::json verdicts = nlohmann::json::array();
  for (const auto& c : v.verdicts)
    verdicts.push_back({{"metric", num(c.metric)}, {"bound", c.bound}, {"penalty", num(c.penalty)}, {"satisfied", c.satisfied}});
  return {{"base", num(v.base)}, {"penalty", num(v.penalty)}, {"total", num(v.total)}, {"verdicts", verdicts}};
}

}  // namespace

const char* to_string(EvalMode m) { return m == EvalMode::surrogate ? "surrogate" : "oracle"; }

SurrogateEvaluator::SurrogateEvaluator(const MlpModel& model, const Topology& topo, TrafficMatrix tm)
    : model_(model), tm_(std::move(tm)) {
  const std::string h = model.meta.value("topology_hash", "");
  if (!h.empty() && h != topology_hash(topo))
    throw Error(ErrorKind::inconsistent_input, "model was trained on a different topology");
  if (model.inputs() != topo.pair_count() + topo.total_attachments() || model.outputs() != topo.pair_count())
    throw Error(ErrorKind::inconsistent_input, "model dimensions do not match the topology");
  validate(topo, tm_);
}

PathDelayVector SurrogateEvaluator::delays(const SplitPolicy& pol) const {
  return delays_from_row(predict(model_, feature_row(tm_, pol)).row(0));
}

ObjectiveValue score_policy(const ObjectiveSpec& objective, const TrafficMatrix& tm, const PolicyEvaluator& evaluator,
                            const RoutingTable& routing, const SplitPolicy& pol, double rho_max) {
  return score(objective, tm, evaluator, routing, pol, rho_max).value;
}

void perturb_policy(SplitPolicy& pol, std::size_t node, double sigma, Rng& rng) {
  auto& r = pol.ratios.at(node);
  if (r.size() < 2) return;
  std::size_t top = 0;
  double sum = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) {
    r[k] += sigma * rng.normal();
    if (r[k] > r[top]) top = k;
  }
  for (double& x : r) sum += (x = std::max(0.0, x));
  if (sum <= 0.0) {
    std::fill(r.begin(), r.end(), 0.0);
    r[top] = 1.0;
    return;
  }
  for (double& x : r) x /= sum;
}

OptimizationResult optimize(const ObjectiveSpec& objective, const TrafficMatrix& tm, const PolicyEvaluator& evaluator,
                            const RoutingTable& routing, const OptimizeConfig& cfg) {
  if (cfg.restarts == 0 || cfg.budget < cfg.restarts)
    throw Error(ErrorKind::invalid_argument, "optimize needs restarts >= 1 and budget >= restarts");
  const Topology& topo = routing.topology();
  validate(topo, tm);

  std::vector<std::size_t> movable;
  for (std::size_t o = 0; o < topo.overlay_count(); ++o)
    if (topo.attachments(o).size() > 1) movable.push_back(o);

  OptimizationResult res;
  res.mode = evaluator.mode();
  res.objective_value = kInf;
  bool have_best = false;
  auto evaluate = [&](const SplitPolicy& pol) {
    Scored s = score(objective, tm, evaluator, routing, pol, cfg.rho_max);
    ++res.evaluations;
    if (!have_best || s.value.total < res.objective_value) {
      have_best = true;
      res.best_policy = pol;
      res.predicted = s.delays;
      res.objective_value = s.value.total;
      res.base_value = s.value.base;
      res.residual_penalty = s.value.penalty;
    }
    res.trace.push_back({res.evaluations, res.objective_value});
    return s.value.total;
  };

  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    const std::size_t restart_budget = cfg.budget / cfg.restarts + (r < cfg.budget % cfg.restarts ? 1 : 0);
    Rng rng(substream_seed(cfg.seed, r));
    SplitPolicy current = gen_policy(rng.next_u64(), topo);
    double current_value = evaluate(current);
    res.restart_start_objectives.push_back(current_value);
    if (movable.empty()) continue;

    double sigma = cfg.initial_sigma;
    std::size_t stall = 0;
    for (std::size_t step = 1; step < restart_budget; ++step) {
      SplitPolicy cand = current;
      perturb_policy(cand, movable[rng.below(movable.size())], sigma, rng);
      const double v = evaluate(cand);
      if (v < current_value) {
        current = std::move(cand);
        current_value = v;
        stall = 0;
      } else if (++stall >= cfg.stall_steps) {
        sigma = std::max(sigma / 2.0, cfg.sigma_floor);
        stall = 0;
      }
    }
  }
  res.infeasible = !std::isfinite(res.objective_value) || res.residual_penalty > kInfeasiblePenalty;
  log().debug("optimize ({}): {} evaluations, best objective {:.6e}, penalty {:.3e}", to_string(res.mode),
              res.evaluations, res.objective_value, res.residual_penalty);
  return res;
}

nlohmann::json to_json(const OptimizationResult& r, const Topology& topo) {
  auto num = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& t : r.trace) trace.push_back({t.iteration, num(t.objective)});
  nlohmann::json starts = nlohmann::json::array();
  for (double s : r.restart_start_objectives) starts.push_back(num(s));
  nlohmann::json predicted = nlohmann::json::object();
  for (std::size_t p = 0; p < r.predicted.delay_s.size(); ++p) predicted[topo.pair_name(p)] = r.predicted.delay_s[p];
  return {{"schema_version", kSchemaVersion},
          {"kind", "optimization_result"},
          {"mode", to_string(r.mode)},
          {"best_policy", to_json(topo, r.best_policy)},
          {"predicted_delay_s", predicted},
          {"objective_value", num(r.objective_value)},
          {"base_value", num(r.base_value)},
          {"residual_penalty", num(r.residual_penalty)},
          {"infeasible", r.infeasible},
          {"evaluations", r.evaluations},
          {"restart_start_objectives", starts},
          {"trace", trace}};
}

ClosedLoopReport closed_loop_step(const Intent& intent, const TrafficMatrix& tm, const MlpModel& model,
                                  Controller& controller, Store& store, const ClosedLoopConfig& cfg) {
  const Topology& topo = controller.topology();
  const RoutingTable& routing = controller.routing();
  const ObjectiveSpec spec = render(intent);
  ClosedLoopReport rep;
  rep.before_policy = controller.active_policy();
  rep.before = controller.measure(tm, cfg.ground_truth, cfg.des);
  rep.before_objective = spec.evaluate(rep.before, link_loads(routing, tm, rep.before_policy));
  rep.applied_policy = rep.before_policy;

  if (cfg.optimize.budget > 0) {
    const SurrogateEvaluator evaluator(model, topo, tm);
    OptimizationResult res = optimize(spec, tm, evaluator, routing, cfg.optimize);
    if (!std::isfinite(res.objective_value))
      throw Error(ErrorKind::instability, "optimizer found no stable candidate policy");
    if (res.infeasible && !cfg.force)
      throw Error(ErrorKind::state, "surrogate predicts a constraint violation (penalty " +
                                        std::to_string(res.residual_penalty) + "); not applying without force");
    controller.apply_policy(res.best_policy, PolicySource::kplane);
    rep.applied_policy = res.best_policy;
    rep.applied = true;
    rep.optimization = std::move(res);
    rep.after = controller.measure(tm, cfg.ground_truth, cfg.des);
  } else {
    rep.after = rep.before;
  }
  rep.after_objective = spec.evaluate(rep.after, link_loads(routing, tm, rep.applied_policy));
  rep.improved = rep.after_objective.total < rep.before_objective.total;

  TelemetrySample sample;
  sample.tm = tm;
  sample.pol = rep.applied_policy;
  sample.delays = rep.after;
  sample.backend = cfg.ground_truth;
  sample.seed = cfg.optimize.seed;
  sample.metadata = {{"source", "closed_loop"}, {"applied", rep.applied}};
  if (cfg.ground_truth == Backend::des) {
    sample.metadata["des_seed"] = cfg.des.seed;
    sample.metadata["des_horizon"] = cfg.des.horizon_packets;
    sample.metadata["des_warmup"] = cfg.des.warmup_fraction;
  }
  rep.sample_id = store.append(topo, std::move(sample)).sample_id;
  return rep;
}

nlohmann::json to_json(const ClosedLoopReport& r, const Topology& topo) {
  nlohmann::json j{{"schema_version", kSchemaVersion},
                   {"kind", "closed_loop_report"},
                   {"before_policy", to_json(topo, r.before_policy)},
                   {"applied_policy", to_json(topo, r.applied_policy)},
                   {"before_delay_s", r.before.delay_s},
                   {"after_delay_s", r.after.delay_s},
                   {"before_mean_delay_s", r.before.mean()},
                   {"after_mean_delay_s", r.after.mean()},
                   {"before_objective", objective_json(r.before_objective)},
                   {"after_objective", objective_json(r.after_objective)},
                   {"applied", r.applied},
                   {"improved", r.improved},
                   {"sample_id", r.sample_id}};
  j["optimization"] = r.optimization ? to_json(*r.optimization, topo) : nlohmann::json(nullptr);
  return j;
}

}  // namespace kdn
