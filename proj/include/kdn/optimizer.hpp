#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "kdn/controller.hpp"
#include "kdn/intent.hpp"
#include "kdn/kplane.hpp"
#include "kdn/random.hpp"
#include "kdn/simulator.hpp"

namespace kdn {

enum class EvalMode { surrogate, oracle };

const char* to_string(EvalMode m);

// Maps a candidate policy to per-pair delays for one traffic matrix.
class PolicyEvaluator {
 public:
  virtual ~PolicyEvaluator() = default;
  virtual EvalMode mode() const = 0;
  virtual PathDelayVector delays(const SplitPolicy& pol) const = 0;
};

class SurrogateEvaluator final : public PolicyEvaluator {
 public:
  // Rejects a model whose recorded topology hash differs from the topology's.
  SurrogateEvaluator(const MlpModel& model, const Topology& topo, TrafficMatrix tm);
  EvalMode mode() const override { return EvalMode::surrogate; }
  PathDelayVector delays(const SplitPolicy& pol) const override;

 private:
  const MlpModel& model_;
  TrafficMatrix tm_;
};

class OracleEvaluator final : public PolicyEvaluator {
 public:
  OracleEvaluator(const RoutingTable& routing, TrafficMatrix tm) : routing_(routing), tm_(std::move(tm)) {}
  EvalMode mode() const override { return EvalMode::oracle; }
  PathDelayVector delays(const SplitPolicy& pol) const override { return simulate_analytic(routing_, tm_, pol); }

 private:
  const RoutingTable& routing_;
  TrafficMatrix tm_;
};

struct OptimizeConfig {
  std::size_t budget = 2000;  // objective evaluations over all restarts
  std::size_t restarts = 8;
  std::uint64_t seed = 1;
  double initial_sigma = 0.25;
  std::size_t stall_steps = 10;  // non-improving steps before sigma halves
  double sigma_floor = 1e-3;
  double rho_max = kDefaultRhoMax;
};

struct TracePoint {
  std::size_t iteration = 0;  // evaluation index
  double objective = 0.0;      // best so far
};

struct OptimizationResult {
  SplitPolicy best_policy;
  PathDelayVector predicted;
  double objective_value = 0.0;
  double base_value = 0.0;
  double residual_penalty = 0.0;
  bool infeasible = false;
  EvalMode mode = EvalMode::oracle;
  std::vector<TracePoint> trace;
  std::vector<double> restart_start_objectives;
  std::size_t evaluations = 0;
};

// Multi-restart local search on the product of simplices. Candidates whose
// link utilization reaches rho_max score +infinity in either mode.
OptimizationResult optimize(const ObjectiveSpec& objective, const TrafficMatrix& tm, const PolicyEvaluator& evaluator,
                            const RoutingTable& routing, const OptimizeConfig& cfg);

// Objective of one policy under the evaluator, +infinity when unstable.
ObjectiveValue score_policy(const ObjectiveSpec& objective, const TrafficMatrix& tm, const PolicyEvaluator& evaluator,
                            const RoutingTable& routing, const SplitPolicy& pol, double rho_max = kDefaultRhoMax);

// Perturbs one node's ratios with Gaussian noise, clamps at 0 and renormalizes.
void perturb_policy(SplitPolicy& pol, std::size_t node, double sigma, Rng& rng);

nlohmann::json to_json(const OptimizationResult& r, const Topology& topo);

struct ClosedLoopReport {
  SplitPolicy before_policy;
  SplitPolicy applied_policy;
  PathDelayVector before;
  PathDelayVector after;
  ObjectiveValue before_objective;
  ObjectiveValue after_objective;
  std::optional<OptimizationResult> optimization;  // empty for a zero budget
  bool applied = false;
  bool improved = false;  // measured objective decreased
  std::uint64_t sample_id = 0;
};

struct ClosedLoopConfig {
  OptimizeConfig optimize;
  Backend ground_truth = Backend::analytic;
  DesConfig des;
  bool force = false;  // apply even if the surrogate predicts a violation
};

// Surrogate optimization -> apply through the controller -> re-measure the
// ground truth -> append a telemetry sample for retraining.
ClosedLoopReport closed_loop_step(const Intent& intent, const TrafficMatrix& tm, const MlpModel& model,
                                  Controller& controller, Store& store, const ClosedLoopConfig& cfg);

nlohmann::json to_json(const ClosedLoopReport& r, const Topology& topo);

}  // namespace kdn
