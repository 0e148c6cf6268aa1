#pragma once

#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kdn/intent.hpp"
#include "kdn/kplane.hpp"
#include "kdn/netmodel.hpp"
#include "kdn/simulator.hpp"
#include "kdn/telemetry.hpp"

namespace kdn {

enum class PolicySource { operator_input, kplane };

const char* to_string(PolicySource s);

struct PolicyRecord {
  std::string timestamp;
  SplitPolicy policy;
  PolicySource source = PolicySource::operator_input;
};

struct WhatIfResult {
  PathDelayVector predicted;
  LinkLoadReport loads;
  std::optional<ObjectiveValue> objective;  // present when an intent is active
};

// Logically centralized controller over the simulated data plane. Mutations
// are serialized; queries may run concurrently between mutations.
class Controller {
 public:
  Controller(Topology topo, SplitPolicy initial);

  Controller(const Controller&) = delete;
  Controller& operator=(const Controller&) = delete;

  const Topology& topology() const { return routing_.topology(); }
  const RoutingTable& routing() const { return routing_; }

  SplitPolicy active_policy() const;
  SplitPolicy initial_policy() const;
  std::vector<PolicyRecord> history() const;
  std::shared_ptr<const MlpModel> model() const;
  std::optional<Intent> intent() const;

  // Replaces the active policy; on error the state is untouched.
  void apply_policy(const SplitPolicy& pol, PolicySource source);
  // Rejects models trained on a different topology.
  void bind_model(std::shared_ptr<const MlpModel> model);
  void set_intent(std::optional<Intent> intent);

  // Ground-truth delays of the active policy.
  PathDelayVector measure(const TrafficMatrix& tm, Backend backend = Backend::analytic,
                          const DesConfig& des = {}) const;

  // Model-based prediction for a candidate; never changes state.
  WhatIfResult what_if(const SplitPolicy& candidate, const TrafficMatrix& tm) const;

  // Topology hash, initial and active policy, history, active intent text.
  nlohmann::json snapshot() const;
  static std::unique_ptr<Controller> from_snapshot(const nlohmann::json& j, const Topology& topo);
  std::string state_hash() const;

 private:
  RoutingTable routing_;
  mutable std::shared_mutex mu_;
  SplitPolicy initial_;
  SplitPolicy active_;
  std::vector<PolicyRecord> history_;
  std::shared_ptr<const MlpModel> model_;
  std::optional<Intent> intent_;
};

}  // namespace kdn
