#include "kdn/controller.hpp"

#include <chrono>
#include <ctime>
#include <mutex>

#include "kdn/errors.hpp"

namespace kdn {

namespace {

std::string timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(now.time_since_epoch()).count() % 1000000;
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  const auto n = std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  std::snprintf(buf + n, sizeof buf - n, ".%06ldZ", static_cast<long>(micros));
  return buf;
}

PolicySource source_from_string(const std::string& s) {
  if (s == "operator") return PolicySource::operator_input;
  if (s == "kplane") return PolicySource::kplane;
  throw Error(ErrorKind::schema, "unknown policy source " + s);
}

}  // namespace

const char* to_string(PolicySource s) { return s == PolicySource::kplane ? "kplane" : "operator"; }

Controller::Controller(Topology topo, SplitPolicy initial) : routing_(topo), initial_(std::move(initial)) {
  validate(topology(), initial_);
  active_ = initial_;
}

SplitPolicy Controller::active_policy() const {
  std::shared_lock lock(mu_);
  return active_;
}

SplitPolicy Controller::initial_policy() const {
  std::shared_lock lock(mu_);
  return initial_;
}

std::vector<PolicyRecord> Controller::history() const {
  std::shared_lock lock(mu_);
  return history_;
}

std::shared_ptr<const MlpModel> Controller::model() const {
  std::shared_lock lock(mu_);
  return model_;
}

std::optional<Intent> Controller::intent() const {
  std::shared_lock lock(mu_);
  return intent_;
}

void Controller::apply_policy(const SplitPolicy& pol, PolicySource source) {
  validate(topology(), pol);
  PolicyRecord rec{timestamp_now(), pol, source};
  SplitPolicy next = pol;
  std::unique_lock lock(mu_);
  history_.push_back(std::move(rec));
  active_.ratios.swap(next.ratios);
}

void Controller::bind_model(std::shared_ptr<const MlpModel> model) {
  if (model) {
    const std::string h = model->meta.value("topology_hash", "");
    if (!h.empty() && h != topology_hash(topology()))
      throw Error(ErrorKind::inconsistent_input, "model was trained on a different topology");
    const std::size_t inputs = topology().pair_count() + topology().total_attachments();
    if (model->inputs() != inputs || model->outputs() != topology().pair_count())
      throw Error(ErrorKind::inconsistent_input, "model dimensions do not match the topology");
  }
  std::unique_lock lock(mu_);
  model_ = std::move(model);
}

void Controller::set_intent(std::optional<Intent> intent) {
  std::unique_lock lock(mu_);
  intent_ = std::move(intent);
}

PathDelayVector Controller::measure(const TrafficMatrix& tm, Backend backend, const DesConfig& des) const {
  const SplitPolicy pol = active_policy();
  if (backend == Backend::analytic) return simulate_analytic(routing_, tm, pol);
  return simulate_des(routing_, tm, pol, des).delays;
}

WhatIfResult Controller::what_if(const SplitPolicy& candidate, const TrafficMatrix& tm) const {
  std::shared_ptr<const MlpModel> model;
  std::optional<Intent> intent;
  {
    std::shared_lock lock(mu_);
    model = model_;
    intent = intent_;
  }
  if (!model) throw Error(ErrorKind::state, "what-if needs a bound model");
  validate(topology(), candidate);
  validate(topology(), tm);
  WhatIfResult r;
  r.predicted = delays_from_row(predict(*model, feature_row(tm, candidate)).row(0));
  r.loads = link_loads(routing_, tm, candidate);
  if (intent) r.objective = render(*intent).evaluate(r.predicted, r.loads);
  return r;
}

nlohmann::json Controller::snapshot() const {
  std::shared_lock lock(mu_);
  const Topology& topo = topology();
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& rec : history_)
    hist.push_back({{"timestamp", rec.timestamp}, {"source", to_string(rec.source)}, {"policy", to_json(topo, rec.policy)}});
  nlohmann::json j{{"schema_version", kSchemaVersion},
                   {"kind", "controller_state"},
                   {"topology_hash", topology_hash(topo)},
                   {"initial_policy", to_json(topo, initial_)},
                   {"active_policy", to_json(topo, active_)},
                   {"history", hist},
                   {"model_bound", static_cast<bool>(model_)}};
  j["intent"] = intent_ ? nlohmann::json(to_text(*intent_, topo)) : nlohmann::json(nullptr);
  return j;
}

std::unique_ptr<Controller> Controller::from_snapshot(const nlohmann::json& j, const Topology& topo) {
  if (!j.is_object() || j.value("kind", "") != "controller_state" || j.value("schema_version", 0) != kSchemaVersion)
    throw Error(ErrorKind::schema, "expected a controller_state document");
  if (j.value("topology_hash", "") != topology_hash(topo))
    throw Error(ErrorKind::inconsistent_input, "snapshot belongs to a different topology");
  try {
    auto c = std::make_unique<Controller>(topo, policy_from_json(j.at("initial_policy"), topo));
    for (const auto& rec : j.at("history"))
      c->history_.push_back({rec.at("timestamp").get<std::string>(), policy_from_json(rec.at("policy"), topo),
                             source_from_string(rec.at("source").get<std::string>())});
    c->active_ = policy_from_json(j.at("active_policy"), topo);
    if (!j.at("intent").is_null()) c->intent_ = parse_intent(j.at("intent").get<std::string>(), topo);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::schema, std::string("malformed controller snapshot: ") + e.what());
  }
}

std::string Controller::state_hash() const {
  nlohmann::json j = snapshot();
  std::shared_lock lock(mu_);
  if (model_) j["model"] = to_json(*model_);
  return content_digest(j.dump());
}

}  // namespace kdn
