#pragma once

#include <string>
#include <tuple>
#include <vector>

#include "kdn/kplane.hpp"
#include "kdn/netmodel.hpp"
#include "kdn/telemetry.hpp"

namespace kdn::test {

struct Edge {
  std::string a, b;
  double capacity_pps = 1000.0;
  double prop_delay_s = 0.001;
};

// Names starting with 'o' are overlay nodes. Each edge becomes two directed links.
inline Topology build(const std::vector<std::string>& names, const std::vector<Edge>& edges) {
  std::vector<Node> nodes;
  for (std::size_t i = 0; i < names.size(); ++i)
    nodes.push_back({NodeId(i), names[i], names[i][0] == 'o' ? NodeRole::overlay_edge : NodeRole::underlay});
  auto id = [&](const std::string& n) {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == n) return NodeId(i);
    throw std::runtime_error("no node " + n);
  };
  std::vector<Link> links;
  for (const auto& e : edges) {
    links.push_back({id(e.a), id(e.b), e.capacity_pps, e.prop_delay_s});
    links.push_back({id(e.b), id(e.a), e.capacity_pps, e.prop_delay_s});
  }
  return Topology(std::move(nodes), std::move(links));
}

// oA - u - oB
inline Topology chain(double capacity = 1000.0, double prop = 0.001) {
  return build({"oA", "oB", "u"}, {{"oA", "u", capacity, prop}, {"oB", "u", capacity, prop}});
}

// oA attaches to u1 and u2, oB only to u3; u1-u3 is slow and wide, u2-u3 fast
// and narrow, so splitting trades propagation against queueing.
inline Topology toy(double narrow_capacity = 600.0) {
  return build({"oA", "oB", "u1", "u2", "u3"}, {{"oA", "u1", 5000.0, 0.0005},
                                                {"oA", "u2", 5000.0, 0.0005},
                                                {"oB", "u3", 5000.0, 0.0005},
                                                {"u1", "u3", 2000.0, 0.004},
                                                {"u2", "u3", narrow_capacity, 0.001}});
}

inline SplitPolicy single_attachment_policy(const Topology& topo) {
  SplitPolicy p;
  for (std::size_t o = 0; o < topo.overlay_count(); ++o) {
    std::vector<double> r(topo.attachments(o).size(), 0.0);
    r[0] = 1.0;
    p.ratios.push_back(r);
  }
  return p;
}

inline TrafficMatrix uniform_traffic(const Topology& topo, double pps) {
  return TrafficMatrix{std::vector<double>(topo.pair_count(), pps)};
}

// Default topology with a delay model trained on n_train analytic samples and
// its 300-sample held-out metrics.
struct TrainedOverlay {
  Topology topo;
  Dataset train;
  Dataset test;
  MlpModel model;
  EvalMetrics test_metrics;
};

inline TrainedOverlay train_overlay(std::size_t n_train) {
  TrainedOverlay o;
  o.topo = gen_topology(1);
  Store store;
  CollectConfig cfg;
  cfg.n_samples = n_train + 300;
  cfg.seed = 1;
  collect(o.topo, cfg, store);
  std::tie(o.train, o.test) = split(to_dataset(store, o.topo), n_train, 300, 1);
  o.model = fit(o.train, TrainConfig{});
  o.test_metrics = evaluate(o.model, o.test);
  return o;
}

// Built once per process.
inline const TrainedOverlay& trained_overlay() {
  static const TrainedOverlay t = train_overlay(3000);
  return t;
}

inline const TrainedOverlay& trained_overlay_large() {
  static const TrainedOverlay t = train_overlay(9600);
  return t;
}

}  // namespace kdn::test
