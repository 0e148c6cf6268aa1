#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "kdn/netmodel.hpp"

namespace kdn {

inline constexpr double kDefaultRhoMax = 0.95;

// Average end-to-end delay per ordered overlay pair (pair order).
struct PathDelayVector {
  std::vector<double> delay_s;

  double mean() const;
  double max() const;
  bool operator==(const PathDelayVector&) const = default;
};

struct LinkLoadReport {
  std::vector<double> load_pps;     // offered load per directed link
  std::vector<double> utilization;  // load / capacity

  double max_utilization() const;
};

// Shortest-path routes for every (source, attachment, destination) triple,
// computed once per topology.
class RoutingTable {
 public:
  explicit RoutingTable(const Topology& topo);

  const Topology& topology() const { return topo_; }
  // Attachment link followed by the underlay shortest path to the destination.
  const std::vector<LinkId>& route(std::size_t src_idx, std::size_t attach_idx, std::size_t dst_idx) const {
    return routes_[src_idx][attach_idx][dst_idx];
  }

 private:
  Topology topo_;
  std::vector<std::vector<std::vector<std::vector<LinkId>>>> routes_;
};

LinkLoadReport link_loads(const RoutingTable& routing, const TrafficMatrix& tm, const SplitPolicy& pol);
LinkLoadReport link_loads(const Topology& topo, const TrafficMatrix& tm, const SplitPolicy& pol);

// Throws InstabilityError listing every link with utilization >= rho_max.
void require_stable(const Topology& topo, const LinkLoadReport& loads, double rho_max = kDefaultRhoMax);

// M/M/1 per link: sojourn = prop + 1 / (capacity - load).
PathDelayVector simulate_analytic(const RoutingTable& routing, const TrafficMatrix& tm, const SplitPolicy& pol,
                                  double rho_max = kDefaultRhoMax);
PathDelayVector simulate_analytic(const Topology& topo, const TrafficMatrix& tm, const SplitPolicy& pol,
                                  double rho_max = kDefaultRhoMax);

struct DesConfig {
  std::uint64_t seed = 1;
  std::uint64_t horizon_packets = 1'000'000;
  double warmup_fraction = 0.2;
  double rho_max = kDefaultRhoMax;
};

inline constexpr std::uint64_t kMinDesHorizon = 10'000;
inline constexpr std::uint64_t kUnderSampledThreshold = 100;

struct DesResult {
  PathDelayVector delays;               // NaN where a pair logged no packets
  std::vector<std::uint64_t> packets;   // post-warm-up packets per pair
  std::vector<bool> under_sampled;      // fewer than kUnderSampledThreshold packets

  bool any_under_sampled() const;
  bool operator==(const DesResult&) const = default;
};

// Packet-level event simulation: Poisson arrivals per pair, per-packet
// attachment choice by split ratio, FIFO exponential-service queue per
// directed link, fixed propagation delay.
DesResult simulate_des(const RoutingTable& routing, const TrafficMatrix& tm, const SplitPolicy& pol,
                       const DesConfig& cfg);
DesResult simulate_des(const Topology& topo, const TrafficMatrix& tm, const SplitPolicy& pol, const DesConfig& cfg);

}  // namespace kdn
