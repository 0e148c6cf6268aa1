#include "kdn/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <sstream>

#include "kdn/errors.hpp"
#include "kdn/random.hpp"

namespace kdn {

double PathDelayVector::mean() const {
  if (delay_s.empty()) return 0.0;
  return std::accumulate(delay_s.begin(), delay_s.end(), 0.0) / static_cast<double>(delay_s.size());
}

double PathDelayVector::max() const {
  double m = 0.0;
  for (double d : delay_s) m = std::max(m, d);
  return m;
}

double LinkLoadReport::max_utilization() const {
  double m = 0.0;
  for (double u : utilization) m = std::max(m, u);
  return m;
}

bool DesResult::any_under_sampled() const {
  return std::find(under_sampled.begin(), under_sampled.end(), true) != under_sampled.end();
}

RoutingTable::RoutingTable(const Topology& topo) : topo_(topo) {
  const std::size_t n = topo_.overlay_count();
  routes_.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    const auto& att = topo_.attachments(s);
    routes_[s].resize(att.size());
    for (std::size_t k = 0; k < att.size(); ++k) {
      const NodeId far = topo_.link(att[k]).dst;
      routes_[s][k].resize(n);
      for (std::size_t d = 0; d < n; ++d) {
        if (d == s) continue;
        auto& r = routes_[s][k][d];
        r.push_back(att[k]);
        const Path p = shortest_path(topo_, far, topo_.overlay_nodes()[d]);
        r.insert(r.end(), p.links.begin(), p.links.end());
      }
    }
  }
}

namespace {

void check_inputs(const Topology& topo, const TrafficMatrix& tm, const SplitPolicy& pol) {
  try {
    validate(topo, tm);
    validate(topo, pol);
  } catch (const Error& e) {
    throw Error(ErrorKind::inconsistent_input, e.what());
  }
}

}  // namespace

LinkLoadReport link_loads(const RoutingTable& routing, const TrafficMatrix& tm, const SplitPolicy& pol) {
  const Topology& topo = routing.topology();
  check_inputs(topo, tm, pol);
  LinkLoadReport rep;
  rep.load_pps.assign(topo.links().size(), 0.0);
  for (std::size_t p = 0; p < topo.pair_count(); ++p) {
    const double demand = tm.demand_pps[p];
    if (demand == 0.0) continue;
    auto [s, d] = topo.pair_at(p);
    for (std::size_t k = 0; k < pol.ratios[s].size(); ++k) {
      const double flow = demand * pol.ratios[s][k];
      for (LinkId l : routing.route(s, k, d)) rep.load_pps[l] += flow;
    }
  }
  rep.utilization.resize(rep.load_pps.size());
  for (LinkId l = 0; l < rep.load_pps.size(); ++l) rep.utilization[l] = rep.load_pps[l] / topo.link(l).capacity_pps;
  return rep;
}

LinkLoadReport link_loads(const Topology& topo, const TrafficMatrix& tm, const SplitPolicy& pol) {
  return link_loads(RoutingTable(topo), tm, pol);
}

void require_stable(const Topology& topo, const LinkLoadReport& loads, double rho_max) {
  std::vector<std::size_t> bad;
  for (LinkId l = 0; l < loads.utilization.size(); ++l)
    if (!(loads.utilization[l] < rho_max)) bad.push_back(l);
  if (bad.empty()) return;
  std::ostringstream os;
  os << "unstable: utilization >= " << rho_max << " on";
  for (LinkId l : bad) os << ' ' << topo.link_name(l) << '(' << loads.utilization[l] << ')';
  throw InstabilityError(std::move(bad), os.str());
}

PathDelayVector simulate_analytic(const RoutingTable& routing, const TrafficMatrix& tm, const SplitPolicy& pol,
                                  double rho_max) {
  const Topology& topo = routing.topology();
  const LinkLoadReport loads = link_loads(routing, tm, pol);
  require_stable(topo, loads, rho_max);

  std::vector<double> sojourn(topo.links().size());
  for (LinkId l = 0; l < sojourn.size(); ++l) {
    const Link& lk = topo.link(l);
    sojourn[l] = lk.prop_delay_s + 1.0 / (lk.capacity_pps - loads.load_pps[l]);
  }
  PathDelayVector out;
  out.delay_s.resize(topo.pair_count());
  for (std::size_t p = 0; p < topo.pair_count(); ++p) {
    auto [s, d] = topo.pair_at(p);
    double total = 0.0;
    for (std::size_t k = 0; k < pol.ratios[s].size(); ++k) {
      double path = 0.0;
      for (LinkId l : routing.route(s, k, d)) path += sojourn[l];
      total += pol.ratios[s][k] * path;
    }
    out.delay_s[p] = total;
  }
  return out;
}

PathDelayVector simulate_analytic(const Topology& topo, const TrafficMatrix& tm, const SplitPolicy& pol,
                                  double rho_max) {
  return simulate_analytic(RoutingTable(topo), tm, pol, rho_max);
}

namespace {

struct Packet {
  const std::vector<LinkId>* route = nullptr;
  double created = 0.0;
  std::uint32_t pair = 0;
  bool measured = false;
};

struct HopEvent {
  double time;
  std::uint64_t seq;
  std::uint32_t packet;
  std::uint32_t hop;

  bool operator>(const HopEvent& o) const { return time != o.time ? time > o.time : seq > o.seq; }
};

std::size_t pick(const std::vector<double>& cumulative, double u) {
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u * cumulative.back());
  return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
}

}  // namespace

DesResult simulate_des(const RoutingTable& routing, const TrafficMatrix& tm, const SplitPolicy& pol,
                       const DesConfig& cfg) {
  const Topology& topo = routing.topology();
  if (cfg.horizon_packets < kMinDesHorizon)
    throw Error(ErrorKind::invalid_argument, "DES horizon must be at least " + std::to_string(kMinDesHorizon));
  if (!(cfg.warmup_fraction >= 0.0 && cfg.warmup_fraction < 1.0))
    throw Error(ErrorKind::invalid_argument, "warm-up fraction must be in [0, 1)");
  const LinkLoadReport loads = link_loads(routing, tm, pol);
  require_stable(topo, loads, cfg.rho_max);

  const std::size_t n_pairs = topo.pair_count();
  DesResult res;
  res.packets.assign(n_pairs, 0);
  std::vector<double> delay_sum(n_pairs, 0.0);

  const double total_rate = tm.total();
  if (total_rate > 0.0) {
    Rng rng(cfg.seed);
    std::vector<double> pair_cum(n_pairs);
    std::partial_sum(tm.demand_pps.begin(), tm.demand_pps.end(), pair_cum.begin());
    std::vector<std::vector<double>> split_cum(pol.ratios.size());
    for (std::size_t s = 0; s < pol.ratios.size(); ++s) {
      split_cum[s].resize(pol.ratios[s].size());
      std::partial_sum(pol.ratios[s].begin(), pol.ratios[s].end(), split_cum[s].begin());
    }

    const auto warmup = static_cast<std::uint64_t>(cfg.warmup_fraction * static_cast<double>(cfg.horizon_packets));
    std::vector<double> server_free(topo.links().size(), 0.0);
    std::vector<Packet> packets;
    packets.reserve(cfg.horizon_packets);
    std::priority_queue<HopEvent, std::vector<HopEvent>, std::greater<>> events;
    std::uint64_t seq = 0;
    double next_arrival = rng.exponential(total_rate);

    auto serve = [&](double t, std::uint32_t id, std::uint32_t hop) {
      Packet& pk = packets[id];
      const LinkId l = (*pk.route)[hop];
      const Link& lk = topo.link(l);
      const double start = std::max(t, server_free[l]);
      const double done = start + rng.exponential(lk.capacity_pps);
      server_free[l] = done;
      const double exit = done + lk.prop_delay_s;
      if (hop + 1 == pk.route->size()) {
        if (pk.measured) {
          delay_sum[pk.pair] += exit - pk.created;
          ++res.packets[pk.pair];
        }
      } else {
        events.push({exit, seq++, id, hop + 1});
      }
    };

    while (packets.size() < cfg.horizon_packets || !events.empty()) {
      const bool arrival_next =
          packets.size() < cfg.horizon_packets && (events.empty() || next_arrival <= events.top().time);
      if (arrival_next) {
        const std::size_t p = pick(pair_cum, rng.uniform());
        const auto [s, d] = topo.pair_at(p);
        const std::size_t k = pick(split_cum[s], rng.uniform());
        const auto id = static_cast<std::uint32_t>(packets.size());
        packets.push_back({&routing.route(s, k, d), next_arrival, static_cast<std::uint32_t>(p), id >= warmup});
        const double t = next_arrival;
        next_arrival += rng.exponential(total_rate);
        serve(t, id, 0);
      } else {
        const HopEvent ev = events.top();
        events.pop();
        serve(ev.time, ev.packet, ev.hop);
      }
    }
  }

  res.delays.delay_s.resize(n_pairs);
  res.under_sampled.resize(n_pairs);
  for (std::size_t p = 0; p < n_pairs; ++p) {
    res.delays.delay_s[p] = res.packets[p] > 0 ? delay_sum[p] / static_cast<double>(res.packets[p])
                                               : std::numeric_limits<double>::quiet_NaN();
    res.under_sampled[p] = res.packets[p] < kUnderSampledThreshold;
  }
  return res;
}

DesResult simulate_des(const Topology& topo, const TrafficMatrix& tm, const SplitPolicy& pol, const DesConfig& cfg) {
  return simulate_des(RoutingTable(topo), tm, pol, cfg);
}

}  // namespace kdn
