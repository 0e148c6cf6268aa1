#include "kdn/netmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "kdn/errors.hpp"
#include "kdn/random.hpp"

namespace kdn {

namespace {

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorKind::invalid_argument, msg); }
[[noreturn]] void schema(const std::string& msg) { throw Error(ErrorKind::schema, msg); }

void check_range(const Range& r, const char* what, bool allow_zero) {
  if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || r.lo > r.hi || r.lo < 0.0 || (!allow_zero && r.lo <= 0.0))
    invalid(std::string("invalid ") + what + " range");
}

const char* role_name(NodeRole r) { return r == NodeRole::overlay_edge ? "overlay" : "underlay"; }

}  // namespace

Topology::Topology(std::vector<Node> nodes, std::vector<Link> links)
    : nodes_(std::move(nodes)), links_(std::move(links)) {
  const std::size_t n = nodes_.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (nodes_[i].id != i) invalid("node ids must equal their position");
    if (nodes_[i].role == NodeRole::overlay_edge) overlay_.push_back(nodes_[i].id);
  }
  {
    std::vector<std::string> names;
    for (const auto& nd : nodes_) names.push_back(nd.name);
    std::sort(names.begin(), names.end());
    if (std::adjacent_find(names.begin(), names.end()) != names.end()) invalid("duplicate node name");
  }
  std::sort(links_.begin(), links_.end(),
            [](const Link& a, const Link& b) { return std::tie(a.src, a.dst) < std::tie(b.src, b.dst); });
  out_.assign(n, {});
  for (std::size_t l = 0; l < links_.size(); ++l) {
    const Link& lk = links_[l];
    if (lk.src >= n || lk.dst >= n || lk.src == lk.dst) invalid("link endpoints invalid");
    if (!(lk.capacity_pps > 0.0) || !std::isfinite(lk.capacity_pps)) invalid("link capacity must be > 0");
    if (!(lk.prop_delay_s >= 0.0) || !std::isfinite(lk.prop_delay_s)) invalid("propagation delay must be >= 0");
    if (l > 0 && links_[l - 1].src == lk.src && links_[l - 1].dst == lk.dst) invalid("duplicate link");
    out_[lk.src].push_back(l);
  }
  if (overlay_.size() < 2) invalid("topology needs at least two overlay nodes");
  for (NodeId o : overlay_) {
    if (out_[o].empty()) invalid("overlay node " + nodes_[o].name + " has no attachment link");
    for (LinkId l : out_[o])
      if (nodes_[links_[l].dst].role != NodeRole::underlay)
        invalid("overlay node " + nodes_[o].name + " must attach to underlay nodes only");
  }
  // Connectivity: every node reaches every other (links are directed).
  {
    const NodeId start = 0;
    std::vector<std::vector<NodeId>> fwd(n), rev(n);
    for (const Link& lk : links_) {
      fwd[lk.src].push_back(lk.dst);
      rev[lk.dst].push_back(lk.src);
    }
    for (const auto* adj : {&fwd, &rev}) {
      std::vector<char> seen(n, 0);
      std::vector<NodeId> stack{start};
      seen[start] = 1;
      std::size_t count = 1;
      while (!stack.empty()) {
        NodeId u = stack.back();
        stack.pop_back();
        for (NodeId v : (*adj)[u])
          if (!seen[v]) {
            seen[v] = 1;
            ++count;
            stack.push_back(v);
          }
      }
      if (count != n) invalid("topology is not connected");
    }
  }
}

std::size_t Topology::overlay_index(NodeId id) const {
  auto it = std::lower_bound(overlay_.begin(), overlay_.end(), id);
  if (it == overlay_.end() || *it != id) invalid("node is not an overlay node");
  return static_cast<std::size_t>(it - overlay_.begin());
}

std::size_t Topology::total_attachments() const {
  std::size_t total = 0;
  for (NodeId o : overlay_) total += out_[o].size();
  return total;
}

std::optional<LinkId> Topology::find_link(NodeId src, NodeId dst) const {
  if (src >= out_.size()) return std::nullopt;
  for (LinkId l : out_[src])
    if (links_[l].dst == dst) return l;
  return std::nullopt;
}

std::optional<NodeId> Topology::find_node(const std::string& name) const {
  for (const auto& nd : nodes_)
    if (nd.name == name) return nd.id;
  return std::nullopt;
}

std::optional<LinkId> Topology::find_link(const std::string& link_name) const {
  // Node names may contain '_', so try every split point.
  for (std::size_t pos = link_name.find('_'); pos != std::string::npos; pos = link_name.find('_', pos + 1)) {
    auto s = find_node(link_name.substr(0, pos));
    auto d = find_node(link_name.substr(pos + 1));
    if (s && d)
      if (auto l = find_link(*s, *d)) return l;
  }
  return std::nullopt;
}

std::string Topology::link_name(LinkId id) const {
  const Link& lk = links_.at(id);
  return nodes_[lk.src].name + "_" + nodes_[lk.dst].name;
}

std::size_t Topology::pair_index(std::size_t s, std::size_t d) const {
  const std::size_t n = overlay_.size();
  if (s >= n || d >= n || s == d) invalid("invalid overlay pair");
  return s * (n - 1) + (d < s ? d : d - 1);
}

std::pair<std::size_t, std::size_t> Topology::pair_at(std::size_t p) const {
  const std::size_t n = overlay_.size();
  if (p >= pair_count()) invalid("pair index out of range");
  const std::size_t s = p / (n - 1);
  std::size_t d = p % (n - 1);
  if (d >= s) ++d;
  return {s, d};
}

std::string Topology::pair_name(std::size_t p) const {
  auto [s, d] = pair_at(p);
  return nodes_[overlay_[s]].name + "->" + nodes_[overlay_[d]].name;
}

double TrafficMatrix::total() const { return std::accumulate(demand_pps.begin(), demand_pps.end(), 0.0); }

std::size_t SplitPolicy::parameter_count() const {
  std::size_t n = 0;
  for (const auto& r : ratios) n += r.size();
  return n;
}

Topology gen_topology(std::uint64_t seed, const TopologyParams& p) {
  check_range(p.capacity_pps, "capacity", false);
  check_range(p.prop_delay_s, "propagation delay", true);
  const std::size_t no = p.n_overlay, nu = p.n_underlay;
  if (no < 2 || nu < 1) throw Error(ErrorKind::infeasible_parameters, "need >= 2 overlay and >= 1 underlay nodes");
  const std::size_t min_links = (nu - 1) + no;
  const std::size_t max_links = nu * (nu - 1) / 2 + no * nu;
  if (p.n_links < min_links || p.n_links > max_links)
    throw Error(ErrorKind::infeasible_parameters,
                "n_links must be in [" + std::to_string(min_links) + ", " + std::to_string(max_links) + "]");

  Rng rng(seed);
  std::vector<Node> nodes;
  for (std::size_t i = 0; i < no; ++i) nodes.push_back({NodeId(i), "o" + std::to_string(i), NodeRole::overlay_edge});
  for (std::size_t j = 0; j < nu; ++j) nodes.push_back({NodeId(no + j), "u" + std::to_string(j), NodeRole::underlay});
  auto underlay = [&](std::size_t j) { return NodeId(no + j); };

  std::vector<std::pair<NodeId, NodeId>> edges;  // undirected connections
  // Random spanning tree over the underlay.
  std::vector<std::size_t> order(nu);
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, rng);
  for (std::size_t i = 1; i < nu; ++i) edges.emplace_back(underlay(order[rng.below(i)]), underlay(order[i]));

  // Attachments: one mandatory link each, then up to a 2-3 target while budget lasts.
  std::vector<std::vector<std::size_t>> attach(no);
  std::vector<std::vector<std::size_t>> spare(no);
  std::vector<std::size_t> target(no);
  for (std::size_t o = 0; o < no; ++o) {
    spare[o].resize(nu);
    std::iota(spare[o].begin(), spare[o].end(), 0);
    shuffle(spare[o], rng);
    attach[o].push_back(spare[o].back());
    spare[o].pop_back();
    target[o] = 2 + rng.below(2);
  }
  std::size_t budget = p.n_links - min_links;
  auto add_attachments = [&](auto cap_of) {
    bool progress = true;
    while (budget > 0 && progress) {
      progress = false;
      for (std::size_t o = 0; o < no && budget > 0; ++o) {
        if (attach[o].size() >= cap_of(o) || spare[o].empty()) continue;
        attach[o].push_back(spare[o].back());
        spare[o].pop_back();
        --budget;
        progress = true;
      }
    }
  };
  add_attachments([&](std::size_t o) { return target[o]; });

  // Extra underlay connections.
  std::vector<std::pair<std::size_t, std::size_t>> free_pairs;
  {
    std::vector<std::vector<char>> used(nu, std::vector<char>(nu, 0));
    for (auto [a, b] : edges) used[a - no][b - no] = used[b - no][a - no] = 1;
    for (std::size_t a = 0; a < nu; ++a)
      for (std::size_t b = a + 1; b < nu; ++b)
        if (!used[a][b]) free_pairs.emplace_back(a, b);
  }
  shuffle(free_pairs, rng);
  for (std::size_t i = 0; i < free_pairs.size() && budget > 0; ++i, --budget)
    edges.emplace_back(underlay(free_pairs[i].first), underlay(free_pairs[i].second));
  add_attachments([&](std::size_t) { return nu; });
  if (budget > 0) throw Error(ErrorKind::infeasible_parameters, "cannot place all requested links");

  for (std::size_t o = 0; o < no; ++o)
    for (std::size_t u : attach[o]) edges.emplace_back(NodeId(o), underlay(u));

  std::vector<Link> links;
  for (auto [a, b] : edges) {
    const double cap = rng.uniform(p.capacity_pps.lo, p.capacity_pps.hi);
    const double prop = rng.uniform(p.prop_delay_s.lo, p.prop_delay_s.hi);
    links.push_back({a, b, cap, prop});
    links.push_back({b, a, cap, prop});
  }
  return Topology(std::move(nodes), std::move(links));
}

Path shortest_path(const Topology& topo, NodeId from, NodeId to) {
  const std::size_t n = topo.nodes().size();
  if (from >= n || to >= n) invalid("shortest_path: unknown node");
  Path result;
  if (from == to) return result;

  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(n, inf);
  std::vector<std::vector<NodeId>> seq(n);  // node sequence from `from`
  std::vector<std::vector<LinkId>> via(n);
  std::vector<char> done(n, 0);
  dist[from] = 0.0;
  seq[from] = {from};

  auto better = [](double d1, const std::vector<NodeId>& s1, double d2, const std::vector<NodeId>& s2) {
    if (d2 == inf) return d1 < inf;
    const double tol = 1e-12 * std::max(std::abs(d1), std::abs(d2));
    if (std::abs(d1 - d2) <= tol) return s1 < s2;
    return d1 < d2;
  };

  for (;;) {
    std::optional<NodeId> u;
    for (NodeId v = 0; v < n; ++v)
      if (!done[v] && dist[v] < inf && (!u || better(dist[v], seq[v], dist[*u], seq[*u]))) u = v;
    if (!u || *u == to) break;
    done[*u] = 1;
    if (*u != from && topo.is_overlay(*u)) continue;  // no transit through edge nodes
    for (LinkId l : topo.out_links(*u)) {
      const Link& lk = topo.link(l);
      if (done[lk.dst]) continue;
      const double cand = dist[*u] + lk.prop_delay_s;
      std::vector<NodeId> cand_seq = seq[*u];
      cand_seq.push_back(lk.dst);
      if (better(cand, cand_seq, dist[lk.dst], seq[lk.dst])) {
        dist[lk.dst] = cand;
        seq[lk.dst] = std::move(cand_seq);
        via[lk.dst] = via[*u];
        via[lk.dst].push_back(l);
      }
    }
  }
  if (dist[to] == inf) throw Error(ErrorKind::unreachable, "no path from " + topo.node(from).name + " to " + topo.node(to).name);
  result.links = via[to];
  for (LinkId l : result.links) result.delay_s += topo.link(l).prop_delay_s;
  return result;
}

TrafficMatrix gen_traffic(std::uint64_t seed, const Topology& topo, Range demand) {
  check_range(demand, "demand", true);
  Rng rng(seed);
  TrafficMatrix tm;
  tm.demand_pps.resize(topo.pair_count());
  for (double& v : tm.demand_pps) v = rng.uniform(demand.lo, demand.hi);
  return tm;
}

SplitPolicy gen_policy(std::uint64_t seed, const Topology& topo) {
  Rng rng(seed);
  SplitPolicy pol;
  pol.ratios.resize(topo.overlay_count());
  for (std::size_t o = 0; o < topo.overlay_count(); ++o) {
    auto& r = pol.ratios[o];
    r.resize(topo.attachments(o).size());
    double sum = 0.0;
    for (double& x : r) sum += (x = rng.exponential(1.0));
    for (double& x : r) x /= sum;
  }
  return pol;
}

void validate(const Topology& topo, const TrafficMatrix& tm) {
  if (tm.demand_pps.size() != topo.pair_count()) invalid("traffic matrix size does not match topology");
  for (double v : tm.demand_pps)
    if (!std::isfinite(v) || v < 0.0) invalid("traffic demand must be finite and >= 0");
}

void validate(const Topology& topo, const SplitPolicy& pol) {
  if (pol.ratios.size() != topo.overlay_count()) invalid("policy node count does not match topology");
  for (std::size_t o = 0; o < pol.ratios.size(); ++o) {
    const auto& r = pol.ratios[o];
    if (r.size() != topo.attachments(o).size())
      invalid("policy for " + topo.node(topo.overlay_nodes()[o]).name + " has wrong ratio count");
    double sum = 0.0;
    for (double x : r) {
      if (!std::isfinite(x) || x < 0.0 || x > 1.0) invalid("split ratio outside [0, 1]");
      sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      invalid("split ratios of " + topo.node(topo.overlay_nodes()[o]).name + " do not sum to 1");
  }
}

std::string topology_hash(const Topology& topo) { return content_digest(to_json(topo).dump()); }

std::string content_digest(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

nlohmann::json to_json(const Topology& topo) {
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "topology";
  auto& nodes = j["nodes"] = nlohmann::json::array();
  for (const auto& nd : topo.nodes()) nodes.push_back({{"id", nd.id}, {"name", nd.name}, {"role", role_name(nd.role)}});
  auto& links = j["links"] = nlohmann::json::array();
  for (const auto& lk : topo.links())
    links.push_back({{"src", topo.node(lk.src).name},
                     {"dst", topo.node(lk.dst).name},
                     {"capacity_pps", lk.capacity_pps},
                     {"prop_delay_s", lk.prop_delay_s}});
  return j;
}

namespace {

void expect_kind(const nlohmann::json& j, const char* kind) {
  if (!j.is_object() || j.value("kind", "") != kind) schema(std::string("expected a ") + kind + " document");
  if (j.value("schema_version", 0) != kSchemaVersion) schema("unsupported schema_version");
}

void expect_topology(const nlohmann::json& j, const Topology& topo) {
  if (j.contains("topology_hash") && j["topology_hash"].get<std::string>() != topology_hash(topo))
    throw Error(ErrorKind::inconsistent_input, "document belongs to a different topology");
}

}  // namespace

Topology topology_from_json(const nlohmann::json& j) {
  expect_kind(j, "topology");
  try {
    std::vector<Node> nodes;
    for (const auto& jn : j.at("nodes")) {
      const auto role = jn.at("role").get<std::string>();
      if (role != "overlay" && role != "underlay") schema("unknown node role " + role);
      nodes.push_back({jn.at("id").get<NodeId>(), jn.at("name").get<std::string>(),
                       role == "overlay" ? NodeRole::overlay_edge : NodeRole::underlay});
    }
    auto id_of = [&](const std::string& name) {
      for (const auto& nd : nodes)
        if (nd.name == name) return nd.id;
      schema("link references unknown node " + name);
    };
    std::vector<Link> links;
    for (const auto& jl : j.at("links"))
      links.push_back({id_of(jl.at("src").get<std::string>()), id_of(jl.at("dst").get<std::string>()),
                       jl.at("capacity_pps").get<double>(), jl.at("prop_delay_s").get<double>()});
    return Topology(std::move(nodes), std::move(links));
  } catch (const nlohmann::json::exception& e) {
    schema(std::string("malformed topology: ") + e.what());
  }
}

nlohmann::json to_json(const Topology& topo, const TrafficMatrix& tm) {
  validate(topo, tm);
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "traffic_matrix";
  j["topology_hash"] = topology_hash(topo);
  auto& entries = j["demand_pps"] = nlohmann::json::array();
  for (std::size_t p = 0; p < tm.demand_pps.size(); ++p) {
    auto [s, d] = topo.pair_at(p);
    entries.push_back({{"src", topo.node(topo.overlay_nodes()[s]).name},
                       {"dst", topo.node(topo.overlay_nodes()[d]).name},
                       {"pps", tm.demand_pps[p]}});
  }
  return j;
}

TrafficMatrix traffic_from_json(const nlohmann::json& j, const Topology& topo) {
  expect_kind(j, "traffic_matrix");
  expect_topology(j, topo);
  TrafficMatrix tm;
  tm.demand_pps.assign(topo.pair_count(), std::numeric_limits<double>::quiet_NaN());
  try {
    for (const auto& e : j.at("demand_pps")) {
      auto s = topo.find_node(e.at("src").get<std::string>());
      auto d = topo.find_node(e.at("dst").get<std::string>());
      if (!s || !d || !topo.is_overlay(*s) || !topo.is_overlay(*d) || *s == *d) schema("invalid traffic pair");
      tm.demand_pps[topo.pair_index(topo.overlay_index(*s), topo.overlay_index(*d))] = e.at("pps").get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    schema(std::string("malformed traffic matrix: ") + e.what());
  }
  for (double v : tm.demand_pps)
    if (std::isnan(v)) schema("traffic matrix is not dense over all overlay pairs");
  validate(topo, tm);
  return tm;
}

nlohmann::json to_json(const Topology& topo, const SplitPolicy& pol) {
  validate(topo, pol);
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "split_policy";
  j["topology_hash"] = topology_hash(topo);
  auto& nodes = j["nodes"] = nlohmann::json::array();
  for (std::size_t o = 0; o < pol.ratios.size(); ++o) {
    nlohmann::json names = nlohmann::json::array();
    for (LinkId l : topo.attachments(o)) names.push_back(topo.link_name(l));
    nodes.push_back({{"node", topo.node(topo.overlay_nodes()[o]).name}, {"links", names}, {"ratios", pol.ratios[o]}});
  }
  return j;
}

SplitPolicy policy_from_json(const nlohmann::json& j, const Topology& topo) {
  expect_kind(j, "split_policy");
  expect_topology(j, topo);
  SplitPolicy pol;
  pol.ratios.resize(topo.overlay_count());
  std::vector<char> seen(topo.overlay_count(), 0);
  try {
    for (const auto& e : j.at("nodes")) {
      auto id = topo.find_node(e.at("node").get<std::string>());
      if (!id || !topo.is_overlay(*id)) schema("policy references unknown overlay node");
      const std::size_t o = topo.overlay_index(*id);
      const auto& names = e.at("links");
      const auto& att = topo.attachments(o);
      if (names.size() != att.size()) schema("policy link list does not match attachments");
      for (std::size_t k = 0; k < att.size(); ++k)
        if (names[k].get<std::string>() != topo.link_name(att[k])) schema("policy link order mismatch");
      pol.ratios[o] = e.at("ratios").get<std::vector<double>>();
      seen[o] = 1;
    }
  } catch (const nlohmann::json::exception& e) {
    schema(std::string("malformed split policy: ") + e.what());
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) schema("policy does not cover every overlay node");
  validate(topo, pol);
  return pol;
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) schema("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    schema(path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::state, "cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace kdn
