#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace kdn {

using NodeId = std::uint32_t;
using LinkId = std::size_t;

enum class NodeRole { overlay_edge, underlay };

struct Node {
  NodeId id = 0;
  std::string name;
  NodeRole role = NodeRole::underlay;

  bool operator==(const Node&) const = default;
};

// Directed link; a bidirectional connection is two Links.
struct Link {
  NodeId src = 0;
  NodeId dst = 0;
  double capacity_pps = 0.0;  // service rate
  double prop_delay_s = 0.0;

  bool operator==(const Link&) const = default;
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

// Underlay graph with overlay edge nodes. Node ids equal their position in
// nodes(). Overlay nodes are ordered by id; "overlay index" is the position in
// that order, and ordered pairs (s, d), s != d, are indexed lexicographically.
class Topology {
 public:
  Topology() = default;
  // Validates all invariants (connectivity, attachments, link sanity).
  Topology(std::vector<Node> nodes, std::vector<Link> links);

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Link>& links() const { return links_; }
  const Node& node(NodeId id) const { return nodes_.at(id); }
  const Link& link(LinkId id) const { return links_.at(id); }

  const std::vector<NodeId>& overlay_nodes() const { return overlay_; }
  std::size_t overlay_count() const { return overlay_.size(); }
  std::size_t pair_count() const { return overlay_.size() * (overlay_.size() - 1); }
  std::size_t overlay_index(NodeId id) const;
  bool is_overlay(NodeId id) const { return nodes_.at(id).role == NodeRole::overlay_edge; }

  // Outgoing links of a node, sorted by destination id.
  const std::vector<LinkId>& out_links(NodeId id) const { return out_.at(id); }
  // Attachment links of the overlay node with the given overlay index.
  const std::vector<LinkId>& attachments(std::size_t overlay_idx) const {
    return out_.at(overlay_.at(overlay_idx));
  }
  std::size_t total_attachments() const;

  std::optional<LinkId> find_link(NodeId src, NodeId dst) const;
  std::optional<NodeId> find_node(const std::string& name) const;
  std::optional<LinkId> find_link(const std::string& link_name) const;
  // "<src>_<dst>"
  std::string link_name(LinkId id) const;

  std::size_t pair_index(std::size_t src_idx, std::size_t dst_idx) const;
  std::pair<std::size_t, std::size_t> pair_at(std::size_t pair_idx) const;
  std::string pair_name(std::size_t pair_idx) const;

  bool operator==(const Topology& o) const { return nodes_ == o.nodes_ && links_ == o.links_; }

 private:
  std::vector<Node> nodes_;
  std::vector<Link> links_;
  std::vector<NodeId> overlay_;
  std::vector<std::vector<LinkId>> out_;
};

// Demand per ordered overlay pair, dense in pair order.
struct TrafficMatrix {
  std::vector<double> demand_pps;

  double total() const;
  bool operator==(const TrafficMatrix&) const = default;
};

// Per overlay node (overlay index order), ratios over its attachment links.
struct SplitPolicy {
  std::vector<std::vector<double>> ratios;

  std::size_t parameter_count() const;
  bool operator==(const SplitPolicy&) const = default;
};

struct TopologyParams {
  std::size_t n_overlay = 12;
  std::size_t n_underlay = 19;
  std::size_t n_links = 72;  // bidirectional connections
  Range capacity_pps{1000.0, 2000.0};
  Range prop_delay_s{0.001, 0.005};
};

struct Path {
  std::vector<LinkId> links;
  double delay_s = 0.0;
};

Topology gen_topology(std::uint64_t seed, const TopologyParams& params = {});

// Minimum total propagation delay; ties broken by smallest node-id sequence
// (within a relative tolerance of 1e-12 on the delay). Overlay nodes other than
// the endpoints are never transited.
Path shortest_path(const Topology& topo, NodeId from, NodeId to);

TrafficMatrix gen_traffic(std::uint64_t seed, const Topology& topo, Range demand_pps);

// Uniform on each node's simplex (normalized exponential draws).
SplitPolicy gen_policy(std::uint64_t seed, const Topology& topo);

// Throws Error(invalid_argument) describing the first violated invariant.
void validate(const Topology& topo, const TrafficMatrix& tm);
void validate(const Topology& topo, const SplitPolicy& pol);

// 64-bit FNV-1a, as 16 hex digits.
std::string content_digest(std::string_view bytes);
// Digest of the canonical topology JSON.
std::string topology_hash(const Topology& topo);

nlohmann::json to_json(const Topology& topo);
Topology topology_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Topology& topo, const TrafficMatrix& tm);
TrafficMatrix traffic_from_json(const nlohmann::json& j, const Topology& topo);
nlohmann::json to_json(const Topology& topo, const SplitPolicy& pol);
SplitPolicy policy_from_json(const nlohmann::json& j, const Topology& topo);

// Small helpers shared by the file-based tools.
nlohmann::json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);

inline constexpr int kSchemaVersion = 1;

}  // namespace kdn
