#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "monrec/common.hpp"

// The heterogeneous monitor entity graph: services, monitors, metrics,
// dimensions and expressions with a fixed edge-type schema. Built once
// through the mutating API, then treated as immutable for concurrent reads.

namespace monrec::graph {

enum class NodeKind : std::uint8_t { Service, Monitor, Metric, Dimension, Expression };
constexpr std::size_t kNodeKindCount = 5;

enum class EdgeKind : std::uint8_t {
    ServiceHasMonitor,
    MonitorHasMetric,
    MetricHasDimension,
    MonitorAssociatedDimension,
    MonitorUsesExpression,
    MetricUsesExpression,
    DimensionUsesExpression,
};
constexpr std::size_t kEdgeKindCount = 7;

std::string_view to_string(NodeKind k);
std::string_view to_string(EdgeKind k);
NodeKind node_kind_from_string(std::string_view s);
EdgeKind edge_kind_from_string(std::string_view s);

/// Endpoint schema for an edge kind: {required src kind, required dst kind}.
std::pair<NodeKind, NodeKind> edge_schema(EdgeKind k);

using NodeId = std::uint32_t;
using EdgeId = std::uint32_t;
using Attrs = std::map<std::string, std::string>;

struct NodeRef {
    NodeId id = 0;
    NodeKind kind = NodeKind::Service;
    std::string key;       // unique within kind
    std::string ontology;  // free-text attributes; may be empty, never absent
};

struct EdgeRef {
    EdgeId id = 0;
    NodeId src = 0;
    NodeId dst = 0;
    EdgeKind kind = EdgeKind::ServiceHasMonitor;
    Attrs attrs;  // open link-feature map, empty by default
};

/// Supervised split of one edge kind. train_mp/train_sup partition train.
struct EdgeSplit {
    std::vector<EdgeId> train, val, test;
    std::vector<EdgeId> train_mp, train_sup;
};

class EntityGraph {
public:
    NodeId add_node(NodeKind kind, std::string key, std::string ontology);
    EdgeId add_edge(NodeId src, NodeId dst, EdgeKind kind, Attrs attrs = {});

    const NodeRef& node(NodeId id) const { return nodes_.at(id); }
    const EdgeRef& edge(EdgeId id) const { return edges_.at(id); }
    std::size_t node_count() const { return nodes_.size(); }
    std::size_t edge_count() const { return edges_.size(); }
    const std::vector<NodeRef>& nodes() const { return nodes_; }
    const std::vector<EdgeRef>& edges() const { return edges_; }

    /// Lookup by (kind, key); nullopt when absent.
    std::optional<NodeId> find(NodeKind kind, std::string_view key) const;

    /// Out-neighbors via edges of `kind`, ascending node id.
    std::vector<NodeId> neighbors(NodeId n, EdgeKind kind) const;
    /// In-neighbors via edges of `kind` (reverse traversal), ascending node id.
    std::vector<NodeId> reverse_neighbors(NodeId n, EdgeKind kind) const;
    /// (neighbor, edge) pairs in insertion order, both directions.
    const std::vector<std::pair<NodeId, EdgeId>>& out_edges(NodeId n, EdgeKind kind) const;
    const std::vector<std::pair<NodeId, EdgeId>>& in_edges(NodeId n, EdgeKind kind) const;

    std::vector<NodeId> nodes_of_kind(NodeKind kind) const;
    std::vector<EdgeId> edges_of_kind(EdgeKind kind) const;

    /// Dimensions reachable from a metric via MetricHasDimension, ascending id.
    std::vector<NodeId> candidate_dimensions(NodeId metric) const;

    /// Deterministic train/val/test split of one edge kind with a further
    /// message-passing/supervision partition of train. Counts land within
    /// one edge of the requested proportions.
    EdgeSplit split_edges(EdgeKind kind, std::array<double, 3> ratios, double mp_fraction,
                          std::uint64_t seed) const;

private:
    std::vector<NodeRef> nodes_;
    std::vector<EdgeRef> edges_;
    std::array<std::unordered_map<std::string, NodeId>, kNodeKindCount> by_key_;
    // adjacency indexed [edge kind][node id]
    std::array<std::vector<std::vector<std::pair<NodeId, EdgeId>>>, kEdgeKindCount> out_;
    std::array<std::vector<std::vector<std::pair<NodeId, EdgeId>>>, kEdgeKindCount> in_;
    std::unordered_set<std::uint64_t> edge_keys_;
};

// ---- snapshot document (monrec.graph.v1, line-delimited) ----
void serialize(const EntityGraph& g, std::ostream& os);
EntityGraph deserialize(std::istream& is);
void save_graph(const EntityGraph& g, const std::string& path);
EntityGraph load_graph(const std::string& path);

/// Structural equality over nodes, edges, ontology and attrs.
bool structurally_equal(const EntityGraph& a, const EntityGraph& b);

}  // namespace monrec::graph
