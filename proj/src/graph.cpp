#include "monrec/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace monrec::graph {

namespace {

constexpr std::array<std::string_view, kNodeKindCount> kNodeNames = {
    "Service", "Monitor", "Metric", "Dimension", "Expression"};

constexpr std::array<std::string_view, kEdgeKindCount> kEdgeNames = {
    "ServiceHasMonitor",       "MonitorHasMetric",    "MetricHasDimension",
    "MonitorAssociatedDimension", "MonitorUsesExpression", "MetricUsesExpression",
    "DimensionUsesExpression"};

constexpr std::array<std::pair<NodeKind, NodeKind>, kEdgeKindCount> kSchema = {{
    {NodeKind::Service, NodeKind::Monitor},
    {NodeKind::Monitor, NodeKind::Metric},
    {NodeKind::Metric, NodeKind::Dimension},
    {NodeKind::Monitor, NodeKind::Dimension},
    {NodeKind::Monitor, NodeKind::Expression},
    {NodeKind::Metric, NodeKind::Expression},
    {NodeKind::Dimension, NodeKind::Expression},
}};

const std::vector<std::pair<NodeId, EdgeId>> kNoEdges;

std::uint64_t edge_key(NodeId src, NodeId dst, EdgeKind kind) {
    return (static_cast<std::uint64_t>(kind) << 58) ^ (static_cast<std::uint64_t>(src) << 29) ^ dst;
}

}  // namespace

std::string_view to_string(NodeKind k) { return kNodeNames.at(static_cast<std::size_t>(k)); }
std::string_view to_string(EdgeKind k) { return kEdgeNames.at(static_cast<std::size_t>(k)); }

NodeKind node_kind_from_string(std::string_view s) {
    for (std::size_t i = 0; i < kNodeNames.size(); ++i)
        if (kNodeNames[i] == s) return static_cast<NodeKind>(i);
    throw SchemaError("unknown node kind '" + std::string(s) + "'");
}

EdgeKind edge_kind_from_string(std::string_view s) {
    for (std::size_t i = 0; i < kEdgeNames.size(); ++i)
        if (kEdgeNames[i] == s) return static_cast<EdgeKind>(i);
    throw SchemaError("unknown edge kind '" + std::string(s) + "'");
}

std::pair<NodeKind, NodeKind> edge_schema(EdgeKind k) { return kSchema.at(static_cast<std::size_t>(k)); }

NodeId EntityGraph::add_node(NodeKind kind, std::string key, std::string ontology) {
    auto& index = by_key_[static_cast<std::size_t>(kind)];
    if (index.contains(key))
        throw DuplicateError("duplicate node key '" + key + "' for kind " + std::string(to_string(kind)));
    const NodeId id = static_cast<NodeId>(nodes_.size());
    index.emplace(key, id);
    nodes_.push_back(NodeRef{id, kind, std::move(key), std::move(ontology)});
    return id;
}

EdgeId EntityGraph::add_edge(NodeId src, NodeId dst, EdgeKind kind, Attrs attrs) {
    if (src >= nodes_.size() || dst >= nodes_.size())
        throw Error("add_edge: endpoint id out of range");
    const auto [want_src, want_dst] = edge_schema(kind);
    const NodeKind got_src = nodes_[src].kind, got_dst = nodes_[dst].kind;
    if (got_src != want_src || got_dst != want_dst)
        throw SchemaError("edge kind " + std::string(to_string(kind)) + " expects (" +
                          std::string(to_string(want_src)) + " -> " + std::string(to_string(want_dst)) +
                          "), got (" + std::string(to_string(got_src)) + " -> " +
                          std::string(to_string(got_dst)) + ")");
    if (!edge_keys_.insert(edge_key(src, dst, kind)).second)
        throw DuplicateError("duplicate edge (" + nodes_[src].key + " -> " + nodes_[dst].key + ", " +
                             std::string(to_string(kind)) + ")");
    const EdgeId id = static_cast<EdgeId>(edges_.size());
    edges_.push_back(EdgeRef{id, src, dst, kind, std::move(attrs)});
    auto& out = out_[static_cast<std::size_t>(kind)];
    auto& in = in_[static_cast<std::size_t>(kind)];
    if (out.size() <= src) out.resize(nodes_.size());
    if (in.size() <= dst) in.resize(nodes_.size());
    out[src].emplace_back(dst, id);
    in[dst].emplace_back(src, id);
    return id;
}

std::optional<NodeId> EntityGraph::find(NodeKind kind, std::string_view key) const {
    const auto& index = by_key_[static_cast<std::size_t>(kind)];
    auto it = index.find(std::string(key));
    if (it == index.end()) return std::nullopt;
    return it->second;
}

const std::vector<std::pair<NodeId, EdgeId>>& EntityGraph::out_edges(NodeId n, EdgeKind kind) const {
    const auto& adj = out_[static_cast<std::size_t>(kind)];
    if (n >= adj.size()) return kNoEdges;
    return adj[n];
}

const std::vector<std::pair<NodeId, EdgeId>>& EntityGraph::in_edges(NodeId n, EdgeKind kind) const {
    const auto& adj = in_[static_cast<std::size_t>(kind)];
    if (n >= adj.size()) return kNoEdges;
    return adj[n];
}

std::vector<NodeId> EntityGraph::neighbors(NodeId n, EdgeKind kind) const {
    std::vector<NodeId> out;
    for (const auto& [m, e] : out_edges(n, kind)) out.push_back(m);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<NodeId> EntityGraph::reverse_neighbors(NodeId n, EdgeKind kind) const {
    std::vector<NodeId> out;
    for (const auto& [m, e] : in_edges(n, kind)) out.push_back(m);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<NodeId> EntityGraph::nodes_of_kind(NodeKind kind) const {
    std::vector<NodeId> out;
    for (const NodeRef& n : nodes_)
        if (n.kind == kind) out.push_back(n.id);
    return out;
}

std::vector<EdgeId> EntityGraph::edges_of_kind(EdgeKind kind) const {
    std::vector<EdgeId> out;
    for (const EdgeRef& e : edges_)
        if (e.kind == kind) out.push_back(e.id);
    return out;
}

std::vector<NodeId> EntityGraph::candidate_dimensions(NodeId metric) const {
    if (metric >= nodes_.size() || nodes_[metric].kind != NodeKind::Metric)
        throw Error("candidate_dimensions: node " + std::to_string(metric) + " is not a Metric");
    return neighbors(metric, EdgeKind::MetricHasDimension);
}

EdgeSplit EntityGraph::split_edges(EdgeKind kind, std::array<double, 3> ratios, double mp_fraction,
                                   std::uint64_t seed) const {
    const double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-9)
        throw Error("split_edges: ratios sum to " + std::to_string(sum) + ", expected 1");
    if (!(mp_fraction > 0.0 && mp_fraction < 1.0))
        throw Error("split_edges: mp_fraction must lie in (0,1)");

    std::vector<EdgeId> ids = edges_of_kind(kind);
    Rng rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng);

    const std::size_t n = ids.size();
    std::size_t n_train = static_cast<std::size_t>(std::llround(ratios[0] * static_cast<double>(n)));
    std::size_t n_val = static_cast<std::size_t>(std::llround(ratios[1] * static_cast<double>(n)));
    n_train = std::min(n_train, n);
    n_val = std::min(n_val, n - n_train);

    EdgeSplit split;
    split.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.val.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train),
                     ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    split.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), ids.end());

    const std::size_t n_mp =
        static_cast<std::size_t>(std::llround(mp_fraction * static_cast<double>(n_train)));
    split.train_mp.assign(split.train.begin(), split.train.begin() + static_cast<std::ptrdiff_t>(n_mp));
    split.train_sup.assign(split.train.begin() + static_cast<std::ptrdiff_t>(n_mp), split.train.end());
    return split;
}

void serialize(const EntityGraph& g, std::ostream& os) {
    os << R"({"schema":"monrec.graph.v1"})" << '\n';
    for (const NodeRef& n : g.nodes()) {
        nlohmann::ordered_json rec;
        rec["type"] = "node";
        rec["id"] = n.id;
        rec["kind"] = to_string(n.kind);
        rec["key"] = n.key;
        rec["ontology"] = n.ontology;
        os << rec.dump() << '\n';
    }
    for (const EdgeRef& e : g.edges()) {
        nlohmann::ordered_json rec;
        rec["type"] = "edge";
        rec["src"] = e.src;
        rec["dst"] = e.dst;
        rec["kind"] = to_string(e.kind);
        rec["attrs"] = e.attrs;
        os << rec.dump() << '\n';
    }
}

EntityGraph deserialize(std::istream& is) {
    EntityGraph g;
    std::string line;
    std::size_t lineno = 0;
    bool saw_header = false;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(std::string("graph snapshot: ") + e.what(), lineno);
        }
        if (!saw_header) {
            if (rec.value("schema", "") != "monrec.graph.v1")
                throw ParseError("graph snapshot: missing or unknown schema header", lineno);
            saw_header = true;
            continue;
        }
        const std::string type = rec.value("type", "");
        try {
            if (type == "node") {
                const NodeId id = g.add_node(node_kind_from_string(rec.at("kind").get<std::string>()),
                                             rec.at("key").get<std::string>(),
                                             rec.at("ontology").get<std::string>());
                if (id != rec.at("id").get<NodeId>())
                    throw SchemaError("node ids must be dense and in insertion order");
            } else if (type == "edge") {
                Attrs attrs;
                if (rec.contains("attrs")) attrs = rec.at("attrs").get<Attrs>();
                g.add_edge(rec.at("src").get<NodeId>(), rec.at("dst").get<NodeId>(),
                           edge_kind_from_string(rec.at("kind").get<std::string>()), std::move(attrs));
            } else {
                throw SchemaError("unknown record type '" + type + "'");
            }
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("graph snapshot: ") + e.what(), lineno);
        } catch (const Error& e) {
            throw ParseError(std::string("graph snapshot: ") + e.what(), lineno);
        }
    }
    if (!saw_header) throw ParseError("graph snapshot: empty document (no schema header)", lineno);
    return g;
}

void save_graph(const EntityGraph& g, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open graph path for writing: " + path);
    serialize(g, os);
}

EntityGraph load_graph(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open graph snapshot: " + path);
    return deserialize(is);
}

bool structurally_equal(const EntityGraph& a, const EntityGraph& b) {
    if (a.node_count() != b.node_count() || a.edge_count() != b.edge_count()) return false;
    for (std::size_t i = 0; i < a.node_count(); ++i) {
        const NodeRef& x = a.node(static_cast<NodeId>(i));
        const NodeRef& y = b.node(static_cast<NodeId>(i));
        if (x.kind != y.kind || x.key != y.key || x.ontology != y.ontology) return false;
    }
    for (std::size_t i = 0; i < a.edge_count(); ++i) {
        const EdgeRef& x = a.edge(static_cast<EdgeId>(i));
        const EdgeRef& y = b.edge(static_cast<EdgeId>(i));
        if (x.src != y.src || x.dst != y.dst || x.kind != y.kind || x.attrs != y.attrs) return false;
    }
    return true;
}

}  // namespace monrec::graph
