#include "monrec/ranker.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <set>
#include <unordered_set>

#include "monrec/kernels.hpp"
#include "monrec/select.hpp"

namespace monrec::ranker {

using graph::EdgeKind;
using graph::EntityGraph;
using graph::NodeId;
using graph::NodeKind;
using tensor::Tape;
using tensor::Tensor;
using tensor::Var;

std::string_view to_string(Task t) {
    return t == Task::DimensionRec ? "DimensionRec" : "ExpressionRec";
}

Task task_from_string(std::string_view s) {
    if (s == "DimensionRec") return Task::DimensionRec;
    if (s == "ExpressionRec") return Task::ExpressionRec;
    throw SchemaError("unknown ranker task '" + std::string(s) + "'");
}

TaskSchema schema_for(Task task) {
    TaskSchema s;
    s.task = task;
    if (task == Task::DimensionRec) {
        s.node_kinds = {NodeKind::Monitor, NodeKind::Metric, NodeKind::Dimension};
        s.edge_kinds = {EdgeKind::MonitorHasMetric, EdgeKind::MetricHasDimension,
                        EdgeKind::MonitorAssociatedDimension};
        s.supervised_kind = EdgeKind::MonitorAssociatedDimension;
        s.candidate_kind = NodeKind::Dimension;
        s.query_arity = 2;
    } else {
        s.node_kinds = {NodeKind::Service, NodeKind::Monitor, NodeKind::Metric, NodeKind::Dimension,
                        NodeKind::Expression};
        s.edge_kinds = {EdgeKind::ServiceHasMonitor, EdgeKind::MonitorHasMetric,
                        EdgeKind::MonitorAssociatedDimension, EdgeKind::MetricHasDimension,
                        EdgeKind::MonitorUsesExpression, EdgeKind::MetricUsesExpression,
                        EdgeKind::DimensionUsesExpression};
        s.supervised_kind = EdgeKind::MonitorUsesExpression;
        s.candidate_kind = NodeKind::Expression;
        s.query_arity = 3;
    }
    return s;
}

std::vector<std::size_t> RankerConfig::layer_widths(Task t) const {
    if (static_cast<int>(hidden.size()) != layers - 1)
        throw Error("ranker config: expected " + std::to_string(layers - 1) + " hidden widths, got " +
                    std::to_string(hidden.size()));
    std::vector<std::size_t> widths = hidden;
    widths.push_back(output_width(t));
    for (std::size_t w : widths) {
        if (w == 0) throw Error("ranker config: layer widths must be positive");
        if (w % heads != 0)
            throw Error("ranker config: width " + std::to_string(w) + " not divisible by " +
                        std::to_string(heads) + " heads");
    }
    return widths;
}

std::vector<double> attention_scores(const std::vector<double>& query,
                                     const std::vector<std::vector<double>>& keys,
                                     std::size_t heads, std::size_t head_width,
                                     bool conventional_scale) {
    if (keys.empty()) throw Error("attention_scores: empty neighborhood");
    const double scale = conventional_scale
                             ? 1.0 / std::sqrt(static_cast<double>(head_width))
                             : 1.0 / std::sqrt(static_cast<double>(heads * head_width));
    std::vector<double> raw(keys.size());
    for (std::size_t j = 0; j < keys.size(); ++j) {
        if (keys[j].size() != query.size()) throw ShapeError("attention_scores: width mismatch");
        double dot = 0.0;
        for (std::size_t t = 0; t < query.size(); ++t) dot += query[t] * keys[j][t];
        raw[j] = dot * scale;
    }
    const double mx = *std::max_element(raw.begin(), raw.end());
    double z = 0.0;
    for (double& v : raw) {
        v = std::exp(v - mx);
        z += v;
    }
    for (double& v : raw) v /= z;
    return raw;
}

std::vector<double> metapath_context(const TaskGraph& tg, std::size_t local_node,
                                     std::size_t walk_length, std::size_t walks_per_node,
                                     std::uint64_t seed) {
    const std::size_t d = tg.features.cols();
    std::vector<double> ctx(d, 0.0);
    Rng rng(mix_seed(seed, 0x77a1c5 + local_node));
    std::size_t visited = 0;
    for (std::size_t w = 0; w < walks_per_node; ++w) {
        std::size_t cur = local_node;
        for (std::size_t step = 0; step < walk_length; ++step) {
            std::size_t total = 0;
            for (std::size_t r = 0; r < tg.relations.size(); ++r) total += tg.adjacency[r][cur].size();
            if (total == 0) break;  // dead end truncates the walk
            std::uniform_int_distribution<std::size_t> pick(0, total - 1);
            std::size_t at = pick(rng);
            std::size_t next = cur;
            for (std::size_t r = 0; r < tg.relations.size(); ++r) {
                const auto& nbrs = tg.adjacency[r][cur];
                if (at < nbrs.size()) {
                    next = nbrs[at];
                    break;
                }
                at -= nbrs.size();
            }
            cur = next;
            for (std::size_t j = 0; j < d; ++j) ctx[j] += tg.features.at(cur, j);
            ++visited;
        }
    }
    if (visited > 0)
        for (double& v : ctx) v /= static_cast<double>(visited);
    // unit scale keeps the context comparable with the learned states it is
    // concatenated to; isolated nodes stay at zero
    double norm = 0.0;
    for (double v : ctx) norm += v * v;
    if (norm > 1e-24) {
        norm = std::sqrt(norm);
        for (double& v : ctx) v /= norm;
    }
    return ctx;
}

TaskGraph build_task_graph(const EntityGraph& g, const TaskSchema& schema,
                           embed::Embedder& embedder,
                           const std::vector<graph::EdgeId>& mp_edge_ids,
                           bool use_metapaths, std::size_t walk_length,
                           std::size_t walks_per_node, std::uint64_t seed) {
    TaskGraph tg;
    tg.schema = schema;
    for (NodeKind kind : schema.node_kinds) {
        const std::size_t start = tg.local_to_node.size();
        for (NodeId nid : g.nodes_of_kind(kind)) {
            tg.node_to_local.emplace(nid, tg.local_to_node.size());
            tg.local_to_node.push_back(nid);
        }
        tg.kind_ranges.emplace_back(start, tg.local_to_node.size());
    }
    const std::size_t n = tg.local_to_node.size();

    for (EdgeKind kind : schema.edge_kinds) {
        tg.relations.push_back(Relation{kind, false});
        tg.relations.push_back(Relation{kind, true});
    }
    tg.edges.resize(tg.relations.size());
    tg.adjacency.assign(tg.relations.size(), std::vector<std::vector<std::size_t>>(n));

    auto add_edges = [&](EdgeKind kind, const std::vector<graph::EdgeId>& ids) {
        std::size_t rel_base = 0;
        for (std::size_t r = 0; r < tg.relations.size(); ++r)
            if (tg.relations[r].kind == kind && !tg.relations[r].reverse) {
                rel_base = r;
                break;
            }
        for (graph::EdgeId id : ids) {
            const graph::EdgeRef& e = g.edge(id);
            auto si = tg.node_to_local.find(e.src);
            auto di = tg.node_to_local.find(e.dst);
            if (si == tg.node_to_local.end() || di == tg.node_to_local.end()) continue;
            tg.edges[rel_base].emplace_back(si->second, di->second);
            tg.edges[rel_base + 1].emplace_back(di->second, si->second);
            tg.adjacency[rel_base][si->second].push_back(di->second);
            tg.adjacency[rel_base + 1][di->second].push_back(si->second);
        }
    };
    for (EdgeKind kind : schema.edge_kinds) {
        if (kind == schema.supervised_kind)
            add_edges(kind, mp_edge_ids);
        else
            add_edges(kind, g.edges_of_kind(kind));
    }

    const std::size_t d = embedder.width();
    tg.features = Tensor::matrix(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        const embed::Vec v = embedder.embed_text(g.node(tg.local_to_node[i]).ontology);
        std::copy(v.begin(), v.end(), tg.features.data.begin() + static_cast<std::ptrdiff_t>(i * d));
    }

    tg.metapaths_enabled = use_metapaths;
    if (use_metapaths) {
        tg.metapath = Tensor::matrix(n, d);
        for (std::size_t i = 0; i < n; ++i) {
            const auto ctx = metapath_context(tg, i, walk_length, walks_per_node, seed);
            std::copy(ctx.begin(), ctx.end(),
                      tg.metapath.data.begin() + static_cast<std::ptrdiff_t>(i * d));
        }
    }
    return tg;
}

namespace {

Tensor glorot(std::size_t rows, std::size_t cols, Rng& rng) {
    Tensor t = Tensor::matrix(rows, cols);
    std::normal_distribution<double> d(0.0, std::sqrt(2.0 / static_cast<double>(rows + cols)));
    for (double& v : t.data) v = d(rng);
    return t;
}

// flat incoming-edge index shared by the attention forward and backward
struct EdgeIndex {
    struct Flat {
        std::size_t src, rel;
    };
    std::vector<Flat> flat;          // grouped by destination node
    std::vector<std::size_t> start;  // CSR offsets, size n+1
};

std::shared_ptr<EdgeIndex> build_edge_index(const TaskGraph& tg, std::size_t n) {
    auto idx = std::make_shared<EdgeIndex>();
    std::vector<std::size_t> count(n, 0);
    for (const auto& rel_edges : tg.edges)
        for (const auto& [s, t] : rel_edges) count[t]++;
    idx->start.assign(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) idx->start[i + 1] = idx->start[i] + count[i];
    idx->flat.resize(idx->start[n]);
    std::vector<std::size_t> cursor = idx->start;
    for (std::size_t r = 0; r < tg.edges.size(); ++r)
        for (const auto& [s, t] : tg.edges[r]) idx->flat[cursor[t]++] = EdgeIndex::Flat{s, r};
    return idx;
}

/// Fused neighborhood attention with a hand-written adjoint: per head,
/// softmax((q_i . k_j) * scale) over incoming edges, messages summed.
Var attention_aggregate(Tape& tape, Var xq, std::vector<Var> xk, std::vector<Var> xv,
                        std::shared_ptr<EdgeIndex> idx, std::size_t heads, double scale) {
    const std::size_t n = tape.value(xq).rows();
    const std::size_t out_w = tape.value(xq).cols();
    const std::size_t d_o = out_w / heads;

    auto alpha = std::make_shared<std::vector<double>>(idx->flat.size() * heads, 0.0);
    Tensor m = Tensor::matrix(n, out_w);
    {
        std::vector<const double*> kptr(xk.size()), vptr(xv.size());
        for (std::size_t r = 0; r < xk.size(); ++r) kptr[r] = tape.value(xk[r]).data.data();
        for (std::size_t r = 0; r < xv.size(); ++r) vptr[r] = tape.value(xv[r]).data.data();
        const double* qptr = tape.value(xq).data.data();
        double* mptr = m.data.data();
        double* aptr = alpha->data();
        const auto& flat = idx->flat;
        const auto& start = idx->start;
#pragma omp parallel for schedule(static)
        for (long long ii = 0; ii < static_cast<long long>(n); ++ii) {
            const std::size_t i = static_cast<std::size_t>(ii);
            const std::size_t e0 = start[i], e1 = start[i + 1];
            if (e0 == e1) continue;  // isolated nodes keep a zero message
            for (std::size_t h = 0; h < heads; ++h) {
                const std::size_t off = h * d_o;
                double mx = -std::numeric_limits<double>::infinity();
                for (std::size_t e = e0; e < e1; ++e) {
                    const auto& fe = flat[e];
                    double dot = 0.0;
                    const double* qrow = qptr + i * out_w + off;
                    const double* krow = kptr[fe.rel] + fe.src * out_w + off;
                    for (std::size_t t = 0; t < d_o; ++t) dot += qrow[t] * krow[t];
                    const double raw = dot * scale;
                    aptr[e * heads + h] = raw;
                    mx = std::max(mx, raw);
                }
                double z = 0.0;
                for (std::size_t e = e0; e < e1; ++e) {
                    double& a = aptr[e * heads + h];
                    a = std::exp(a - mx);
                    z += a;
                }
                for (std::size_t e = e0; e < e1; ++e) {
                    const double a = (aptr[e * heads + h] /= z);
                    const auto& fe = flat[e];
                    const double* vrow = vptr[fe.rel] + fe.src * out_w + off;
                    double* mrow = mptr + i * out_w + off;
                    for (std::size_t t = 0; t < d_o; ++t) mrow[t] += a * vrow[t];
                }
            }
        }
    }

    std::vector<Var> inputs{xq};
    inputs.insert(inputs.end(), xk.begin(), xk.end());
    inputs.insert(inputs.end(), xv.begin(), xv.end());
    const std::uint32_t qid = xq.id;
    std::vector<std::uint32_t> kids, vids;
    for (Var v : xk) kids.push_back(v.id);
    for (Var v : xv) vids.push_back(v.id);
    const std::uint32_t oid = tape.next_id();

    auto backward = [qid, kids, vids, oid, idx = std::move(idx), alpha, n, out_w, d_o, heads,
                     scale](Tape& t) {
        const Tensor& go = t.out_grad(oid);
        const double* gptr = go.data.data();
        const double* qptr = t.value(Var{qid}).data.data();
        std::vector<const double*> kptr(kids.size()), vptr(vids.size());
        for (std::size_t r = 0; r < kids.size(); ++r) kptr[r] = t.value(Var{kids[r]}).data.data();
        for (std::size_t r = 0; r < vids.size(); ++r) vptr[r] = t.value(Var{vids[r]}).data.data();

        const bool want_q = t.requires_grad(Var{qid});
        double* gq = want_q ? t.grad_mut(Var{qid}).data.data() : nullptr;
        std::vector<double*> gk(kids.size(), nullptr), gv(vids.size(), nullptr);
        for (std::size_t r = 0; r < kids.size(); ++r)
            if (t.requires_grad(Var{kids[r]})) gk[r] = t.grad_mut(Var{kids[r]}).data.data();
        for (std::size_t r = 0; r < vids.size(); ++r)
            if (t.requires_grad(Var{vids[r]})) gv[r] = t.grad_mut(Var{vids[r]}).data.data();

        const auto& flat = idx->flat;
        const auto& start = idx->start;
        const double* aptr = alpha->data();
        std::vector<double> dalpha;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t e0 = start[i], e1 = start[i + 1];
            if (e0 == e1) continue;
            for (std::size_t h = 0; h < heads; ++h) {
                const std::size_t off = h * d_o;
                const double* dm = gptr + i * out_w + off;
                dalpha.assign(e1 - e0, 0.0);
                double asum = 0.0;
                for (std::size_t e = e0; e < e1; ++e) {
                    const auto& fe = flat[e];
                    const double a = aptr[e * heads + h];
                    const double* vrow = vptr[fe.rel] + fe.src * out_w + off;
                    double da = 0.0;
                    for (std::size_t tt = 0; tt < d_o; ++tt) da += dm[tt] * vrow[tt];
                    dalpha[e - e0] = da;
                    asum += a * da;
                    if (gv[fe.rel])
                        for (std::size_t tt = 0; tt < d_o; ++tt)
                            gv[fe.rel][fe.src * out_w + off + tt] += a * dm[tt];
                }
                for (std::size_t e = e0; e < e1; ++e) {
                    const auto& fe = flat[e];
                    const double a = aptr[e * heads + h];
                    const double ds = a * (dalpha[e - e0] - asum) * scale;
                    const double* krow = kptr[fe.rel] + fe.src * out_w + off;
                    const double* qrow = qptr + i * out_w + off;
                    if (gq)
                        for (std::size_t tt = 0; tt < d_o; ++tt)
                            gq[i * out_w + off + tt] += ds * krow[tt];
                    if (gk[fe.rel])
                        for (std::size_t tt = 0; tt < d_o; ++tt)
                            gk[fe.rel][fe.src * out_w + off + tt] += ds * qrow[tt];
                }
            }
        }
    };
    return tape.custom("graph_attention", std::move(inputs), std::move(m), std::move(backward));
}

}  // namespace

RankerModel init_ranker(Task task, const RankerConfig& config, std::size_t feature_width) {
    RankerModel m;
    m.task = task;
    m.config = config;
    const TaskSchema schema = schema_for(task);
    const auto widths = config.layer_widths(task);
    Rng rng(mix_seed(config.seed, 0x4a11ce));
    std::size_t in_w = feature_width;
    for (int l = 0; l < config.layers; ++l) {
        const std::size_t out_w = widths[static_cast<std::size_t>(l)];
        const std::string prefix = "l" + std::to_string(l) + ".";
        for (NodeKind kind : schema.node_kinds)
            m.params[prefix + "q." + std::string(graph::to_string(kind))] = glorot(in_w, out_w, rng);
        for (EdgeKind kind : schema.edge_kinds)
            for (bool rev : {false, true}) {
                const Relation rel{kind, rev};
                m.params[prefix + "k." + rel.name()] = glorot(in_w, out_w, rng);
                m.params[prefix + "v." + rel.name()] = glorot(in_w, out_w, rng);
            }
        m.params[prefix + "w"] = glorot(in_w + out_w, out_w, rng);
        in_w = out_w;
    }
    const std::size_t final_w = in_w + (config.use_metapaths ? feature_width : 0);
    Tensor proj = glorot(schema.query_arity * final_w, final_w, rng);
    if (config.use_metapaths) {
        // context-facing blocks start at zero: the initial scorer matches the
        // path-free model and learns to use the walk context incrementally
        for (std::size_t t = 0; t < schema.query_arity; ++t)
            for (std::size_t r = 0; r < final_w; ++r)
                for (std::size_t c = 0; c < final_w; ++c)
                    if (r >= in_w || c >= in_w) proj.at(t * final_w + r, c) = 0.0;
    }
    m.params["score.proj"] = std::move(proj);
    return m;
}

Var forward_states(Tape& tape, const RankerModel& model, const TaskGraph& tg,
                   const std::map<std::string, Var>& param_vars) {
    const std::size_t n = tg.local_to_node.size();
    const auto widths = model.config.layer_widths(model.task);
    auto idx = build_edge_index(tg, n);

    Var x = tape.constant(tg.features);
    for (int l = 0; l < model.config.layers; ++l) {
        const std::size_t out_w = widths[static_cast<std::size_t>(l)];
        const std::size_t d_o = out_w / model.config.heads;
        const double scale =
            model.config.conventional_attention_scale
                ? 1.0 / std::sqrt(static_cast<double>(d_o))
                : 1.0 / std::sqrt(static_cast<double>(model.config.heads * d_o));
        const std::string prefix = "l" + std::to_string(l) + ".";

        std::vector<Var> q_parts;
        for (std::size_t k = 0; k < tg.schema.node_kinds.size(); ++k) {
            const auto [lo, hi] = tg.kind_ranges[k];
            std::vector<std::size_t> rows(hi - lo);
            std::iota(rows.begin(), rows.end(), lo);
            const std::string name =
                prefix + "q." + std::string(graph::to_string(tg.schema.node_kinds[k]));
            q_parts.push_back(tape.matmul(tape.gather_rows(x, rows), param_vars.at(name)));
        }
        Var xq = tape.vstack(q_parts);

        std::vector<Var> xk, xv;
        for (const Relation& rel : tg.relations) {
            xk.push_back(tape.matmul(x, param_vars.at(prefix + "k." + rel.name())));
            xv.push_back(tape.matmul(x, param_vars.at(prefix + "v." + rel.name())));
        }

        Var m = attention_aggregate(tape, xq, std::move(xk), std::move(xv), idx, model.config.heads,
                                    scale);
        x = tape.relu(tape.matmul(tape.concat(x, m), param_vars.at(prefix + "w")));
    }
    if (tg.metapaths_enabled && model.config.use_metapaths)
        x = tape.concat(x, tape.constant(tg.metapath));
    return x;
}

std::vector<double> score_query(const RankerModel& model, const Tensor& final_states,
                                const std::vector<std::size_t>& query_rows,
                                const std::vector<std::size_t>& candidate_rows) {
    const std::size_t fw = final_states.cols();
    const Tensor& proj = model.params.at("score.proj");
    if (proj.rows() != query_rows.size() * fw)
        throw ShapeError("score_query: projection expects arity " +
                         std::to_string(proj.rows() / fw) + ", got " +
                         std::to_string(query_rows.size()));
    std::vector<double> qcat(query_rows.size() * fw);
    for (std::size_t t = 0; t < query_rows.size(); ++t)
        std::copy_n(final_states.data.begin() + static_cast<std::ptrdiff_t>(query_rows[t] * fw), fw,
                    qcat.begin() + static_cast<std::ptrdiff_t>(t * fw));
    std::vector<double> ctx(fw, 0.0);
    kernels::matmul_nn(qcat.data(), proj.data.data(), ctx.data(), 1, qcat.size(), fw);

    std::vector<double> scores(candidate_rows.size());
    for (std::size_t c = 0; c < candidate_rows.size(); ++c) {
        const double* row = final_states.data.data() + candidate_rows[c] * fw;
        double dot = 0.0;
        for (std::size_t j = 0; j < fw; ++j) dot += ctx[j] * row[j];
        scores[c] = dot;
    }
    return scores;
}

namespace {

Tensor inference_states(const RankerModel& model, const TaskGraph& tg) {
    Tape tape;
    tape.check_finite = false;  // inference tolerates whatever training produced
    std::map<std::string, Var> vars;
    for (const auto& [name, t] : model.params) vars.emplace(name, tape.constant(t));
    Var f = forward_states(tape, model, tg, vars);
    return tape.value(f);
}

}  // namespace

RankedList score_candidates(const RankerModel& model, const TaskGraph& tg,
                            const std::vector<NodeId>& query,
                            const std::vector<NodeId>& candidates) {
    RankedList out;
    out.query = query;
    if (candidates.empty()) return out;
    std::vector<std::size_t> qrows, crows;
    for (NodeId nid : query) qrows.push_back(tg.node_to_local.at(nid));
    for (NodeId nid : candidates) crows.push_back(tg.node_to_local.at(nid));
    const Tensor states = inference_states(model, tg);
    const auto scores = score_query(model, states, qrows, crows);
    for (std::size_t i = 0; i < candidates.size(); ++i)
        out.candidates.push_back(RankedCandidate{candidates[i], scores[i]});
    std::stable_sort(out.candidates.begin(), out.candidates.end(),
                     [](const RankedCandidate& a, const RankedCandidate& b) {
                         if (a.score != b.score) return a.score > b.score;
                         return a.node < b.node;
                     });
    return out;
}

Var loss_top1max(Tape& tape, Var r_pos, Var r_negs) {
    if (tape.value(r_negs).numel() == 0) throw Error("loss_top1max: needs at least one negative");
    Var s = tape.softmax(r_negs, 0);
    Var diff = tape.add(r_negs, tape.neg(r_pos));  // scalar broadcast
    Var term = tape.add(tape.sigmoid(diff), tape.sigmoid(tape.mul(r_negs, r_negs)));
    return tape.sum_all(tape.mul(s, term));
}

double loss_top1max_value(double r_pos, const std::vector<double>& r_negs) {
    Tape tape;
    Var pos = tape.constant(Tensor::scalar(r_pos));
    Var negs = tape.constant(Tensor({r_negs.size()}, r_negs));
    return tape.value(loss_top1max(tape, pos, negs)).item();
}

std::optional<std::vector<NodeId>> query_for_edge(const EntityGraph& g, const TaskSchema& schema,
                                                  const graph::EdgeRef& edge) {
    if (schema.task == Task::DimensionRec) {
        // (monitor, metric) where the metric's candidate set holds the dimension
        for (NodeId metric : g.neighbors(edge.src, EdgeKind::MonitorHasMetric)) {
            const auto cands = g.candidate_dimensions(metric);
            if (std::binary_search(cands.begin(), cands.end(), edge.dst))
                return std::vector<NodeId>{edge.src, metric};
        }
        return std::nullopt;
    }
    const auto metrics = g.neighbors(edge.src, EdgeKind::MonitorHasMetric);
    const auto dims = g.neighbors(edge.src, EdgeKind::MonitorAssociatedDimension);
    if (metrics.empty() || dims.empty()) return std::nullopt;
    return std::vector<NodeId>{edge.src, metrics.front(), dims.front()};
}

std::vector<NodeId> valid_candidates(const EntityGraph& g, const TaskSchema& schema,
                                     const std::vector<NodeId>& query) {
    if (schema.task == Task::DimensionRec) return g.candidate_dimensions(query.at(1));
    return g.nodes_of_kind(NodeKind::Expression);
}

namespace {

struct SupervisedEntry {
    std::vector<std::size_t> query_rows;
    std::size_t positive_row;
    std::vector<std::size_t> negative_pool;  // valid, unlinked in train
};

// rank of the positive among pool+positive scores, ties by ascending node id
double reciprocal_rank(const TaskGraph& tg, const std::vector<double>& scores,
                       const std::vector<std::size_t>& rows, std::size_t pos_index) {
    const double pos_score = scores[pos_index];
    const NodeId pos_node = tg.local_to_node[rows[pos_index]];
    std::size_t rank = 1;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (i == pos_index) continue;
        if (scores[i] > pos_score) ++rank;
        else if (scores[i] == pos_score && tg.local_to_node[rows[i]] < pos_node) ++rank;
    }
    return 1.0 / static_cast<double>(rank);
}

}  // namespace

RankerModel train_ranker(const EntityGraph& g, Task task, const RankerConfig& config,
                         embed::Embedder& embedder, RankTrainReport* report) {
    const TaskSchema schema = schema_for(task);
    const graph::EdgeSplit split =
        g.split_edges(schema.supervised_kind, config.split_ratios, config.mp_fraction, config.seed);
    if (split.train_sup.empty()) throw Error("train_ranker: no supervision edges after split");

    TaskGraph tg = build_task_graph(g, schema, embedder, split.train_mp, config.use_metapaths,
                                    config.walk_length, config.walks_per_node, config.seed);

    // per-monitor linked candidates visible at train time (mp + sup)
    std::unordered_map<NodeId, std::unordered_set<NodeId>> train_linked;
    for (const auto* part : {&split.train_mp, &split.train_sup})
        for (graph::EdgeId id : *part) {
            const auto& e = g.edge(id);
            train_linked[e.src].insert(e.dst);
        }

    auto make_entries = [&](const std::vector<graph::EdgeId>& edge_ids, bool exclude_linked) {
        std::vector<SupervisedEntry> out;
        for (graph::EdgeId id : edge_ids) {
            const auto& e = g.edge(id);
            auto q = query_for_edge(g, schema, e);
            if (!q) continue;
            SupervisedEntry entry;
            for (NodeId nid : *q) entry.query_rows.push_back(tg.node_to_local.at(nid));
            entry.positive_row = tg.node_to_local.at(e.dst);
            const auto linked_it = train_linked.find(e.src);
            for (NodeId cand : valid_candidates(g, schema, *q)) {
                if (cand == e.dst) continue;
                if (exclude_linked && linked_it != train_linked.end() && linked_it->second.count(cand))
                    continue;
                entry.negative_pool.push_back(tg.node_to_local.at(cand));
            }
            out.push_back(std::move(entry));
        }
        return out;
    };
    std::vector<SupervisedEntry> train_entries = make_entries(split.train_sup, true);
    std::vector<SupervisedEntry> val_entries = make_entries(split.val, true);
    std::vector<SupervisedEntry> test_entries = make_entries(split.test, true);
    if (train_entries.empty()) throw Error("train_ranker: no trainable supervision queries");

    RankerModel model = init_ranker(task, config, embedder.width());
    optim::AdamState adam;
    adam.cfg.lr = config.lr;
    adam.cfg.weight_decay = config.weight_decay;
    optim::TrainControl control;
    control.mode = optim::TrainControl::Mode::Maximize;

    auto evaluate_mrr = [&](const std::vector<SupervisedEntry>& entries) {
        if (entries.empty()) return 0.0;
        const Tensor states = inference_states(model, tg);
        double acc = 0.0;
        for (const auto& entry : entries) {
            std::vector<std::size_t> rows = entry.negative_pool;
            rows.push_back(entry.positive_row);
            const auto scores = score_query(model, states, entry.query_rows, rows);
            acc += reciprocal_rank(tg, scores, rows, rows.size() - 1);
        }
        return acc / static_cast<double>(entries.size());
    };

    if (report) {
        double base = 0.0;
        for (const auto& e : val_entries)
            base += 1.0 / static_cast<double>(e.negative_pool.size() + 1);
        report->random_baseline_mrr = val_entries.empty() ? 0.0 : base / static_cast<double>(val_entries.size());
    }

    optim::ParamStore best_params = model.params;
    double best_mrr = -1.0;
    double lr = config.lr;

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        Tape tape;
        std::map<std::string, Var> vars;
        for (const auto& [name, t] : model.params) vars.emplace(name, tape.leaf(t, true));

        double train_loss = 0.0;
        try {
            Var states = forward_states(tape, model, tg, vars);
            Rng rng(mix_seed(config.seed, 0xe90c4 + static_cast<std::uint64_t>(epoch)));

            Var bce_sum = tape.constant(Tensor::scalar(0.0));
            Var top1_sum = tape.constant(Tensor::scalar(0.0));
            std::size_t n_queries = 0, n_top1 = 0;
            for (const auto& entry : train_entries) {
                std::vector<std::size_t> negs = entry.negative_pool;
                if (negs.size() > static_cast<std::size_t>(config.max_negatives)) {
                    std::shuffle(negs.begin(), negs.end(), rng);
                    negs.resize(static_cast<std::size_t>(config.max_negatives));
                }
                // query context vector
                Var qcat{};
                for (std::size_t t = 0; t < entry.query_rows.size(); ++t) {
                    Var row = tape.gather_rows(states, {entry.query_rows[t]});
                    qcat = t == 0 ? row : tape.concat(qcat, row);
                }
                Var ctx = tape.matmul(qcat, vars.at("score.proj"));  // 1 x F
                std::vector<std::size_t> rows{entry.positive_row};
                rows.insert(rows.end(), negs.begin(), negs.end());
                Var cands = tape.gather_rows(states, rows);
                Var scores2d = tape.matmul(cands, tape.transpose(ctx));  // (1+n) x 1
                std::vector<int> labels(rows.size(), 0);
                labels[0] = 1;
                Var probs = tape.sigmoid(tape.flatten(scores2d));
                bce_sum = tape.add(bce_sum, select::loss_bce(tape, probs, labels));
                ++n_queries;
                if (config.use_ranking_loss && !negs.empty()) {
                    std::vector<std::size_t> negidx(negs.size());
                    std::iota(negidx.begin(), negidx.end(), 1);
                    Var r_pos = tape.flatten(tape.gather_rows(scores2d, {0}));
                    Var r_negs = tape.flatten(tape.gather_rows(scores2d, negidx));
                    top1_sum = tape.add(top1_sum, loss_top1max(tape, r_pos, r_negs));
                    ++n_top1;
                }
            }
            Var loss = tape.scale(bce_sum, 1.0 / static_cast<double>(n_queries));
            if (config.use_ranking_loss && n_top1 > 0)
                loss = tape.add(loss, tape.scale(top1_sum, 1.0 / static_cast<double>(n_top1)));
            train_loss = tape.value(loss).item();
            tape.backward(loss);
        } catch (const NonFiniteError& e) {
            throw DivergenceError(std::string("train_ranker diverged: ") + e.what());
        }

        optim::GradMap grads;
        for (const auto& [name, var] : vars) {
            try {
                grads[name] = tape.grad(var);
            } catch (const Error&) {
            }
        }
        adam.cfg.lr = lr;
        if (!grads.empty()) optim::adam_step(model.params, grads, adam);

        const double val_mrr = evaluate_mrr(val_entries);
        if (val_mrr > best_mrr) {
            best_mrr = val_mrr;
            best_params = model.params;
        }
        auto step = control.step(lr, val_mrr);
        lr = step.lr;
        if (report) report->epochs.push_back(RankEpochStat{epoch, train_loss, val_mrr, lr});
        // a short warmup floor before honoring the stop signal; the plateau
        // scheduler stays active from epoch one
        if (step.stop && epoch >= 15) {
            if (report) report->early_stopped = true;
            break;
        }
    }

    model.params = best_params;
    if (report) {
        report->best_val_mrr = best_mrr;
        report->test_mrr = evaluate_mrr(test_entries);
    }
    return model;
}

}  // namespace monrec::ranker
