#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "monrec/common.hpp"
#include "monrec/embed.hpp"
#include "monrec/graph.hpp"
#include "monrec/optim.hpp"
#include "monrec/tensor.hpp"

// Graph recommendation: multi-head attention message passing with
// edge-kind-aware key/value projections, optional random-walk metapath
// context, and the BCE + TOP1-max training objective. Ranks dimensions for
// (monitor, metric) and expressions for (monitor, metric, dimension).

namespace monrec::ranker {

enum class Task { DimensionRec, ExpressionRec };
std::string_view to_string(Task t);
Task task_from_string(std::string_view s);

struct TaskSchema {
    Task task;
    std::vector<graph::NodeKind> node_kinds;
    std::vector<graph::EdgeKind> edge_kinds;  // traversed in both directions
    graph::EdgeKind supervised_kind;          // hidden from message passing when split
    graph::NodeKind candidate_kind;
    std::size_t query_arity;  // 2 for DimensionRec, 3 for ExpressionRec
};
TaskSchema schema_for(Task task);

struct RankerConfig {
    int layers = 3;
    std::vector<std::size_t> hidden = {1024, 256};  // widths of MP layers 1..layers-1
    std::size_t output_dim_rec = 256;               // final MP width, DimensionRec
    std::size_t output_exp_rec = 128;               // final MP width, ExpressionRec
    std::size_t heads = 4;
    bool conventional_attention_scale = false;  // sqrt(d_o) instead of sqrt(d_h*d_o)
    bool use_ranking_loss = true;               // TOP1-max on top of BCE
    bool use_metapaths = true;
    std::size_t walk_length = 4;
    std::size_t walks_per_node = 8;
    int max_negatives = 10;
    double lr = 1e-3;
    double weight_decay = 1e-5;
    int max_epochs = 200;
    std::array<double, 3> split_ratios{0.8, 0.1, 0.1};
    double mp_fraction = 0.7;
    std::uint64_t seed = 7;

    std::size_t output_width(Task t) const {
        return t == Task::DimensionRec ? output_dim_rec : output_exp_rec;
    }
    std::vector<std::size_t> layer_widths(Task t) const;
};

/// Raw attention weights per the printed formula: (q . k_j) / sqrt(d_h d_o),
/// softmax-normalized over the neighborhood. The conventional flag swaps the
/// scale for 1/sqrt(d_o).
std::vector<double> attention_scores(const std::vector<double>& query,
                                     const std::vector<std::vector<double>>& keys,
                                     std::size_t heads, std::size_t head_width,
                                     bool conventional_scale = false);

/// One directed relation = (edge kind, direction). Reverse traversal uses
/// its own projections.
struct Relation {
    graph::EdgeKind kind;
    bool reverse;
    std::string name() const {
        return std::string(graph::to_string(kind)) + (reverse ? ".rev" : "");
    }
};

/// Dense task view over the entity graph: schema nodes reindexed locally
/// (grouped by kind), per-relation edge lists for message passing, initial
/// text features, and optional metapath context vectors.
struct TaskGraph {
    TaskSchema schema;
    std::vector<graph::NodeId> local_to_node;           // local row -> graph node
    std::unordered_map<graph::NodeId, std::size_t> node_to_local;
    std::vector<std::pair<std::size_t, std::size_t>> kind_ranges;  // per schema kind
    std::vector<Relation> relations;
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> edges;  // per relation: (src,dst)
    std::vector<std::vector<std::vector<std::size_t>>> adjacency;         // [relation][src] -> dsts
    tensor::Tensor features;   // N x d initial text embeddings
    tensor::Tensor metapath;   // N x d walk context (zero rows when disabled)
    bool metapaths_enabled = false;
};

/// Message-passing edges take the supervised kind only from `mp_edge_ids`
/// (pass all edges of that kind for inference graphs).
TaskGraph build_task_graph(const graph::EntityGraph& g, const TaskSchema& schema,
                           embed::Embedder& embedder,
                           const std::vector<graph::EdgeId>& mp_edge_ids,
                           bool use_metapaths, std::size_t walk_length,
                           std::size_t walks_per_node, std::uint64_t seed);

/// Mean of initial features of nodes visited on schema-constrained random
/// walks; deterministic per (seed, node), zero for isolated nodes.
std::vector<double> metapath_context(const TaskGraph& tg, std::size_t local_node,
                                     std::size_t walk_length, std::size_t walks_per_node,
                                     std::uint64_t seed);

struct RankerModel {
    Task task;
    RankerConfig config;
    optim::ParamStore params;
};

RankerModel init_ranker(Task task, const RankerConfig& config, std::size_t feature_width);

/// Full message-passing forward: per-layer per-kind query projections,
/// per-relation key/value projections, softmax attention over incoming
/// edges, ReLU(W . concat(x, m)). Returns final node states (with metapath
/// context appended when enabled).
tensor::Var forward_states(tensor::Tape& tape, const RankerModel& model, const TaskGraph& tg,
                           const std::map<std::string, tensor::Var>& param_vars);

/// Scores candidates for one query tuple given precomputed final states.
std::vector<double> score_query(const RankerModel& model, const tensor::Tensor& final_states,
                                const std::vector<std::size_t>& query_rows,
                                const std::vector<std::size_t>& candidate_rows);

struct RankedCandidate {
    graph::NodeId node;
    double score;
};

struct RankedList {
    std::vector<graph::NodeId> query;  // graph node ids of the tuple
    std::vector<RankedCandidate> candidates;  // descending score, ties by id
};

/// Inference entry point: runs the forward pass and ranks `candidates` for
/// the query tuple. Empty candidate set yields an empty list.
RankedList score_candidates(const RankerModel& model, const TaskGraph& tg,
                            const std::vector<graph::NodeId>& query,
                            const std::vector<graph::NodeId>& candidates);

/// TOP1-max: sum_j softmax(r_j) [ sigmoid(r_j - r_pos) + sigmoid(r_j^2) ]
/// over negative scores.
tensor::Var loss_top1max(tensor::Tape& tape, tensor::Var r_pos, tensor::Var r_negs);
double loss_top1max_value(double r_pos, const std::vector<double>& r_negs);

struct RankEpochStat {
    int epoch;
    double train_loss;
    double val_mrr;
    double lr;
};

struct RankTrainReport {
    std::vector<RankEpochStat> epochs;
    double best_val_mrr = 0.0;
    double test_mrr = 0.0;
    double random_baseline_mrr = 0.0;  // mean 1/|candidates| over val queries
    bool early_stopped = false;
};

/// Trains on the supervised edge split: message passing sees only train_mp
/// edges of the supervised kind, supervision comes from train_sup, the
/// validation MRR drives plateau scheduling and early stopping. Negatives
/// are resampled per epoch, uniformly from unlinked valid candidates.
RankerModel train_ranker(const graph::EntityGraph& g, Task task, const RankerConfig& config,
                         embed::Embedder& embedder, RankTrainReport* report = nullptr);

// ---- query construction shared by training, evaluation and the pipeline ----
/// Query tuple rows for a supervised edge, e.g. (monitor, metric) for a
/// monitor->dimension edge. Returns nullopt when the graph lacks the
/// required context (no metric whose candidate set holds the dimension).
std::optional<std::vector<graph::NodeId>> query_for_edge(const graph::EntityGraph& g,
                                                         const TaskSchema& schema,
                                                         const graph::EdgeRef& edge);

/// Valid candidate set for a query: candidate_dimensions(metric) for
/// DimensionRec, every expression node for ExpressionRec.
std::vector<graph::NodeId> valid_candidates(const graph::EntityGraph& g, const TaskSchema& schema,
                                            const std::vector<graph::NodeId>& query);

}  // namespace monrec::ranker
