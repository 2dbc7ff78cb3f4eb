#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "monrec/ranker.hpp"
#include "oracles.hpp"

using namespace monrec;
using namespace monrec::ranker;
using graph::EdgeKind;
using graph::EntityGraph;
using graph::NodeKind;
using tensor::Tape;
using tensor::Tensor;
using tensor::Var;

namespace {

// hand-built two-relation task view over three nodes: monitor -> metric ->
// dimension, with explicit features
TaskGraph toy_task_graph(const std::vector<std::vector<double>>& feats) {
    TaskGraph tg;
    tg.schema = schema_for(Task::DimensionRec);
    tg.local_to_node = {0, 1, 2};
    tg.node_to_local = {{0, 0}, {1, 1}, {2, 2}};
    tg.kind_ranges = {{0, 1}, {1, 2}, {2, 3}};  // monitor, metric, dimension
    for (EdgeKind kind : tg.schema.edge_kinds) {
        tg.relations.push_back(Relation{kind, false});
        tg.relations.push_back(Relation{kind, true});
    }
    tg.edges.resize(tg.relations.size());
    tg.adjacency.assign(tg.relations.size(), std::vector<std::vector<std::size_t>>(3));
    auto connect = [&](std::size_t rel, std::size_t s, std::size_t t) {
        tg.edges[rel].emplace_back(s, t);
        tg.adjacency[rel][s].push_back(t);
        tg.edges[rel + 1].emplace_back(t, s);
        tg.adjacency[rel + 1][t].push_back(s);
    };
    connect(0, 0, 1);  // MonitorHasMetric
    connect(2, 1, 2);  // MetricHasDimension
    const std::size_t d = feats[0].size();
    tg.features = Tensor::matrix(3, d);
    for (std::size_t i = 0; i < 3; ++i)
        std::copy(feats[i].begin(), feats[i].end(),
                  tg.features.data.begin() + static_cast<std::ptrdiff_t>(i * d));
    tg.metapaths_enabled = false;
    return tg;
}

RankerConfig tiny_config(int layers, std::size_t width, std::size_t heads = 1) {
    RankerConfig cfg;
    cfg.layers = layers;
    cfg.hidden.assign(static_cast<std::size_t>(layers - 1), width);
    cfg.output_dim_rec = width;
    cfg.output_exp_rec = width;
    cfg.heads = heads;
    cfg.use_metapaths = false;
    return cfg;
}

}  // namespace

TEST_CASE("attention scores on the documented cases") {
    SUBCASE("single neighbor takes all the weight") {
        auto w = attention_scores({1.0, 2.0}, {{0.5, 0.5}}, 2, 8);
        REQUIRE(w.size() == 1);
        CHECK(w[0] == doctest::Approx(1.0));
    }
    SUBCASE("q.k = 4 with 2 heads of width 8 gives raw scores 1 and uniform weights") {
        // sqrt(d_h * d_o) = sqrt(16) = 4
        std::vector<double> q{2.0, 2.0};
        std::vector<std::vector<double>> keys{{1.0, 1.0}, {2.0, 0.0}, {0.0, 2.0}};
        auto w = attention_scores(q, keys, 2, 8);
        for (double x : w) CHECK(x == doctest::Approx(1.0 / 3.0));
    }
    SUBCASE("raw scores (1,0) softmax to (0.7311, 0.2689)") {
        // heads=1, d_o=1 -> scale 1
        auto w = attention_scores({1.0}, {{1.0}, {0.0}}, 1, 1);
        CHECK(w[0] == doctest::Approx(0.7311).epsilon(1e-3));
        CHECK(w[1] == doctest::Approx(0.2689).epsilon(1e-3));
    }
}

TEST_CASE("attention weights are nonnegative and sum to one") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> d;
    for (int trial = 0; trial < 30; ++trial) {
        std::uniform_int_distribution<std::size_t> nn(1, 9);
        std::vector<double> q(8);
        for (double& x : q) x = d(rng);
        std::vector<std::vector<double>> keys(nn(rng), std::vector<double>(8));
        for (auto& k : keys)
            for (double& x : k) x = d(rng);
        auto w = attention_scores(q, keys, 2, 4);
        double sum = 0.0;
        for (double x : w) {
            CHECK(x >= 0.0);
            sum += x;
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }
}

TEST_CASE("message-passing layer matches a scalar hand computation on a toy graph") {
    const std::size_t d = 2;
    TaskGraph tg = toy_task_graph({{1.0, 0.5}, {0.25, -0.5}, {-1.0, 2.0}});
    RankerConfig cfg = tiny_config(1, 2);
    cfg.seed = 3;
    RankerModel model = init_ranker(Task::DimensionRec, cfg, d);

    Tape tape;
    std::map<std::string, Var> vars;
    for (const auto& [name, t] : model.params) vars.emplace(name, tape.constant(t));
    const Tensor out = tape.value(forward_states(tape, model, tg, vars));

    // independent scalar recomputation for the metric node (local row 1):
    // incoming edges: monitor (MonitorHasMetric fwd), dimension (MetricHasDimension rev)
    auto matvec = [&](const Tensor& w, const std::vector<double>& x) {
        std::vector<double> y(w.cols(), 0.0);
        for (std::size_t i = 0; i < w.rows(); ++i)
            for (std::size_t j = 0; j < w.cols(); ++j) y[j] += x[i] * w.at(i, j);
        return y;
    };
    const std::vector<double> x_mon{1.0, 0.5}, x_met{0.25, -0.5}, x_dim{-1.0, 2.0};
    const auto q = matvec(model.params.at("l0.q.Metric"), x_met);
    const auto k_mon = matvec(model.params.at("l0.k.MonitorHasMetric"), x_mon);
    const auto v_mon = matvec(model.params.at("l0.v.MonitorHasMetric"), x_mon);
    const auto k_dim = matvec(model.params.at("l0.k.MetricHasDimension.rev"), x_dim);
    const auto v_dim = matvec(model.params.at("l0.v.MetricHasDimension.rev"), x_dim);
    const double scale = 1.0 / std::sqrt(1.0 * 2.0);  // heads=1, d_o=2
    const double s_mon = (q[0] * k_mon[0] + q[1] * k_mon[1]) * scale;
    const double s_dim = (q[0] * k_dim[0] + q[1] * k_dim[1]) * scale;
    const double mx = std::max(s_mon, s_dim);
    const double e_mon = std::exp(s_mon - mx), e_dim = std::exp(s_dim - mx);
    const double a_mon = e_mon / (e_mon + e_dim), a_dim = e_dim / (e_mon + e_dim);
    std::vector<double> message{a_mon * v_mon[0] + a_dim * v_dim[0],
                                a_mon * v_mon[1] + a_dim * v_dim[1]};
    std::vector<double> cat{x_met[0], x_met[1], message[0], message[1]};
    auto expect = matvec(model.params.at("l0.w"), cat);
    for (double& v : expect) v = std::max(0.0, v);

    CHECK(out.at(1, 0) == doctest::Approx(expect[0]).epsilon(1e-12));
    CHECK(out.at(1, 1) == doctest::Approx(expect[1]).epsilon(1e-12));
}

TEST_CASE("zero update weights give zero outputs") {
    TaskGraph tg = toy_task_graph({{1.0, 0.5}, {0.25, -0.5}, {-1.0, 2.0}});
    RankerConfig cfg = tiny_config(1, 2);
    RankerModel model = init_ranker(Task::DimensionRec, cfg, 2);
    for (double& v : model.params.at("l0.w").data) v = 0.0;
    Tape tape;
    std::map<std::string, Var> vars;
    for (const auto& [name, t] : model.params) vars.emplace(name, tape.constant(t));
    const Tensor out = tape.value(forward_states(tape, model, tg, vars));
    for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("isolated nodes aggregate a zero message") {
    TaskGraph tg = toy_task_graph({{1.0, 0.5}, {0.25, -0.5}, {-1.0, 2.0}});
    for (auto& rel : tg.edges) rel.clear();
    for (auto& rel : tg.adjacency)
        for (auto& nbrs : rel) nbrs.clear();
    RankerConfig cfg = tiny_config(1, 2);
    cfg.seed = 9;
    RankerModel model = init_ranker(Task::DimensionRec, cfg, 2);
    Tape tape;
    std::map<std::string, Var> vars;
    for (const auto& [name, t] : model.params) vars.emplace(name, tape.constant(t));
    const Tensor out = tape.value(forward_states(tape, model, tg, vars));

    const Tensor& w = model.params.at("l0.w");
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 2; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < 2; ++t) acc += tg.features.at(i, t) * w.at(t, j);
            // message half of the concat is zero, so rows 2..3 of w never act
            CHECK(out.at(i, j) == doctest::Approx(std::max(0.0, acc)).epsilon(1e-12));
        }
    }
}

TEST_CASE("attention layer gradients pass grad_check") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> nd;
    auto rnd = [&](std::size_t n) {
        std::vector<double> v(n);
        for (double& x : v) x = nd(rng);
        return v;
    };
    TaskGraph tg = toy_task_graph({rnd(4), rnd(4), rnd(4)});
    RankerConfig cfg = tiny_config(2, 4, 2);
    cfg.seed = 11;
    RankerModel model = init_ranker(Task::DimensionRec, cfg, 4);

    std::vector<std::string> names;
    std::vector<Tensor> params;
    for (const auto& [name, t] : model.params) {
        names.push_back(name);
        params.push_back(t);
    }
    Tensor target = Tensor::matrix(3, 4);
    for (double& v : target.data) v = nd(rng);

    auto build = [&](Tape& t, const std::vector<Var>& vars) {
        std::map<std::string, Var> byname;
        for (std::size_t i = 0; i < names.size(); ++i) byname.emplace(names[i], vars[i]);
        Var states = forward_states(t, model, tg, byname);
        return t.sqdist(states, t.constant(target));
    };
    tensor::GradCheckOptions opts;
    opts.max_coords_per_param = 6;
    CHECK(tensor::grad_check(build, params, opts) < 1e-4);
}

TEST_CASE("metapath context: isolated, clique and determinism") {
    SUBCASE("isolated node gets a zero context") {
        TaskGraph tg = toy_task_graph({{1.0, 1.0}, {2.0, 2.0}, {3.0, 3.0}});
        for (auto& rel : tg.edges) rel.clear();
        for (auto& rel : tg.adjacency)
            for (auto& nbrs : rel) nbrs.clear();
        auto ctx = metapath_context(tg, 0, 4, 8, 42);
        for (double v : ctx) CHECK(v == 0.0);
    }
    SUBCASE("identical features everywhere yield that feature") {
        TaskGraph tg = toy_task_graph({{0.3, -0.7}, {0.3, -0.7}, {0.3, -0.7}});
        auto ctx = metapath_context(tg, 1, 4, 8, 42);
        CHECK(ctx[0] == doctest::Approx(0.3));
        CHECK(ctx[1] == doctest::Approx(-0.7));
    }
    SUBCASE("fixed seed reproduces the context") {
        TaskGraph tg = toy_task_graph({{1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}});
        auto a = metapath_context(tg, 0, 4, 8, 7);
        auto b = metapath_context(tg, 0, 4, 8, 7);
        CHECK(a == b);
        auto c = metapath_context(tg, 0, 4, 8, 8);
        CHECK(a != c);  // different stream
    }
}

TEST_CASE("top1-max loss on the documented cases") {
    CHECK(loss_top1max_value(10.0, {0.0}) == doctest::Approx(0.50005).epsilon(1e-4));
    CHECK(loss_top1max_value(0.0, {0.0}) == doctest::Approx(1.0));

    std::mt19937_64 rng(13);
    std::normal_distribution<double> d(0.0, 2.0);
    for (int trial = 0; trial < 20; ++trial) {
        const double pos = d(rng);
        std::vector<double> negs(10);
        for (double& x : negs) x = d(rng);
        CHECK(loss_top1max_value(pos, negs) ==
              doctest::Approx(oracles::top1max(pos, negs)).epsilon(1e-9));
    }
}

TEST_CASE("top1-max gradients pass grad_check") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> d;
    Tensor pos = Tensor::scalar(d(rng));
    Tensor negs = Tensor::vec(6);
    for (double& x : negs.data) x = d(rng);
    auto build = [](Tape& t, const std::vector<Var>& p) { return loss_top1max(t, p[0], p[1]); };
    CHECK(tensor::grad_check(build, {pos, negs}) < 1e-4);
}

TEST_CASE("scoring is dot(projected query context, candidate state)") {
    TaskGraph tg = toy_task_graph({{1.0, 0.0}, {0.0, 1.0}, {0.5, 0.5}});
    RankerConfig cfg = tiny_config(1, 2);
    cfg.seed = 19;
    RankerModel model = init_ranker(Task::DimensionRec, cfg, 2);

    std::mt19937_64 rng(23);
    std::normal_distribution<double> d;
    Tensor states = Tensor::matrix(4, 3);
    for (double& v : states.data) v = d(rng);
    model.params["score.proj"] = Tensor::matrix(6, 3);
    for (double& v : model.params["score.proj"].data) v = d(rng);

    const auto scores = score_query(model, states, {0, 1}, {2, 3});
    // independent scalar recomputation
    const Tensor& proj = model.params["score.proj"];
    std::vector<double> qcat;
    for (std::size_t r : {0UL, 1UL})
        for (std::size_t j = 0; j < 3; ++j) qcat.push_back(states.at(r, j));
    std::vector<double> ctx(3, 0.0);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 3; ++j) ctx[j] += qcat[i] * proj.at(i, j);
    for (std::size_t c = 0; c < 2; ++c) {
        double want = 0.0;
        for (std::size_t j = 0; j < 3; ++j) want += ctx[j] * states.at(2 + c, j);
        CHECK(scores[c] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("ranked lists order by score with id tie-breaks") {
    EntityGraph g;
    const auto mon = g.add_node(NodeKind::Monitor, "mon", "watch");
    const auto met = g.add_node(NodeKind::Metric, "met", "ram");
    const auto d1 = g.add_node(NodeKind::Dimension, "d1", "vm");
    const auto d2 = g.add_node(NodeKind::Dimension, "d2", "dc");
    g.add_edge(mon, met, EdgeKind::MonitorHasMetric);
    g.add_edge(met, d1, EdgeKind::MetricHasDimension);
    g.add_edge(met, d2, EdgeKind::MetricHasDimension);

    embed::EmbedderOptions eopts;
    eopts.width = 8;
    embed::Embedder embedder(eopts);
    RankerConfig cfg = tiny_config(1, 4, 2);
    TaskGraph tg = build_task_graph(g, schema_for(Task::DimensionRec), embedder, {}, false, 4, 4, 1);
    RankerModel model = init_ranker(Task::DimensionRec, cfg, 8);

    auto list = score_candidates(model, tg, {mon, met}, {d1, d2});
    REQUIRE(list.candidates.size() == 2);
    CHECK(list.candidates[0].score >= list.candidates[1].score);

    auto empty = score_candidates(model, tg, {mon, met}, {});
    CHECK(empty.candidates.empty());

    auto single = score_candidates(model, tg, {mon, met}, {d2});
    REQUIRE(single.candidates.size() == 1);
    CHECK(single.candidates[0].node == d2);
}

TEST_CASE("argsort of scores is invariant under strictly increasing transforms") {
    // ranking depends only on score order
    std::vector<RankedCandidate> base{{5, 0.2}, {1, 1.7}, {9, -0.3}, {4, 0.9}};
    auto order_of = [](std::vector<RankedCandidate> v) {
        std::stable_sort(v.begin(), v.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.node < b.node;
        });
        std::vector<graph::NodeId> ids;
        for (const auto& c : v) ids.push_back(c.node);
        return ids;
    };
    auto before = order_of(base);
    for (auto& c : base) c.score = std::tanh(c.score) * 3.0 + 11.0;  // strictly increasing
    CHECK(order_of(base) == before);
}

TEST_CASE("query construction and candidate validity") {
    EntityGraph g;
    const auto svc = g.add_node(NodeKind::Service, "svc", "");
    const auto mon = g.add_node(NodeKind::Monitor, "mon", "");
    const auto met = g.add_node(NodeKind::Metric, "met", "");
    const auto d1 = g.add_node(NodeKind::Dimension, "d1", "");
    const auto d2 = g.add_node(NodeKind::Dimension, "d2", "");
    const auto e1 = g.add_node(NodeKind::Expression, "e1", "");
    g.add_edge(svc, mon, EdgeKind::ServiceHasMonitor);
    g.add_edge(mon, met, EdgeKind::MonitorHasMetric);
    g.add_edge(met, d1, EdgeKind::MetricHasDimension);
    const auto sup = g.add_edge(mon, d1, EdgeKind::MonitorAssociatedDimension);
    g.add_edge(mon, e1, EdgeKind::MonitorUsesExpression);

    const TaskSchema dim_schema = schema_for(Task::DimensionRec);
    auto q = query_for_edge(g, dim_schema, g.edge(sup));
    REQUIRE(q.has_value());
    CHECK((*q)[0] == mon);
    CHECK((*q)[1] == met);
    auto cands = valid_candidates(g, dim_schema, *q);
    CHECK(cands == std::vector<graph::NodeId>{d1});
    (void)d2;  // not a candidate: no MetricHasDimension link

    // dimension outside any metric candidate set has no query
    const auto d3 = g.add_node(NodeKind::Dimension, "d3", "");
    graph::EdgeRef fakeent;
    const auto sup2 = g.add_edge(mon, d3, EdgeKind::MonitorAssociatedDimension);
    CHECK_FALSE(query_for_edge(g, dim_schema, g.edge(sup2)).has_value());

    const TaskSchema exp_schema = schema_for(Task::ExpressionRec);
    const auto supe = g.edges_of_kind(EdgeKind::MonitorUsesExpression).front();
    auto qe = query_for_edge(g, exp_schema, g.edge(supe));
    REQUIRE(qe.has_value());
    CHECK(qe->size() == 3);
    CHECK(valid_candidates(g, exp_schema, *qe) == std::vector<graph::NodeId>{e1});
}

TEST_CASE("training on a planted preference graph beats the random baseline") {
    // metrics of family A prefer even dimensions, family B odd ones
    EntityGraph g;
    std::mt19937_64 rng(31);
    std::vector<graph::NodeId> dims;
    for (int i = 0; i < 12; ++i)
        dims.push_back(g.add_node(NodeKind::Dimension, "d" + std::to_string(i),
                                  (i % 2 ? "odd slice level " : "even shard group ") + std::to_string(i)));
    for (int m = 0; m < 60; ++m) {
        const bool family_a = m % 2 == 0;
        const auto met = g.add_node(NodeKind::Metric, "m" + std::to_string(m),
                                    family_a ? "throughput requests per shard"
                                             : "latency percentile per slice");
        const auto mon = g.add_node(NodeKind::Monitor, "mon" + std::to_string(m),
                                    family_a ? "watch throughput" : "watch latency");
        g.add_edge(mon, met, EdgeKind::MonitorHasMetric);
        // candidates: 3 preferred + 3 other
        std::vector<graph::NodeId> cands;
        for (int j = 0; j < 6; ++j) {
            const std::size_t di = static_cast<std::size_t>((m + 2 * j) % 12);
            const std::size_t adj = (dims[di] % 2 == (family_a ? 1u : 0u)) ? (di + 1) % 12 : di;
            (void)adj;
            cands.push_back(dims[di]);
        }
        std::sort(cands.begin(), cands.end());
        cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
        for (auto d : cands) {
            try {
                g.add_edge(met, d, EdgeKind::MetricHasDimension);
            } catch (const DuplicateError&) {
            }
        }
        // planted choice: preferred-parity candidates
        for (auto d : cands) {
            const bool even = g.node(d).key.size() >= 2 && ((g.node(d).key[1] - '0') % 2 == 0);
            (void)even;
            const int idx = std::stoi(g.node(d).key.substr(1));
            if ((idx % 2 == 0) == family_a) {
                try {
                    g.add_edge(mon, d, EdgeKind::MonitorAssociatedDimension);
                } catch (const DuplicateError&) {
                }
            }
        }
    }

    embed::EmbedderOptions eopts;
    eopts.width = 24;
    embed::Embedder embedder(eopts);
    RankerConfig cfg;
    cfg.layers = 2;
    cfg.hidden = {16};
    cfg.output_dim_rec = 16;
    cfg.heads = 2;
    cfg.max_epochs = 30;
    cfg.use_metapaths = true;
    cfg.walk_length = 3;
    cfg.walks_per_node = 4;
    cfg.seed = 5;
    RankTrainReport report;
    RankerModel model = train_ranker(g, Task::DimensionRec, cfg, embedder, &report);
    CHECK(!report.epochs.empty());
    CHECK(report.best_val_mrr > report.random_baseline_mrr);
    CHECK(model.params.count("score.proj") == 1);
}
