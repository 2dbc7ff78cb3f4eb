#include "monrec/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace monrec::pipeline {

namespace fs = std::filesystem;
using alert::AlertCondition;
using graph::EdgeKind;
using graph::NodeId;
using graph::NodeKind;

void save_stores(const datagen::Dataset& dataset, const StorePaths& paths) {
    fs::create_directories(paths.dir);
    graph::save_graph(dataset.graph, paths.graph());
    ts::save_timeseries(dataset.series, paths.series());
    select::save_select_dataset(dataset.select_samples, paths.samples());
    datagen::save_ground_truth(dataset.truth, paths.truth());
}

Stores load_stores(const StorePaths& paths) {
    Stores s;
    s.graph = graph::load_graph(paths.graph());
    s.series = ts::load_timeseries(paths.series());
    s.samples = select::load_select_dataset(paths.samples());
    s.truth = datagen::load_ground_truth(paths.truth());
    return s;
}

namespace {

std::vector<std::vector<double>> build_features(embed::Embedder& embedder,
                                                const std::vector<select::MetricSample>& samples) {
    std::vector<std::vector<double>> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(select::build_feature(embedder, s));
    return out;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path);
    os << text;
    if (text.empty() || text.back() != '\n') os << '\n';
}

std::string read_text(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot read " + path);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

nlohmann::ordered_json select_report_json(const select::TrainReport& r) {
    nlohmann::ordered_json j;
    j["best_val_metric"] = r.best_val_metric;
    j["early_stopped"] = r.early_stopped;
    nlohmann::ordered_json epochs = nlohmann::ordered_json::array();
    for (const auto& e : r.epochs)
        epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss},
                          {"val_metric", e.val_metric}, {"lr", e.lr}});
    j["epochs"] = std::move(epochs);
    return j;
}

nlohmann::ordered_json rank_report_json(const ranker::RankTrainReport& r) {
    nlohmann::ordered_json j;
    j["best_val_mrr"] = r.best_val_mrr;
    j["test_mrr"] = r.test_mrr;
    j["random_baseline_mrr"] = r.random_baseline_mrr;
    j["early_stopped"] = r.early_stopped;
    nlohmann::ordered_json epochs = nlohmann::ordered_json::array();
    for (const auto& e : r.epochs)
        epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss},
                          {"val_mrr", e.val_mrr}, {"lr", e.lr}});
    j["epochs"] = std::move(epochs);
    return j;
}

}  // namespace

Checkpoints train_all(const config::AppConfig& cfg, const Stores& stores,
                      const std::string& out_dir, TrainSummary* summary) {
    if (stores.samples.empty()) throw Error("train_all: dataset has no selection samples");
    if (cfg.ranker.layers < 1 || cfg.select.hidden == 0)
        throw Error("train_all: invalid model configuration");
    fs::create_directories(out_dir);

    embed::Embedder embedder(config::embedder_options(cfg));
    const auto features = build_features(embedder, stores.samples);

    Checkpoints ckpt;
    TrainSummary local;
    TrainSummary& sum = summary ? *summary : local;

    auto train_variant = [&](select::Objective objective, select::TrainReport& report) {
        select::SelectConfig sc = cfg.select;
        sc.objective = objective;
        return select::train_select(stores.samples, features, sc, &report);
    };
    ckpt.select_bce = train_variant(select::Objective::BceOnly, sum.select_bce);
    ckpt.select_knn = train_variant(select::Objective::ContrastiveOnly, sum.select_knn);
    ckpt.select_joint = train_variant(select::Objective::Joint, sum.select_joint);

    ckpt.dim_ranker =
        ranker::train_ranker(stores.graph, ranker::Task::DimensionRec, cfg.ranker, embedder,
                             &sum.dim_report);
    ckpt.exp_ranker =
        ranker::train_ranker(stores.graph, ranker::Task::ExpressionRec, cfg.ranker, embedder,
                             &sum.exp_report);

    optim::save_checkpoint(ckpt.select_bce.params, out_dir + "/select_bce.ckpt.json");
    optim::save_checkpoint(ckpt.select_knn.params, out_dir + "/select_knn.ckpt.json");
    optim::save_checkpoint(ckpt.select_joint.params, out_dir + "/select_joint.ckpt.json");
    optim::save_checkpoint(ckpt.dim_ranker.params, out_dir + "/ranker_dim.ckpt.json");
    optim::save_checkpoint(ckpt.exp_ranker.params, out_dir + "/ranker_exp.ckpt.json");

    nlohmann::ordered_json report;
    report["schema"] = "monrec.trainreport.v1";
    report["select_bce"] = select_report_json(sum.select_bce);
    report["select_knn"] = select_report_json(sum.select_knn);
    report["select_joint"] = select_report_json(sum.select_joint);
    report["dim_ranker"] = rank_report_json(sum.dim_report);
    report["exp_ranker"] = rank_report_json(sum.exp_report);
    write_text(out_dir + "/train_report.json", report.dump(2));
    return ckpt;
}

Checkpoints load_checkpoints(const config::AppConfig& cfg, const Stores& stores,
                             const std::string& dir) {
    (void)stores;
    Checkpoints ckpt;
    auto load_select = [&](const std::string& name, select::Objective objective) {
        select::SelectModel m;
        m.config = cfg.select;
        m.config.objective = objective;
        m.params = optim::load_checkpoint(dir + "/" + name);
        return m;
    };
    ckpt.select_bce = load_select("select_bce.ckpt.json", select::Objective::BceOnly);
    ckpt.select_knn = load_select("select_knn.ckpt.json", select::Objective::ContrastiveOnly);
    ckpt.select_joint = load_select("select_joint.ckpt.json", select::Objective::Joint);
    ckpt.dim_ranker.task = ranker::Task::DimensionRec;
    ckpt.dim_ranker.config = cfg.ranker;
    ckpt.dim_ranker.params = optim::load_checkpoint(dir + "/ranker_dim.ckpt.json");
    ckpt.exp_ranker.task = ranker::Task::ExpressionRec;
    ckpt.exp_ranker.config = cfg.ranker;
    ckpt.exp_ranker.params = optim::load_checkpoint(dir + "/ranker_exp.ckpt.json");
    return ckpt;
}

// ---- bundle serialization ----

namespace {

nlohmann::ordered_json plan_to_json(const MetricPlan& p) {
    nlohmann::ordered_json j;
    j["metric"] = p.metric_key;
    nlohmann::ordered_json ds = nlohmann::ordered_json::array();
    for (const auto& [k, s] : p.dimension_scores) ds.push_back({{"dimension", k}, {"score", s}});
    j["dimension_scores"] = std::move(ds);
    j["dimensions"] = p.dimensions;
    nlohmann::ordered_json es = nlohmann::ordered_json::array();
    for (const auto& [k, s] : p.expression_scores) es.push_back({{"expression", k}, {"score", s}});
    j["expression_scores"] = std::move(es);
    j["expression"] = p.expression_key;
    nlohmann::ordered_json sim = nlohmann::ordered_json::array();
    for (const auto& s : p.similar) {
        nlohmann::ordered_json e{{"metric", s.key}, {"score", s.score}, {"base_score", s.base_score}};
        if (s.rescoring) e["rescoring"] = *s.rescoring;
        sim.push_back(std::move(e));
    }
    j["similar_metrics"] = std::move(sim);
    nlohmann::ordered_json conds = nlohmann::ordered_json::array();
    for (const auto& c : p.conditions) conds.push_back(alert::to_json(c));
    j["conditions"] = std::move(conds);
    j["rationale"] = p.rationale;
    return j;
}

MetricPlan plan_from_json(const nlohmann::json& j) {
    MetricPlan p;
    p.metric_key = j.at("metric").get<std::string>();
    for (const auto& e : j.at("dimension_scores"))
        p.dimension_scores.emplace_back(e.at("dimension").get<std::string>(), e.at("score").get<double>());
    p.dimensions = j.at("dimensions").get<std::vector<std::string>>();
    for (const auto& e : j.at("expression_scores"))
        p.expression_scores.emplace_back(e.at("expression").get<std::string>(), e.at("score").get<double>());
    p.expression_key = j.at("expression").get<std::string>();
    for (const auto& e : j.at("similar_metrics")) {
        ts::SimilarMetric s;
        s.key = e.at("metric").get<std::string>();
        s.score = e.at("score").get<double>();
        s.base_score = e.at("base_score").get<double>();
        if (e.contains("rescoring")) s.rescoring = e.at("rescoring").get<double>();
        p.similar.push_back(std::move(s));
    }
    for (const auto& c : j.at("conditions")) p.conditions.push_back(alert::condition_from_json(c));
    p.rationale = j.at("rationale").get<std::string>();
    return p;
}

nlohmann::ordered_json bundle_to_json(const RecommendationBundle& b) {
    nlohmann::ordered_json j;
    j["schema"] = "monrec.bundle.v1";
    j["id"] = b.id;
    j["account"] = b.account;
    j["status"] = b.status;
    j["variant"] = select::to_string(b.variant);
    nlohmann::ordered_json decisions = nlohmann::ordered_json::array();
    for (const auto& d : b.decisions)
        decisions.push_back({{"metric", d.metric_key},
                             {"p_global", d.p_global},
                             {"knn_vote", d.knn_vote},
                             {"decision", d.decision},
                             {"variant", select::to_string(d.variant)}});
    j["decisions"] = std::move(decisions);
    nlohmann::ordered_json plans = nlohmann::ordered_json::array();
    for (const auto& p : b.plans) plans.push_back(plan_to_json(p));
    j["plans"] = std::move(plans);
    j["monitor_config"] = b.monitor_config;
    j["config_hash"] = b.config_hash;
    j["dataset_hash"] = b.dataset_hash;
    j["stage_artifacts"] = b.stage_artifacts;
    return j;
}

}  // namespace

std::string bundle_to_string(const RecommendationBundle& bundle) {
    return bundle_to_json(bundle).dump(2);
}

RecommendationBundle bundle_from_string(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("bundle: ") + e.what(), 1);
    }
    if (j.value("schema", "") != "monrec.bundle.v1") throw SchemaError("bundle: unknown schema");
    RecommendationBundle b;
    b.id = j.at("id").get<std::string>();
    b.account = j.at("account").get<std::string>();
    b.status = j.at("status").get<std::string>();
    b.variant = select::variant_from_string(j.at("variant").get<std::string>());
    for (const auto& d : j.at("decisions")) {
        select::SelectDecision sd;
        sd.metric_key = d.at("metric").get<std::string>();
        sd.p_global = d.at("p_global").get<double>();
        sd.knn_vote = d.at("knn_vote").get<double>();
        sd.decision = d.at("decision").get<bool>();
        sd.variant = select::variant_from_string(d.at("variant").get<std::string>());
        b.decisions.push_back(std::move(sd));
    }
    for (const auto& p : j.at("plans")) b.plans.push_back(plan_from_json(p));
    b.monitor_config = j.at("monitor_config").get<std::string>();
    b.config_hash = j.at("config_hash").get<std::string>();
    b.dataset_hash = j.at("dataset_hash").get<std::string>();
    b.stage_artifacts = j.at("stage_artifacts").get<std::vector<std::string>>();
    return b;
}

// ---- engine ----

Engine::Engine(config::AppConfig cfg, Stores stores, Checkpoints checkpoints)
    : cfg_(std::move(cfg)), stores_(std::move(stores)), ckpt_(std::move(checkpoints)) {
    embedder_ = std::make_unique<embed::Embedder>(config::embedder_options(cfg_));
    if (auto llm_cfg = config::llm_client_config(cfg_))
        llm_ = std::make_unique<alert::HttpLlmClient>(*llm_cfg);

    // inference graphs see every edge of the supervised kinds
    dim_graph_ = ranker::build_task_graph(
        stores_.graph, ranker::schema_for(ranker::Task::DimensionRec), *embedder_,
        stores_.graph.edges_of_kind(EdgeKind::MonitorAssociatedDimension), cfg_.ranker.use_metapaths,
        cfg_.ranker.walk_length, cfg_.ranker.walks_per_node, cfg_.seed);
    exp_graph_ = ranker::build_task_graph(
        stores_.graph, ranker::schema_for(ranker::Task::ExpressionRec), *embedder_,
        stores_.graph.edges_of_kind(EdgeKind::MonitorUsesExpression), cfg_.ranker.use_metapaths,
        cfg_.ranker.walk_length, cfg_.ranker.walks_per_node, cfg_.seed);

    // similarity corpus with shapelets
    std::map<std::string, const ts::MetricTimeseries*> by_key;
    for (const auto& s : stores_.series) by_key[s.metric_key] = &s;
    for (NodeId m : stores_.graph.nodes_of_kind(NodeKind::Metric)) {
        ts::MetricRecord r;
        r.key = stores_.graph.node(m).key;
        r.ontology = stores_.graph.node(m).ontology;
        r.text_embedding = embedder_->embed_text(r.ontology);
        auto sit = by_key.find(r.key);
        if (sit != by_key.end() && sit->second->values.size() >= 16) {
            ts::ShapeletParams sp;
            sp.count = cfg_.similarity.shapelet_count;
            sp.length = cfg_.similarity.shapelet_length;
            r.shapelets = ts::extract_shapelets(sit->second->values, sp);
            r.has_series = true;
        }
        corpus_.records.push_back(std::move(r));
    }
    corpus_.shortlist = cfg_.similarity.shortlist;

    features_ = build_features(*embedder_, stores_.samples);
    for (std::size_t i = 0; i < stores_.samples.size(); ++i)
        sample_by_key_.emplace(stores_.samples[i].metric_key, i);

    // historical latent index from the joint model over every labeled sample
    std::vector<std::size_t> all_rows(stores_.samples.size());
    std::iota(all_rows.begin(), all_rows.end(), 0);
    knn_index_ = select::build_knn_index(ckpt_.select_joint, stores_.samples, features_, all_rows);

    std::ostringstream gs;
    graph::serialize(stores_.graph, gs);
    dataset_hash_ = to_hex(fnv1a64(gs.str()));
}

namespace {

struct ScoredStates {
    tensor::Tensor states;
};

tensor::Tensor forward_once(const ranker::RankerModel& model, const ranker::TaskGraph& tg) {
    tensor::Tape tape;
    tape.check_finite = false;
    std::map<std::string, tensor::Var> vars;
    for (const auto& [name, t] : model.params) vars.emplace(name, tape.constant(t));
    return tape.value(ranker::forward_states(tape, model, tg, vars));
}

std::vector<std::pair<std::string, double>> text_rank(embed::Embedder& embedder,
                                                      const graph::EntityGraph& g,
                                                      const std::string& anchor_text,
                                                      const std::vector<NodeId>& candidates) {
    const embed::Vec a = embedder.embed_text(anchor_text);
    std::vector<std::pair<std::string, double>> out;
    for (NodeId c : candidates)
        out.emplace_back(g.node(c).key, embed::cosine(a, embedder.embed_text(g.node(c).ontology)));
    std::stable_sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
        if (x.second != y.second) return x.second > y.second;
        return x.first < y.first;
    });
    return out;
}

double percentile_of(std::vector<double> values, double p) {
    std::sort(values.begin(), values.end());
    const double idx = p / 100.0 * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(idx);
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (values[hi] - values[lo]) * (idx - static_cast<double>(lo));
}

}  // namespace

RecommendationBundle Engine::recommend(const std::string& account, const RecommendOptions& opts) {
    RecommendationBundle bundle;
    bundle.account = account;
    bundle.variant = opts.variant;
    bundle.config_hash = config::config_hash(cfg_);
    bundle.dataset_hash = dataset_hash_;

    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < stores_.samples.size(); ++i)
        if (stores_.samples[i].account == account) rows.push_back(i);
    if (rows.empty()) {
        bundle.status = "nothing-to-monitor";
        bundle.id = to_hex(fnv1a64(bundle_to_string(bundle)));
        return bundle;
    }

    // stage 1: metric selection under the requested variant
    const select::SelectModel& model = opts.variant == select::Variant::BCE ? ckpt_.select_bce
                                       : opts.variant == select::Variant::KNN ? ckpt_.select_knn
                                                                              : ckpt_.select_joint;
    tensor::Tensor x = tensor::Tensor::matrix(rows.size(), 4 * cfg_.embed_width);
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(features_[rows[i]].begin(), features_[rows[i]].end(),
                  x.data.begin() + static_cast<std::ptrdiff_t>(i * 4 * cfg_.embed_width));
    tensor::Tensor latent;
    std::vector<double> probs;
    model.forward(x, &latent, &probs);

    std::vector<std::string> selected;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& sample = stores_.samples[rows[i]];
        select::SelectDecision d;
        d.metric_key = sample.metric_key;
        d.p_global = probs[i];
        d.variant = opts.variant;
        d.knn_vote = 0.5;
        if (opts.variant != select::Variant::BCE) {
            std::vector<double> q(latent.data.begin() + static_cast<std::ptrdiff_t>(i * latent.cols()),
                                  latent.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * latent.cols()));
            try {
                d.knn_vote = knn_index_.vote(account, q, cfg_.select.knn_k, sample.metric_key);
            } catch (const Error&) {
                // no history: the global decision stands alone
            }
        }
        d.decision = select::decide(opts.variant, d.p_global, d.knn_vote);
        if (d.decision) selected.push_back(d.metric_key);
        bundle.decisions.push_back(std::move(d));
    }

    if (selected.empty()) {
        bundle.status = "nothing-to-monitor";
        bundle.id = to_hex(fnv1a64(bundle_to_string(bundle)));
        return bundle;
    }

    // rankers run one forward over the frozen graphs, reused per query
    tensor::Tensor dim_states, exp_states;
    if (opts.use_dim_ranker) dim_states = forward_once(ckpt_.dim_ranker, dim_graph_);
    if (opts.use_exp_ranker) exp_states = forward_once(ckpt_.exp_ranker, exp_graph_);

    ts::RescoreFn rescore = nullptr;
    if (llm_) {
        rescore = [this](const std::string& a, const std::string& b) {
            const std::string prompt =
                "Rate from 0 to 1 how closely these two metric descriptions match (no match to "
                "exact match). Respond with JSON {\"score\": x}.\nFirst: " + a + "\nSecond: " + b + "\n";
            const std::string text = llm_->complete(prompt, "monrec.similarity.v1");
            return nlohmann::json::parse(text).at("score").get<double>();
        };
    }

    std::map<std::string, const ts::MetricTimeseries*> series_by_key;
    for (const auto& s : stores_.series) series_by_key[s.metric_key] = &s;

    std::vector<alert::MonitorTuple> tuples;
    for (const std::string& metric_key : selected) {
        MetricPlan plan;
        plan.metric_key = metric_key;
        const NodeId metric = *stores_.graph.find(NodeKind::Metric, metric_key);

        // query context: an existing monitor of this metric, else of the account
        std::optional<NodeId> monitor;
        const auto metric_monitors = stores_.graph.reverse_neighbors(metric, EdgeKind::MonitorHasMetric);
        if (!metric_monitors.empty()) {
            monitor = metric_monitors.front();
        } else if (auto svc = stores_.graph.find(NodeKind::Service, account)) {
            const auto svc_monitors = stores_.graph.neighbors(*svc, EdgeKind::ServiceHasMonitor);
            if (!svc_monitors.empty()) monitor = svc_monitors.front();
        }

        // stage 2: dimension ranking over the metric's candidate set only
        const auto candidates = stores_.graph.candidate_dimensions(metric);
        if (opts.use_dim_ranker && monitor && !candidates.empty()) {
            std::vector<std::size_t> qrows{dim_graph_.node_to_local.at(*monitor),
                                           dim_graph_.node_to_local.at(metric)};
            std::vector<std::size_t> crows;
            for (NodeId c : candidates) crows.push_back(dim_graph_.node_to_local.at(c));
            const auto scores = ranker::score_query(ckpt_.dim_ranker, dim_states, qrows, crows);
            std::vector<std::size_t> order(candidates.size());
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                if (scores[a] != scores[b]) return scores[a] > scores[b];
                return candidates[a] < candidates[b];
            });
            for (std::size_t i : order)
                plan.dimension_scores.emplace_back(stores_.graph.node(candidates[i]).key, scores[i]);
        } else {
            plan.dimension_scores =
                text_rank(*embedder_, stores_.graph, stores_.graph.node(metric).ontology, candidates);
        }
        for (std::size_t i = 0; i < std::min(opts.top_dims, plan.dimension_scores.size()); ++i)
            plan.dimensions.push_back(plan.dimension_scores[i].first);

        // stage 3: expression ranking
        const auto expr_candidates = stores_.graph.nodes_of_kind(NodeKind::Expression);
        std::optional<NodeId> top_dim;
        if (!plan.dimensions.empty())
            top_dim = stores_.graph.find(NodeKind::Dimension, plan.dimensions.front());
        if (opts.use_exp_ranker && monitor && top_dim) {
            std::vector<std::size_t> qrows{exp_graph_.node_to_local.at(*monitor),
                                           exp_graph_.node_to_local.at(metric),
                                           exp_graph_.node_to_local.at(*top_dim)};
            std::vector<std::size_t> crows;
            for (NodeId c : expr_candidates) crows.push_back(exp_graph_.node_to_local.at(c));
            const auto scores = ranker::score_query(ckpt_.exp_ranker, exp_states, qrows, crows);
            std::vector<std::size_t> order(expr_candidates.size());
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                if (scores[a] != scores[b]) return scores[a] > scores[b];
                return expr_candidates[a] < expr_candidates[b];
            });
            for (std::size_t i = 0; i < std::min<std::size_t>(5, order.size()); ++i)
                plan.expression_scores.emplace_back(stores_.graph.node(expr_candidates[order[i]]).key,
                                                    scores[order[i]]);
        } else {
            auto ranked = text_rank(*embedder_, stores_.graph, stores_.graph.node(metric).ontology,
                                    expr_candidates);
            ranked.resize(std::min<std::size_t>(5, ranked.size()));
            plan.expression_scores = std::move(ranked);
        }
        if (!plan.expression_scores.empty()) plan.expression_key = plan.expression_scores.front().first;

        // stage 4: similar metrics with their historical alert conditions
        const auto corpus_it = std::find_if(corpus_.records.begin(), corpus_.records.end(),
                                            [&](const ts::MetricRecord& r) { return r.key == metric_key; });
        if (corpus_it != corpus_.records.end()) {
            auto top = corpus_.top_k_similar(*corpus_it, cfg_.similarity.top_k + 1,
                                             cfg_.similarity.weight, rescore);
            for (auto& s : top) {
                if (s.key == metric_key) continue;  // the query itself
                if (plan.similar.size() >= cfg_.similarity.top_k) break;
                plan.similar.push_back(std::move(s));
            }
        }

        // stage 5: alert synthesis
        alert::SynthesisContext ctx;
        ctx.account_text = account;
        if (auto svc = stores_.graph.find(NodeKind::Service, account))
            ctx.account_text = stores_.graph.node(*svc).ontology;
        ctx.metric_key = metric_key;
        ctx.metric_ontology = stores_.graph.node(metric).ontology;
        ctx.dimensions = plan.dimensions;
        ctx.expression_key = plan.expression_key;
        if (auto expr = stores_.graph.find(NodeKind::Expression, plan.expression_key))
            ctx.expression_op = datagen::expression_operator(stores_.graph.node(*expr).ontology);
        ctx.max_similar = cfg_.alert.max_similar;
        ctx.token_budget = cfg_.alert.token_budget;
        auto sit = series_by_key.find(metric_key);
        if (sit != series_by_key.end() && !sit->second->values.empty()) {
            ctx.series = sit->second->values;
            ctx.sampling_kind = sit->second->sampling_kind;
            ctx.p1 = percentile_of(ctx.series, 1.0);
            ctx.p99 = percentile_of(ctx.series, 99.0);
        }
        for (const auto& s : plan.similar) {
            alert::SimilarMetricAlerts sim;
            sim.key = s.key;
            if (auto node = stores_.graph.find(NodeKind::Metric, s.key))
                sim.ontology = stores_.graph.node(*node).ontology;
            sim.similarity = s.score;
            auto cit = stores_.truth.metric_conditions.find(s.key);
            if (cit != stores_.truth.metric_conditions.end()) sim.conditions = cit->second;
            if (!sim.conditions.empty() && ctx.unit.empty()) ctx.unit = sim.conditions.front().unit;
            ctx.similar.push_back(std::move(sim));
        }
        ctx.best_practices = {"alert on sustained violations rather than single samples",
                              "prefer thresholds used by similar healthy services"};

        if (llm_) {
            auto result = alert::synthesize_llm(ctx, *llm_, cfg_.alert.retry_budget);
            plan.conditions = std::move(result.conditions);
        } else {
            plan.conditions = alert::synthesize_fallback(ctx);
        }

        // rationale cites the similar metrics backing the thresholds
        std::ostringstream why;
        why << "monitor " << metric_key << " with " << alert::to_string(ctx.expression_op)
            << " over [";
        for (std::size_t i = 0; i < plan.dimensions.size(); ++i)
            why << (i ? ", " : "") << plan.dimensions[i];
        why << "]";
        if (!plan.similar.empty()) {
            why << "; informed by similar metrics ";
            for (std::size_t i = 0; i < plan.similar.size(); ++i) {
                why << (i ? ", " : "") << plan.similar[i].key << " (sim "
                    << static_cast<int>(plan.similar[i].score * 100 + 0.5) / 100.0 << ")";
            }
        }
        plan.rationale = why.str();

        alert::MonitorTuple tuple;
        tuple.metric_key = metric_key;
        tuple.dimension_keys = plan.dimensions;
        tuple.expression_key = plan.expression_key;
        tuple.conditions = plan.conditions;
        tuples.push_back(tuple);
        bundle.plans.push_back(std::move(plan));
    }

    // stage 6: final monitor configuration document
    alert::MonitorConfig cfg_doc =
        alert::format_monitor_config(stores_.graph, "rec-" + account, account, std::move(tuples));
    bundle.monitor_config = alert::monitor_config_to_string(cfg_doc);
    bundle.status = "ok";
    bundle.id = to_hex(fnv1a64(bundle_to_string(bundle)));

    if (!opts.out_dir.empty()) {
        fs::create_directories(opts.out_dir + "/bundles");
        fs::create_directories(opts.out_dir + "/stages/" + bundle.id);
        auto persist = [&](const std::string& name, const std::string& text) {
            const std::string path = opts.out_dir + "/stages/" + bundle.id + "/" + name;
            write_text(path, text);
            bundle.stage_artifacts.push_back(path);
        };
        nlohmann::ordered_json decisions = nlohmann::ordered_json::array();
        for (const auto& d : bundle.decisions)
            decisions.push_back({{"metric", d.metric_key}, {"p_global", d.p_global},
                                 {"knn_vote", d.knn_vote}, {"decision", d.decision}});
        persist("stage1_selection.json", decisions.dump(2));
        nlohmann::ordered_json stage2 = nlohmann::ordered_json::array();
        nlohmann::ordered_json stage3 = nlohmann::ordered_json::array();
        nlohmann::ordered_json stage4 = nlohmann::ordered_json::array();
        nlohmann::ordered_json stage5 = nlohmann::ordered_json::array();
        for (const auto& p : bundle.plans) {
            stage2.push_back({{"metric", p.metric_key}, {"dimensions", p.dimensions}});
            stage3.push_back({{"metric", p.metric_key}, {"expression", p.expression_key}});
            nlohmann::ordered_json sims = nlohmann::ordered_json::array();
            for (const auto& s : p.similar) sims.push_back({{"metric", s.key}, {"score", s.score}});
            stage4.push_back({{"metric", p.metric_key}, {"similar", sims}});
            nlohmann::ordered_json conds = nlohmann::ordered_json::array();
            for (const auto& c : p.conditions) conds.push_back(alert::to_json(c));
            stage5.push_back({{"metric", p.metric_key}, {"conditions", conds}});
        }
        persist("stage2_dimensions.json", stage2.dump(2));
        persist("stage3_expressions.json", stage3.dump(2));
        persist("stage4_similar.json", stage4.dump(2));
        persist("stage5_alerts.json", stage5.dump(2));
        persist("stage6_monitor_config.json", bundle.monitor_config);
        // artifacts are part of the bundle, so refresh the content hash
        bundle.id = to_hex(fnv1a64(bundle_to_string(bundle)));
        write_text(opts.out_dir + "/bundles/" + bundle.id + ".json", bundle_to_string(bundle));
    }
    {
        std::lock_guard lock(feedback_mu_);
        issued_bundles_.insert(bundle.id);
    }
    return bundle;
}

std::string Engine::handle_request(const std::string& line) {
    nlohmann::ordered_json res;
    try {
        const nlohmann::json req = nlohmann::json::parse(line);
        const std::string action = req.value("action", "");
        if (action == "recommend") {
            RecommendOptions opts;
            if (req.contains("variant"))
                opts.variant = select::variant_from_string(req.at("variant").get<std::string>());
            if (req.contains("top_dims")) opts.top_dims = req.at("top_dims").get<std::size_t>();
            RecommendationBundle bundle = recommend(req.at("account").get<std::string>(), opts);
            res["ok"] = true;
            res["bundle"] = nlohmann::ordered_json::parse(bundle_to_string(bundle));
        } else if (action == "ingest-feedback") {
            FeedbackRecord record = feedback_from_json(req.at("record"));
            record.validate();
            {
                std::lock_guard lock(feedback_mu_);
                if (!issued_bundles_.count(record.bundle_id))
                    throw Error("unknown bundle id '" + record.bundle_id + "'");
                if (feedback_log_.empty()) throw Error("no feedback log configured");
                append_feedback(feedback_log_, record);
            }
            res["ok"] = true;
            res["ack"] = record.bundle_id;
        } else {
            throw Error("unknown action '" + action + "'");
        }
    } catch (const std::exception& e) {
        res.clear();
        res["ok"] = false;
        res["error"] = e.what();
    }
    return res.dump();
}

// ---- evaluation grid ----

EvalReport evaluate(const config::AppConfig& cfg, const Stores& stores,
                    const Checkpoints& checkpoints, std::size_t sample_monitors) {
    if (stores.truth.monitor_dimensions.empty())
        throw Error("evaluate: ground truth is missing monitor annotations");
    embed::Embedder embedder(config::embedder_options(cfg));
    const auto features = build_features(embedder, stores.samples);

    // selection metrics on the time-based test slice, per variant
    std::vector<std::size_t> order(stores.samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return stores.samples[a].timestamp < stores.samples[b].timestamp;
    });
    const std::size_t n = order.size();
    const std::size_t n_train = static_cast<std::size_t>(
        std::llround(cfg.select.split_ratios[0] * static_cast<double>(n)));
    const std::size_t n_val = static_cast<std::size_t>(
        std::llround(cfg.select.split_ratios[1] * static_cast<double>(n)));
    std::vector<std::size_t> train_rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> test_rows(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val),
                                       order.end());
    if (test_rows.empty()) throw Error("evaluate: empty test slice");

    auto selection_report = [&](select::Variant variant) {
        const select::SelectModel& model = variant == select::Variant::BCE ? checkpoints.select_bce
                                           : variant == select::Variant::KNN ? checkpoints.select_knn
                                                                             : checkpoints.select_joint;
        select::KnnIndex index = select::build_knn_index(model, stores.samples, features, train_rows);
        std::vector<int> preds, labels;
        tensor::Tensor x = tensor::Tensor::matrix(test_rows.size(), 4 * cfg.embed_width);
        for (std::size_t i = 0; i < test_rows.size(); ++i)
            std::copy(features[test_rows[i]].begin(), features[test_rows[i]].end(),
                      x.data.begin() + static_cast<std::ptrdiff_t>(i * 4 * cfg.embed_width));
        tensor::Tensor latent;
        std::vector<double> probs;
        model.forward(x, &latent, &probs);
        for (std::size_t i = 0; i < test_rows.size(); ++i) {
            const auto& sample = stores.samples[test_rows[i]];
            double vote = 0.5;
            if (variant != select::Variant::BCE) {
                std::vector<double> q(
                    latent.data.begin() + static_cast<std::ptrdiff_t>(i * latent.cols()),
                    latent.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * latent.cols()));
                try {
                    vote = index.vote(sample.account, q, cfg.select.knn_k);
                } catch (const Error&) {
                }
            }
            preds.push_back(select::decide(variant, probs[i], vote) ? 1 : 0);
            labels.push_back(sample.label);
        }
        return eval::classification_report(preds, labels);
    };
    const auto sel_bce = selection_report(select::Variant::BCE);
    const auto sel_knn = selection_report(select::Variant::KNN);
    const auto sel_ens = selection_report(select::Variant::Ens);

    // monitor holdout for the recommendation modules
    std::vector<NodeId> monitors = stores.graph.nodes_of_kind(NodeKind::Monitor);
    Rng rng(mix_seed(cfg.seed, 0xe7a1));
    std::shuffle(monitors.begin(), monitors.end(), rng);
    if (monitors.size() > sample_monitors) monitors.resize(sample_monitors);
    std::set<NodeId> held(monitors.begin(), monitors.end());

    auto kept_edges = [&](EdgeKind kind) {
        std::vector<graph::EdgeId> out;
        for (graph::EdgeId id : stores.graph.edges_of_kind(kind))
            if (!held.count(stores.graph.edge(id).src)) out.push_back(id);
        return out;
    };
    ranker::TaskGraph dim_tg = ranker::build_task_graph(
        stores.graph, ranker::schema_for(ranker::Task::DimensionRec), embedder,
        kept_edges(EdgeKind::MonitorAssociatedDimension), cfg.ranker.use_metapaths,
        cfg.ranker.walk_length, cfg.ranker.walks_per_node, cfg.seed);
    ranker::TaskGraph exp_tg = ranker::build_task_graph(
        stores.graph, ranker::schema_for(ranker::Task::ExpressionRec), embedder,
        kept_edges(EdgeKind::MonitorUsesExpression), cfg.ranker.use_metapaths,
        cfg.ranker.walk_length, cfg.ranker.walks_per_node, cfg.seed);
    const tensor::Tensor dim_states = forward_once(checkpoints.dim_ranker, dim_tg);
    const tensor::Tensor exp_states = forward_once(checkpoints.exp_ranker, exp_tg);

    struct ModuleMetrics {
        double dim_jaccard = 0.0;
        double exp_mrr = 0.0;
        double alert_aggregate = 0.0;
    };
    auto run_modules = [&](bool use_dim, bool use_exp) {
        ModuleMetrics mm;
        std::size_t counted = 0;
        std::vector<std::vector<std::uint32_t>> exp_ranked;
        std::vector<std::set<std::uint32_t>> exp_relevant;
        std::map<std::string, const ts::MetricTimeseries*> series_by_key;
        for (const auto& s : stores.series) series_by_key[s.metric_key] = &s;

        for (NodeId mon : monitors) {
            const std::string mon_key = stores.graph.node(mon).key;
            auto truth_dims = stores.truth.monitor_dimensions.find(mon_key);
            auto truth_expr = stores.truth.monitor_expression.find(mon_key);
            if (truth_dims == stores.truth.monitor_dimensions.end() ||
                truth_expr == stores.truth.monitor_expression.end())
                continue;
            const auto mets = stores.graph.neighbors(mon, EdgeKind::MonitorHasMetric);
            if (mets.empty()) continue;
            const NodeId metric = mets.front();
            const auto candidates = stores.graph.candidate_dimensions(metric);
            if (candidates.empty()) continue;

            // dimensions
            std::vector<std::pair<std::string, double>> ranked_dims;
            if (use_dim) {
                std::vector<std::size_t> qrows{dim_tg.node_to_local.at(mon),
                                               dim_tg.node_to_local.at(metric)};
                std::vector<std::size_t> crows;
                for (NodeId c : candidates) crows.push_back(dim_tg.node_to_local.at(c));
                const auto scores = ranker::score_query(checkpoints.dim_ranker, dim_states, qrows, crows);
                std::vector<std::size_t> idx(candidates.size());
                std::iota(idx.begin(), idx.end(), 0);
                std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
                    if (scores[a] != scores[b]) return scores[a] > scores[b];
                    return candidates[a] < candidates[b];
                });
                for (std::size_t i : idx)
                    ranked_dims.emplace_back(stores.graph.node(candidates[i]).key, scores[i]);
            } else {
                ranked_dims = text_rank(embedder, stores.graph, stores.graph.node(metric).ontology,
                                        candidates);
            }
            std::set<std::string> chosen;
            for (std::size_t i = 0; i < std::min(ranked_dims.size(), truth_dims->second.size()); ++i)
                chosen.insert(ranked_dims[i].first);
            std::set<std::string> expected(truth_dims->second.begin(), truth_dims->second.end());
            mm.dim_jaccard += eval::jaccard(chosen, expected);

            // expressions
            const auto expr_candidates = stores.graph.nodes_of_kind(NodeKind::Expression);
            std::vector<std::uint32_t> ranked_ids;
            if (use_exp) {
                std::optional<NodeId> dim0;
                if (!ranked_dims.empty())
                    dim0 = stores.graph.find(NodeKind::Dimension, ranked_dims.front().first);
                if (dim0) {
                    std::vector<std::size_t> qrows{exp_tg.node_to_local.at(mon),
                                                   exp_tg.node_to_local.at(metric),
                                                   exp_tg.node_to_local.at(*dim0)};
                    std::vector<std::size_t> crows;
                    for (NodeId c : expr_candidates) crows.push_back(exp_tg.node_to_local.at(c));
                    const auto scores =
                        ranker::score_query(checkpoints.exp_ranker, exp_states, qrows, crows);
                    std::vector<std::size_t> idx(expr_candidates.size());
                    std::iota(idx.begin(), idx.end(), 0);
                    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
                        if (scores[a] != scores[b]) return scores[a] > scores[b];
                        return expr_candidates[a] < expr_candidates[b];
                    });
                    for (std::size_t i : idx) ranked_ids.push_back(expr_candidates[i]);
                }
            }
            if (ranked_ids.empty()) {
                auto ranked = text_rank(embedder, stores.graph, stores.graph.node(metric).ontology,
                                        expr_candidates);
                for (const auto& [key, score] : ranked)
                    ranked_ids.push_back(*stores.graph.find(NodeKind::Expression, key));
            }
            exp_ranked.push_back(ranked_ids);
            std::set<std::uint32_t> rel;
            if (auto expr = stores.graph.find(NodeKind::Expression, truth_expr->second))
                rel.insert(*expr);
            exp_relevant.push_back(std::move(rel));

            // alert synthesis vs planted conditions (deterministic fallback)
            alert::SynthesisContext ctx;
            ctx.metric_key = stores.graph.node(metric).key;
            ctx.metric_ontology = stores.graph.node(metric).ontology;
            for (const auto& [key, score] : ranked_dims)
                if (ctx.dimensions.size() < truth_dims->second.size()) ctx.dimensions.push_back(key);
            const std::string expr_key = ranked_ids.empty()
                                             ? truth_expr->second
                                             : stores.graph.node(ranked_ids.front()).key;
            ctx.expression_key = expr_key;
            if (auto expr = stores.graph.find(NodeKind::Expression, expr_key))
                ctx.expression_op = datagen::expression_operator(stores.graph.node(*expr).ontology);
            std::optional<double> p1, p99;
            auto sit = series_by_key.find(ctx.metric_key);
            if (sit != series_by_key.end() && !sit->second->values.empty()) {
                ctx.series = sit->second->values;
                p1 = percentile_of(ctx.series, 1.0);
                p99 = percentile_of(ctx.series, 99.0);
                ctx.p1 = p1;
                ctx.p99 = p99;
            }
            // similar metrics from the same family corpus (text only, cheap)
            // reuse planted conditions of other metrics sharing the family
            auto fam = stores.truth.metric_family.find(ctx.metric_key);
            if (fam != stores.truth.metric_family.end()) {
                std::size_t added = 0;
                for (const auto& [other_key, conds] : stores.truth.metric_conditions) {
                    if (other_key == ctx.metric_key || added >= cfg.alert.max_similar) continue;
                    auto ofam = stores.truth.metric_family.find(other_key);
                    if (ofam == stores.truth.metric_family.end() || ofam->second != fam->second)
                        continue;
                    alert::SimilarMetricAlerts sim;
                    sim.key = other_key;
                    sim.similarity = 0.8;
                    sim.conditions = conds;
                    ctx.similar.push_back(std::move(sim));
                    ++added;
                }
            }
            const auto predicted = alert::synthesize_fallback(ctx);
            auto expected_conds = stores.truth.monitor_conditions.find(mon_key);
            if (expected_conds != stores.truth.monitor_conditions.end()) {
                const auto score =
                    eval::alert_eval_rules(predicted, expected_conds->second, p1, p99, cfg.fuzzy);
                mm.alert_aggregate += score.aggregate();
            }
            ++counted;
        }
        if (counted == 0) throw Error("evaluate: no scorable monitors in the sample");
        mm.dim_jaccard /= static_cast<double>(counted);
        mm.alert_aggregate /= static_cast<double>(counted);
        mm.exp_mrr = eval::ranking_report(exp_ranked, exp_relevant).mrr;
        return mm;
    };

    const ModuleMetrics base = run_modules(false, false);
    const ModuleMetrics with_dim = run_modules(true, false);
    const ModuleMetrics with_both = run_modules(true, true);

    EvalReport report;
    report.config_hash = config::config_hash(cfg);
    std::ostringstream gs;
    graph::serialize(stores.graph, gs);
    report.dataset_hash = to_hex(fnv1a64(gs.str()));
    const auto now = std::chrono::system_clock::now();
    report.timestamp = std::to_string(
        std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count());

    auto add_cells = [&](const char* variant, const eval::ClassificationReport& sel) {
        for (const auto& [dim_on, exp_on, mm] :
             {std::tuple<bool, bool, const ModuleMetrics&>{false, false, base},
              {true, false, with_dim},
              {true, true, with_both}}) {
            EvalCell cell;
            cell.variant = variant;
            cell.dim_module = dim_on;
            cell.exp_module = exp_on;
            cell.selection = sel;
            cell.dimension_jaccard = mm.dim_jaccard;
            cell.expression_mrr = mm.exp_mrr;
            cell.alert_aggregate = mm.alert_aggregate;
            report.cells.push_back(cell);
        }
    };
    add_cells("BCE", sel_bce);
    add_cells("KNN", sel_knn);
    add_cells("Ens", sel_ens);
    return report;
}

std::string eval_report_to_string(const EvalReport& report) {
    nlohmann::ordered_json j;
    j["schema"] = "monrec.evalreport.v1";
    nlohmann::ordered_json cells = nlohmann::ordered_json::array();
    for (const auto& c : report.cells) {
        nlohmann::ordered_json jc;
        jc["variant"] = c.variant;
        jc["dim_module"] = c.dim_module;
        jc["exp_module"] = c.exp_module;
        jc["selection"] = {{"accuracy", c.selection.accuracy},   {"precision", c.selection.precision},
                           {"recall", c.selection.recall},       {"f1", c.selection.f1},
                           {"macro_f1", c.selection.macro_f1},   {"hamming", c.selection.hamming}};
        jc["dimension_jaccard"] = c.dimension_jaccard;
        jc["expression_mrr"] = c.expression_mrr;
        jc["alert_aggregate"] = c.alert_aggregate;
        cells.push_back(std::move(jc));
    }
    j["cells"] = std::move(cells);
    j["config_hash"] = report.config_hash;
    j["dataset_hash"] = report.dataset_hash;
    j["timestamp"] = report.timestamp;
    return j.dump(2);
}

// ---- feedback ----

void FeedbackRecord::validate() const {
    if (bundle_id.empty()) throw SchemaError("feedback: bundle id is empty");
    if (verdict != "accepted" && verdict != "rejected" && verdict != "modified")
        throw SchemaError("feedback: verdict '" + verdict + "' not in {accepted, rejected, modified}");
    if (verdict == "modified" && !corrected_config)
        throw SchemaError("feedback: modified verdict requires a corrected config");
    if (corrected_config) {
        alert::MonitorConfig cfg = alert::monitor_config_from_string(*corrected_config);
        alert::validate_monitor_config(cfg);
    }
    if (incident && *incident != "detected" && *incident != "missed" && *incident != "noisy")
        throw SchemaError("feedback: incident outcome '" + *incident + "' unknown");
}

nlohmann::ordered_json feedback_to_json(const FeedbackRecord& r) {
    nlohmann::ordered_json j;
    j["bundle"] = r.bundle_id;
    j["verdict"] = r.verdict;
    if (r.corrected_config) j["corrected_config"] = *r.corrected_config;
    if (r.incident) j["incident"] = *r.incident;
    j["timestamp"] = r.timestamp;
    return j;
}

FeedbackRecord feedback_from_json(const nlohmann::json& j) {
    FeedbackRecord r;
    r.bundle_id = j.at("bundle").get<std::string>();
    r.verdict = j.at("verdict").get<std::string>();
    if (j.contains("corrected_config")) r.corrected_config = j.at("corrected_config").get<std::string>();
    if (j.contains("incident")) r.incident = j.at("incident").get<std::string>();
    r.timestamp = j.value("timestamp", 0.0);
    return r;
}

void append_feedback(const std::string& path, const FeedbackRecord& record) {
    record.validate();
    std::ofstream os(path, std::ios::binary | std::ios::app);
    if (!os) throw Error("cannot open feedback log for append: " + path);
    os << feedback_to_json(record).dump() << '\n';
}

std::vector<FeedbackRecord> load_feedback(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open feedback log: " + path);
    std::vector<FeedbackRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(feedback_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw ParseError(std::string("feedback log: ") + e.what(), lineno);
        }
    }
    return out;
}

std::vector<alert::MonitorConfig> accepted_configs(const std::vector<FeedbackRecord>& log,
                                                   const std::string& bundles_dir) {
    std::vector<alert::MonitorConfig> out;
    for (const FeedbackRecord& r : log) {
        if (r.verdict == "rejected") continue;
        if (r.corrected_config) {
            out.push_back(alert::monitor_config_from_string(*r.corrected_config));
            continue;
        }
        const fs::path path = fs::path(bundles_dir) / (r.bundle_id + ".json");
        if (!fs::exists(path)) continue;  // bundle content unavailable
        RecommendationBundle bundle = bundle_from_string(read_text(path.string()));
        if (!bundle.monitor_config.empty())
            out.push_back(alert::monitor_config_from_string(bundle.monitor_config));
    }
    return out;
}

graph::EntityGraph augment_with_configs(const graph::EntityGraph& g,
                                        const std::vector<alert::MonitorConfig>& configs) {
    // rebuild, then layer the feedback monitors on top; duplicate edges are
    // skipped so replays are idempotent
    std::stringstream ss;
    graph::serialize(g, ss);
    graph::EntityGraph out = graph::deserialize(ss);
    for (const alert::MonitorConfig& cfg : configs) {
        auto svc = out.find(NodeKind::Service, cfg.account);
        if (!svc) continue;
        NodeId mon;
        if (auto existing = out.find(NodeKind::Monitor, cfg.monitor_key)) {
            mon = *existing;
        } else {
            mon = out.add_node(NodeKind::Monitor, cfg.monitor_key, "feedback-accepted monitor");
            out.add_edge(*svc, mon, EdgeKind::ServiceHasMonitor);
        }
        auto try_edge = [&](NodeId a, NodeId b, EdgeKind kind) {
            try {
                out.add_edge(a, b, kind);
            } catch (const DuplicateError&) {
            }
        };
        for (const alert::MonitorTuple& t : cfg.tuples) {
            auto metric = out.find(NodeKind::Metric, t.metric_key);
            if (!metric) continue;
            try_edge(mon, *metric, EdgeKind::MonitorHasMetric);
            for (const std::string& dkey : t.dimension_keys)
                if (auto dim = out.find(NodeKind::Dimension, dkey))
                    try_edge(mon, *dim, EdgeKind::MonitorAssociatedDimension);
            if (auto expr = out.find(NodeKind::Expression, t.expression_key))
                try_edge(mon, *expr, EdgeKind::MonitorUsesExpression);
        }
    }
    return out;
}

}  // namespace monrec::pipeline
