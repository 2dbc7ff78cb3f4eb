#include <doctest.h>

#include <filesystem>
#include <set>

#include "monrec/pipeline.hpp"

using namespace monrec;
using namespace monrec::pipeline;

namespace {

config::AppConfig tiny_config() {
    config::AppConfig cfg = config::desk_config();
    cfg.embed_width = 32;
    cfg.select.hidden = 32;
    cfg.select.max_epochs = 30;
    cfg.ranker.layers = 2;
    cfg.ranker.hidden = {32};
    cfg.ranker.output_dim_rec = 16;
    cfg.ranker.output_exp_rec = 16;
    cfg.ranker.heads = 2;
    cfg.ranker.max_epochs = 12;
    cfg.datagen.services = 12;
    cfg.datagen.monitors = 90;
    cfg.datagen.metrics = 72;
    cfg.datagen.dimensions = 40;
    cfg.datagen.expressions = 60;
    cfg.datagen.series_length = 96;
    cfg.no_llm = true;
    cfg.seed = 7;
    cfg.propagate();
    return cfg;
}

struct Fixture {
    config::AppConfig cfg = tiny_config();
    Stores stores;
    Checkpoints ckpt;

    Fixture() {
        datagen::Dataset ds = datagen::generate(cfg.datagen);
        stores.graph = std::move(ds.graph);
        stores.series = std::move(ds.series);
        stores.samples = std::move(ds.select_samples);
        stores.truth = std::move(ds.truth);
        ckpt = train_all(cfg, stores, "/tmp/monrec_pipe_ckpt");
    }
};

Fixture& fixture() {
    static Fixture f;  // trained once, reused across the pipeline tests
    return f;
}

Stores clone_stores(const Stores& s) {
    Stores out;
    std::stringstream ss;
    graph::serialize(s.graph, ss);
    out.graph = graph::deserialize(ss);
    out.series = s.series;
    out.samples = s.samples;
    out.truth = s.truth;
    return out;
}

}  // namespace

TEST_CASE("stores round-trip through the dataset directory") {
    const config::AppConfig cfg = tiny_config();
    datagen::Dataset ds = datagen::generate(cfg.datagen);
    StorePaths paths{"/tmp/monrec_stores_test"};
    save_stores(ds, paths);
    Stores back = load_stores(paths);
    CHECK(graph::structurally_equal(ds.graph, back.graph));
    CHECK(back.series.size() == ds.series.size());
    CHECK(back.samples.size() == ds.select_samples.size());
    CHECK(back.truth.metric_label == ds.truth.metric_label);
}

TEST_CASE("checkpoints reload with identical behavior") {
    Fixture& f = fixture();
    Checkpoints loaded = load_checkpoints(f.cfg, f.stores, "/tmp/monrec_pipe_ckpt");
    // same parameters bit for bit
    CHECK(optim::checkpoint_to_string(loaded.select_joint.params) ==
          optim::checkpoint_to_string(f.ckpt.select_joint.params));
    CHECK(optim::checkpoint_to_string(loaded.dim_ranker.params) ==
          optim::checkpoint_to_string(f.ckpt.dim_ranker.params));
}

TEST_CASE("recommend produces a schema-valid auditable bundle") {
    Fixture& f = fixture();
    Engine engine(f.cfg, clone_stores(f.stores), f.ckpt);
    RecommendOptions opts;
    opts.out_dir = "/tmp/monrec_bundle_out";
    RecommendationBundle bundle = engine.recommend("svc-3", opts);
    CHECK(bundle.status == "ok");
    CHECK(!bundle.id.empty());
    CHECK(!bundle.decisions.empty());
    REQUIRE(!bundle.monitor_config.empty());

    alert::MonitorConfig cfg_doc = alert::monitor_config_from_string(bundle.monitor_config);
    CHECK_NOTHROW(alert::validate_monitor_config(cfg_doc));
    CHECK(cfg_doc.account == "svc-3");

    // alerts reference only selected metrics/dimensions/expressions
    std::set<std::string> selected;
    for (const auto& d : bundle.decisions)
        if (d.decision) selected.insert(d.metric_key);
    for (const auto& tuple : cfg_doc.tuples) {
        CHECK(selected.count(tuple.metric_key) == 1);
        const auto plan = std::find_if(bundle.plans.begin(), bundle.plans.end(),
                                       [&](const MetricPlan& p) { return p.metric_key == tuple.metric_key; });
        REQUIRE(plan != bundle.plans.end());
        for (const auto& c : tuple.conditions) {
            CHECK(c.expression_key == plan->expression_key);
            CHECK(!c.provenance.empty());
            for (const auto& d : c.dimension_keys)
                CHECK(std::count(plan->dimensions.begin(), plan->dimensions.end(), d) == 1);
        }
        // the rationale cites the similar metrics used
        for (const auto& s : plan->similar)
            CHECK(plan->rationale.find(s.key) != std::string::npos);
    }
    // stage artifacts exist on disk
    CHECK(bundle.stage_artifacts.size() >= 6);
    for (const auto& path : bundle.stage_artifacts) CHECK(std::filesystem::exists(path));

    // recommended dimensions always come from the metric's candidate set
    for (const auto& plan : bundle.plans) {
        const auto metric = f.stores.graph.find(graph::NodeKind::Metric, plan.metric_key);
        REQUIRE(metric.has_value());
        std::set<std::string> cand;
        for (auto d : f.stores.graph.candidate_dimensions(*metric))
            cand.insert(f.stores.graph.node(d).key);
        for (const auto& [key, score] : plan.dimension_scores) CHECK(cand.count(key) == 1);
    }
}

TEST_CASE("bundles serialize and parse losslessly") {
    Fixture& f = fixture();
    Engine engine(f.cfg, clone_stores(f.stores), f.ckpt);
    RecommendationBundle bundle = engine.recommend("svc-1");
    const std::string text = bundle_to_string(bundle);
    RecommendationBundle back = bundle_from_string(text);
    CHECK(bundle_to_string(back) == text);
}

TEST_CASE("unknown accounts yield an explicit nothing-to-monitor bundle") {
    Fixture& f = fixture();
    Engine engine(f.cfg, clone_stores(f.stores), f.ckpt);
    RecommendationBundle bundle = engine.recommend("svc-does-not-exist");
    CHECK(bundle.status == "nothing-to-monitor");
    CHECK(bundle.plans.empty());
    CHECK(bundle.monitor_config.empty());
}

TEST_CASE("no-llm pipeline is deterministic end to end") {
    Fixture& f = fixture();
    Engine a(f.cfg, clone_stores(f.stores), f.ckpt);
    Engine b(f.cfg, clone_stores(f.stores), f.ckpt);
    for (const char* account : {"svc-0", "svc-5", "svc-11"}) {
        RecommendationBundle ba = a.recommend(account);
        RecommendationBundle bb = b.recommend(account);
        CHECK(ba.monitor_config == bb.monitor_config);  // byte identical
        CHECK(bundle_to_string(ba) == bundle_to_string(bb));
    }
}

TEST_CASE("serve handler answers with bundles matching direct calls") {
    Fixture& f = fixture();
    Engine engine(f.cfg, clone_stores(f.stores), f.ckpt);
    const std::string response = engine.handle_request(R"({"action":"recommend","account":"svc-2"})");
    nlohmann::json res = nlohmann::json::parse(response);
    REQUIRE(res.at("ok").get<bool>());
    RecommendationBundle direct = engine.recommend("svc-2");
    CHECK(res.at("bundle").at("monitor_config").get<std::string>() == direct.monitor_config);
    CHECK(res.at("bundle").at("id").get<std::string>() == direct.id);
}

TEST_CASE("serve handler rejects malformed requests and unknown bundles") {
    Fixture& f = fixture();
    Engine engine(f.cfg, clone_stores(f.stores), f.ckpt);
    engine.set_feedback_log("/tmp/monrec_feedback_serve.jsonl");
    std::filesystem::remove("/tmp/monrec_feedback_serve.jsonl");

    nlohmann::json bad = nlohmann::json::parse(engine.handle_request("this is not json"));
    CHECK_FALSE(bad.at("ok").get<bool>());

    nlohmann::json unknown_action =
        nlohmann::json::parse(engine.handle_request(R"({"action":"destroy"})"));
    CHECK_FALSE(unknown_action.at("ok").get<bool>());

    nlohmann::json unknown_bundle = nlohmann::json::parse(engine.handle_request(
        R"({"action":"ingest-feedback","record":{"bundle":"nope","verdict":"accepted","timestamp":1}})"));
    CHECK_FALSE(unknown_bundle.at("ok").get<bool>());
    CHECK(unknown_bundle.at("error").get<std::string>().find("unknown bundle") != std::string::npos);
    // the log stays untouched
    CHECK_FALSE(std::filesystem::exists("/tmp/monrec_feedback_serve.jsonl"));

    // a real bundle id is accepted and logged
    RecommendationBundle bundle = engine.recommend("svc-4");
    nlohmann::json req;
    req["action"] = "ingest-feedback";
    req["record"] = {{"bundle", bundle.id}, {"verdict", "accepted"}, {"timestamp", 2.0}};
    nlohmann::json ok = nlohmann::json::parse(engine.handle_request(req.dump()));
    CHECK(ok.at("ok").get<bool>());
    auto log = load_feedback("/tmp/monrec_feedback_serve.jsonl");
    REQUIRE(log.size() == 1);
    CHECK(log[0].bundle_id == bundle.id);
}

TEST_CASE("feedback records validate and round-trip") {
    FeedbackRecord r;
    r.bundle_id = "abc";
    r.verdict = "accepted";
    r.timestamp = 5.0;
    CHECK_NOTHROW(r.validate());

    r.verdict = "modified";
    CHECK_THROWS_AS(r.validate(), SchemaError);  // corrected config required

    r.verdict = "maybe";
    CHECK_THROWS_AS(r.validate(), SchemaError);

    r.verdict = "accepted";
    r.incident = "detected";
    const std::string path = "/tmp/monrec_feedback_rt.jsonl";
    std::filesystem::remove(path);
    append_feedback(path, r);
    append_feedback(path, r);
    auto log = load_feedback(path);
    REQUIRE(log.size() == 2);
    CHECK(log[0].bundle_id == "abc");
    CHECK(log[0].incident == std::optional<std::string>("detected"));
}

TEST_CASE("accepted configs become supervision edges, idempotently") {
    Fixture& f = fixture();
    Engine engine(f.cfg, clone_stores(f.stores), f.ckpt);
    RecommendOptions opts;
    opts.out_dir = "/tmp/monrec_feedback_replay";
    RecommendationBundle bundle;
    for (int i = 0; i < 12 && bundle.status != "ok"; ++i)
        bundle = engine.recommend("svc-" + std::to_string(i), opts);
    REQUIRE(bundle.status == "ok");

    const std::string log_path = "/tmp/monrec_feedback_replay/log.jsonl";
    std::filesystem::remove(log_path);
    FeedbackRecord r;
    r.bundle_id = bundle.id;
    r.verdict = "accepted";
    r.timestamp = 1.0;
    append_feedback(log_path, r);

    auto log = load_feedback(log_path);
    auto configs = accepted_configs(log, "/tmp/monrec_feedback_replay/bundles");
    REQUIRE(configs.size() == 1);

    auto edge_set = [](const graph::EntityGraph& g) {
        std::set<std::tuple<graph::NodeId, graph::NodeId, int>> out;
        for (const auto& e : g.edges()) out.insert({e.src, e.dst, static_cast<int>(e.kind)});
        return out;
    };
    graph::EntityGraph once = augment_with_configs(f.stores.graph, configs);
    graph::EntityGraph twice = augment_with_configs(once, configs);
    CHECK(edge_set(once) == edge_set(twice));
    CHECK(once.edge_count() > f.stores.graph.edge_count());

    // the accepted monitor's supervision edges exist
    auto mon = once.find(graph::NodeKind::Monitor, "rec-" + bundle.account);
    REQUIRE(mon.has_value());
    CHECK(!once.neighbors(*mon, graph::EdgeKind::MonitorAssociatedDimension).empty());
    CHECK(!once.neighbors(*mon, graph::EdgeKind::MonitorUsesExpression).empty());
}

TEST_CASE("modified feedback replaces the bundle's config") {
    Fixture& f = fixture();
    Engine engine(f.cfg, clone_stores(f.stores), f.ckpt);
    RecommendOptions opts;
    opts.out_dir = "/tmp/monrec_feedback_mod";
    RecommendationBundle bundle;
    for (int i = 0; i < 12 && bundle.status != "ok"; ++i)
        bundle = engine.recommend("svc-" + std::to_string(i), opts);
    REQUIRE(bundle.status == "ok");

    alert::MonitorConfig corrected = alert::monitor_config_from_string(bundle.monitor_config);
    corrected.monitor_key = "rec-corrected";
    FeedbackRecord r;
    r.bundle_id = bundle.id;
    r.verdict = "modified";
    r.corrected_config = alert::monitor_config_to_string(corrected);
    r.timestamp = 2.0;
    CHECK_NOTHROW(r.validate());
    auto configs = accepted_configs({r}, "/tmp/monrec_feedback_mod/bundles");
    REQUIRE(configs.size() == 1);
    CHECK(configs[0].monitor_key == "rec-corrected");
}

TEST_CASE("evaluation grid is deterministic and shows the module ordering") {
    Fixture& f = fixture();
    EvalReport a = evaluate(f.cfg, f.stores, f.ckpt, 60);
    EvalReport b = evaluate(f.cfg, f.stores, f.ckpt, 60);
    REQUIRE(a.cells.size() == 9);  // 3 variants x (base, +DimRec, +DimRec+ExpRec)
    for (std::size_t i = 0; i < a.cells.size(); ++i) {
        CHECK(a.cells[i].selection.accuracy == b.cells[i].selection.accuracy);
        CHECK(a.cells[i].dimension_jaccard == b.cells[i].dimension_jaccard);
        CHECK(a.cells[i].expression_mrr == b.cells[i].expression_mrr);
        CHECK(a.cells[i].alert_aggregate == b.cells[i].alert_aggregate);
    }

    // the dimension module beats the text-only fallback on Jaccard
    double base_jaccard = 0, dim_jaccard = 0;
    for (const auto& c : a.cells)
        if (c.variant == "Ens") {
            if (!c.dim_module) base_jaccard = c.dimension_jaccard;
            if (c.dim_module && !c.exp_module) dim_jaccard = c.dimension_jaccard;
        }
    CHECK(dim_jaccard > base_jaccard);
}
