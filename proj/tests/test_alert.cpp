#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "monrec/alert.hpp"
#include "oracles.hpp"

using namespace monrec;
using namespace monrec::alert;

namespace {

SynthesisContext fixture_context() {
    SynthesisContext ctx;
    ctx.account_text = "storefront service, payments team";
    ctx.metric_key = "ram_util_raw";
    ctx.metric_ontology = "Raw RAM utilization in MBs";
    ctx.sampling_kind = "gauge";
    ctx.dimensions = {"vm", "datacenter"};
    ctx.expression_key = "expr_avg_ram";
    ctx.expression_op = AggOp::Average;
    ctx.unit = "%";
    return ctx;
}

SimilarMetricAlerts similar_with_threshold(const std::string& key, double thr, double sim,
                                           AggOp op = AggOp::Average) {
    SimilarMetricAlerts s;
    s.key = key;
    s.ontology = key + " ontology";
    s.similarity = sim;
    AlertCondition c;
    c.expression_key = "expr_" + key;
    c.op = op;
    c.comparator = Comparator::GT;
    c.threshold = thr;
    c.provenance = "planted";
    s.conditions.push_back(c);
    return s;
}

struct StubLlm : LlmClient {
    std::vector<std::string> replies;
    std::size_t cursor = 0;
    std::vector<std::string> prompts;

    std::string complete(const std::string& prompt, const std::string&) override {
        prompts.push_back(prompt);
        if (cursor >= replies.size()) throw Error("stub exhausted");
        return replies[cursor++];
    }
    std::string model_id() const override { return "stub"; }
};

}  // namespace

TEST_CASE("alert condition invariants") {
    AlertCondition c;
    c.expression_key = "e";
    c.threshold = 10.0;
    CHECK_NOTHROW(c.validate());

    c.window = 0;
    CHECK_THROWS_AS(c.validate(), SchemaError);
    c.window = 20;
    c.min_violations = 21;
    CHECK_THROWS_AS(c.validate(), SchemaError);
    c.min_violations = 20;
    c.threshold.reset();
    CHECK_THROWS_AS(c.validate(), SchemaError);
    c.provenance = "needs-review";
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("fallback picks the weighted median of same-operator thresholds") {
    SynthesisContext ctx = fixture_context();
    ctx.similar = {similar_with_threshold("a", 80.0, 0.9), similar_with_threshold("b", 85.0, 0.9),
                   similar_with_threshold("c", 90.0, 0.9)};
    auto conds = synthesize_fallback(ctx);
    REQUIRE(conds.size() == 1);
    CHECK(conds[0].threshold == doctest::Approx(85.0));
    CHECK(conds[0].provenance == "fallback");
    CHECK(conds[0].threshold_source == "similar:b");
    CHECK(conds[0].window == 20);
    CHECK(conds[0].min_violations == 20);
}

TEST_CASE("fallback only reads conditions with a matching operator") {
    SynthesisContext ctx = fixture_context();
    ctx.similar = {similar_with_threshold("a", 5.0, 0.99, AggOp::Count),
                   similar_with_threshold("b", 85.0, 0.4)};
    auto conds = synthesize_fallback(ctx);
    REQUIRE(conds.size() == 1);
    CHECK(conds[0].threshold == doctest::Approx(85.0));
}

TEST_CASE("fallback falls through to the series p99 for upper-bound operators") {
    SynthesisContext ctx = fixture_context();
    std::mt19937_64 rng(31);
    std::normal_distribution<double> d(60.0, 10.0);
    for (int i = 0; i < 500; ++i) ctx.series.push_back(d(rng));

    auto conds = synthesize_fallback(ctx);
    REQUIRE(conds.size() == 1);
    REQUIRE(conds[0].threshold.has_value());
    CHECK(*conds[0].threshold == doctest::Approx(oracles::percentile(ctx.series, 99.0)).epsilon(1e-9));
    CHECK(conds[0].comparator == Comparator::GT);
    CHECK(conds[0].threshold_source == "percentile:p99");
    // threshold at p99 leaves ~1% of samples violating -> severity 3
    CHECK(conds[0].severity == 3);
}

TEST_CASE("fallback uses p1 and < for lower-bound operators") {
    SynthesisContext ctx = fixture_context();
    ctx.expression_op = AggOp::QoS;
    for (int i = 0; i < 200; ++i) ctx.series.push_back(0.99 - 0.0001 * i);
    auto conds = synthesize_fallback(ctx);
    REQUIRE(conds.size() == 1);
    CHECK(conds[0].comparator == Comparator::LT);
    CHECK(*conds[0].threshold == doctest::Approx(oracles::percentile(ctx.series, 1.0)).epsilon(1e-9));
}

TEST_CASE("fallback with nothing available emits a needs-review condition") {
    SynthesisContext ctx = fixture_context();
    auto conds = synthesize_fallback(ctx);
    REQUIRE(conds.size() == 1);
    CHECK(conds[0].provenance == "needs-review");
    CHECK_FALSE(conds[0].threshold.has_value());
    CHECK_NOTHROW(conds[0].validate());
}

TEST_CASE("fallback is a pure function of its context") {
    SynthesisContext ctx = fixture_context();
    ctx.similar = {similar_with_threshold("a", 70.0, 0.8), similar_with_threshold("b", 90.0, 0.2)};
    for (int i = 0; i < 100; ++i) ctx.series.push_back(50.0 + i * 0.1);
    auto c1 = synthesize_fallback(ctx);
    auto c2 = synthesize_fallback(ctx);
    REQUIRE(c1.size() == c2.size());
    CHECK(to_json(c1[0]).dump() == to_json(c2[0]).dump());
}

TEST_CASE("prompt is deterministic and marks empty similar sections") {
    SynthesisContext ctx = fixture_context();
    Prompt p1 = build_prompt(ctx);
    Prompt p2 = build_prompt(ctx);
    CHECK(p1.text == p2.text);
    CHECK(p1.text.find("none available") != std::string::npos);
    // section order: role intro, glossary, service info, similar conditions, format
    const auto role = p1.text.find("expert service engineer");
    const auto glossary = p1.text.find("Glossary of aggregation operators");
    const auto info = p1.text.find("Given service information");
    const auto similar = p1.text.find("Below are the alert conditions of similar metrics");
    const auto format = p1.text.find("generate the alert conditions");
    CHECK(role < glossary);
    CHECK(glossary < info);
    CHECK(info < similar);
    CHECK(similar < format);
}

TEST_CASE("prompt respects the token budget by dropping the least similar metrics") {
    SynthesisContext ctx = fixture_context();
    for (int i = 0; i < 5; ++i)
        ctx.similar.push_back(similar_with_threshold("sim" + std::to_string(i), 80.0 + i, 1.0 - 0.1 * i));
    ctx.token_budget = 300;  // force truncation
    Prompt p = build_prompt(ctx);
    CHECK(p.truncated);
    CHECK(p.dropped_similar > 0);
    CHECK(p.text.size() / 4 <= ctx.token_budget + 64);  // within a similar-entry of the budget
    // the most similar metric survives longest
    if (p.dropped_similar < 5) CHECK(p.text.find("sim0") != std::string::npos);
}

TEST_CASE("golden prompt snapshot") {
    SynthesisContext ctx = fixture_context();
    ctx.series = {55.0, 57.5, 60.0, 62.5};
    ctx.p1 = 55.1;
    ctx.p99 = 62.4;
    ctx.best_practices = {"alert on sustained saturation, not single spikes"};
    ctx.similar = {similar_with_threshold("ram_util_pct", 85.0, 0.92)};
    Prompt p = build_prompt(ctx);

    const std::filesystem::path golden = std::filesystem::path(MONREC_TEST_DATA_DIR) / "golden_prompt.txt";
    if (std::getenv("MONREC_REGEN_GOLDEN")) {
        std::filesystem::create_directories(golden.parent_path());
        std::ofstream(golden, std::ios::binary) << p.text;
        MESSAGE("golden prompt regenerated");
        return;
    }
    REQUIRE_MESSAGE(std::filesystem::exists(golden),
                    "run once with MONREC_REGEN_GOLDEN=1 to create the snapshot");
    std::ifstream is(golden, std::ios::binary);
    std::stringstream buf;
    buf << is.rdbuf();
    CHECK(p.text == buf.str());
}

TEST_CASE("llm synthesis happy path via stub client") {
    SynthesisContext ctx = fixture_context();
    StubLlm stub;
    stub.replies = {R"({"conditions":[{"expression":"expr_avg_ram","operator":"Average",
        "dimensions":["vm"],"comparator":">","threshold":85.0,"unit":"%","window":20,
        "min_violations":20,"severity":3}]})"};
    auto result = synthesize_llm(ctx, stub);
    CHECK(result.provenance == "llm");
    REQUIRE(result.conditions.size() == 1);
    CHECK(result.conditions[0].provenance == "llm");
    CHECK(*result.conditions[0].threshold == doctest::Approx(85.0));
    CHECK(result.attempts == 1);
}

TEST_CASE("malformed llm output triggers a repair retry, then the fallback") {
    SynthesisContext ctx = fixture_context();
    ctx.similar = {similar_with_threshold("a", 42.0, 0.7)};
    StubLlm stub;
    const std::string bad = R"({"conditions":[{"expression":"e","operator":"Average",
        "dimensions":[],"comparator":">","threshold":10.0,"unit":"","window":-1,
        "min_violations":1,"severity":3}]})";
    stub.replies = {bad, bad, bad};
    auto result = synthesize_llm(ctx, stub, 2);
    CHECK(result.attempts == 3);
    CHECK(result.provenance == "fallback");
    REQUIRE(result.conditions.size() == 1);
    CHECK(*result.conditions[0].threshold == doctest::Approx(42.0));
    // the retry prompt carries a repair instruction
    REQUIRE(stub.prompts.size() == 3);
    CHECK(stub.prompts[1].find("previous answer was rejected") != std::string::npos);
}

TEST_CASE("fixture reply round-trips to the exact condition list") {
    SynthesisContext ctx = fixture_context();
    AlertCondition want;
    want.expression_key = "expr_avg_ram";
    want.op = AggOp::Average;
    want.dimension_keys = {"vm", "datacenter"};
    want.comparator = Comparator::GE;
    want.threshold = 91.5;
    want.unit = "%";
    want.window = 30;
    want.min_violations = 25;
    want.severity = 2;
    want.provenance = "llm";
    nlohmann::ordered_json reply;
    reply["conditions"] = nlohmann::json::array({to_json(want)});

    StubLlm stub;
    stub.replies = {reply.dump()};
    auto result = synthesize_llm(ctx, stub);
    REQUIRE(result.conditions.size() == 1);
    CHECK(to_json(result.conditions[0]).dump() == to_json(want).dump());
}

TEST_CASE("monitor config document round-trips and validates") {
    graph::EntityGraph g;
    g.add_node(graph::NodeKind::Service, "svc", "");
    const auto met = g.add_node(graph::NodeKind::Metric, "m1", "");
    const auto dim = g.add_node(graph::NodeKind::Dimension, "vm", "");
    const auto exp = g.add_node(graph::NodeKind::Expression, "e1", "");
    (void)met;
    (void)dim;
    (void)exp;

    MonitorTuple t;
    t.metric_key = "m1";
    t.dimension_keys = {"vm"};
    t.expression_key = "e1";
    AlertCondition c;
    c.expression_key = "e1";
    c.threshold = 9.0;
    c.provenance = "fallback";
    t.conditions.push_back(c);

    MonitorConfig cfg = format_monitor_config(g, "mon-new", "svc", {t});
    const std::string text = monitor_config_to_string(cfg);
    MonitorConfig back = monitor_config_from_string(text);
    CHECK(monitor_config_to_string(back) == text);
    CHECK_NOTHROW(validate_monitor_config(back));

    MonitorTuple dangling = t;
    dangling.dimension_keys = {"vm", "ghost-dim"};
    CHECK_THROWS_WITH_AS(format_monitor_config(g, "mon-2", "svc", {dangling}),
                         doctest::Contains("ghost-dim"), Error);
}

TEST_CASE("single tuple in, single tuple out") {
    graph::EntityGraph g;
    g.add_node(graph::NodeKind::Service, "svc", "");
    g.add_node(graph::NodeKind::Metric, "m1", "");
    g.add_node(graph::NodeKind::Expression, "e1", "");
    MonitorTuple t;
    t.metric_key = "m1";
    t.expression_key = "e1";
    MonitorConfig cfg = format_monitor_config(g, "mon", "svc", {t});
    CHECK(cfg.tuples.size() == 1);
}
