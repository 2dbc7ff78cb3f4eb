#include "monrec/alert.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <httplib.h>

namespace monrec::alert {

namespace {

constexpr std::array<std::string_view, kAggOpCount> kOpNames = {
    "Count", "Sum", "Average", "Percentile", "Rate", "QoS", "Max", "Min"};
constexpr std::array<std::string_view, 5> kComparatorNames = {">", ">=", "<", "<=", "="};

}  // namespace

std::string_view to_string(AggOp op) { return kOpNames.at(static_cast<std::size_t>(op)); }
std::string_view to_string(Comparator c) { return kComparatorNames.at(static_cast<std::size_t>(c)); }

AggOp agg_op_from_string(std::string_view s) {
    for (std::size_t i = 0; i < kOpNames.size(); ++i)
        if (kOpNames[i] == s) return static_cast<AggOp>(i);
    throw SchemaError("unknown aggregation operator '" + std::string(s) + "'");
}

Comparator comparator_from_string(std::string_view s) {
    for (std::size_t i = 0; i < kComparatorNames.size(); ++i)
        if (kComparatorNames[i] == s) return static_cast<Comparator>(i);
    throw SchemaError("unknown comparator '" + std::string(s) + "'");
}

bool is_upper_bound(AggOp op) { return op != AggOp::Min && op != AggOp::QoS; }

void AlertCondition::validate() const {
    if (expression_key.empty()) throw SchemaError("alert condition: expression reference is empty");
    if (window < 1) throw SchemaError("alert condition: window must be >= 1, got " + std::to_string(window));
    if (min_violations < 1 || min_violations > window)
        throw SchemaError("alert condition: min violations " + std::to_string(min_violations) +
                          " outside [1, window=" + std::to_string(window) + "]");
    if (threshold && !std::isfinite(*threshold))
        throw SchemaError("alert condition: threshold is not finite");
    if (!threshold && provenance != "needs-review")
        throw SchemaError("alert condition: threshold unset outside a needs-review condition");
    if (severity < 1 || severity > 5)
        throw SchemaError("alert condition: severity " + std::to_string(severity) + " outside [1,5]");
}

bool AlertCondition::is_valid() const {
    try {
        validate();
        return true;
    } catch (const Error&) {
        return false;
    }
}

nlohmann::ordered_json to_json(const AlertCondition& c) {
    nlohmann::ordered_json j;
    j["expression"] = c.expression_key;
    j["operator"] = to_string(c.op);
    j["dimensions"] = c.dimension_keys;
    j["comparator"] = to_string(c.comparator);
    if (c.threshold)
        j["threshold"] = *c.threshold;
    else
        j["threshold"] = nullptr;
    j["unit"] = c.unit;
    j["window"] = c.window;
    j["min_violations"] = c.min_violations;
    j["severity"] = c.severity;
    if (!c.provenance.empty()) j["provenance"] = c.provenance;
    if (!c.threshold_source.empty()) j["threshold_source"] = c.threshold_source;
    return j;
}

AlertCondition condition_from_json(const nlohmann::json& j) {
    AlertCondition c;
    c.expression_key = j.at("expression").get<std::string>();
    c.op = agg_op_from_string(j.at("operator").get<std::string>());
    c.dimension_keys = j.at("dimensions").get<std::vector<std::string>>();
    c.comparator = comparator_from_string(j.at("comparator").get<std::string>());
    if (j.contains("threshold") && !j.at("threshold").is_null()) {
        if (!j.at("threshold").is_number()) throw SchemaError("alert condition: threshold must be a number");
        c.threshold = j.at("threshold").get<double>();
    }
    c.unit = j.value("unit", "");
    c.window = j.at("window").get<int>();
    c.min_violations = j.at("min_violations").get<int>();
    c.severity = j.at("severity").get<int>();
    c.provenance = j.value("provenance", "");
    c.threshold_source = j.value("threshold_source", "");
    return c;
}

std::string monitor_config_to_string(const MonitorConfig& cfg) {
    nlohmann::ordered_json doc;
    doc["schema"] = "monrec.monitorconfig.v1";
    doc["monitor"] = cfg.monitor_key;
    doc["account"] = cfg.account;
    nlohmann::ordered_json tuples = nlohmann::ordered_json::array();
    for (const MonitorTuple& t : cfg.tuples) {
        nlohmann::ordered_json jt;
        jt["metric"] = t.metric_key;
        jt["dimensions"] = t.dimension_keys;
        jt["expression"] = t.expression_key;
        nlohmann::ordered_json conds = nlohmann::ordered_json::array();
        for (const AlertCondition& c : t.conditions) conds.push_back(to_json(c));
        jt["conditions"] = std::move(conds);
        tuples.push_back(std::move(jt));
    }
    doc["tuples"] = std::move(tuples);
    return doc.dump(2);
}

MonitorConfig monitor_config_from_string(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("monitor config: ") + e.what(), 1);
    }
    if (doc.value("schema", "") != "monrec.monitorconfig.v1")
        throw SchemaError("monitor config: unknown schema '" + doc.value("schema", "") + "'");
    MonitorConfig cfg;
    try {
        cfg.monitor_key = doc.at("monitor").get<std::string>();
        cfg.account = doc.at("account").get<std::string>();
        for (const auto& jt : doc.at("tuples")) {
            MonitorTuple t;
            t.metric_key = jt.at("metric").get<std::string>();
            t.dimension_keys = jt.at("dimensions").get<std::vector<std::string>>();
            t.expression_key = jt.at("expression").get<std::string>();
            for (const auto& jc : jt.at("conditions")) t.conditions.push_back(condition_from_json(jc));
            cfg.tuples.push_back(std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("monitor config: ") + e.what());
    }
    return cfg;
}

void validate_monitor_config(const MonitorConfig& cfg) {
    if (cfg.monitor_key.empty()) throw SchemaError("monitor config: monitor key is empty");
    if (cfg.account.empty()) throw SchemaError("monitor config: account is empty");
    if (cfg.tuples.empty()) throw SchemaError("monitor config: needs at least one tuple");
    for (const MonitorTuple& t : cfg.tuples) {
        if (t.metric_key.empty()) throw SchemaError("monitor config: tuple metric key is empty");
        if (t.expression_key.empty()) throw SchemaError("monitor config: tuple expression key is empty");
        for (const AlertCondition& c : t.conditions) c.validate();
    }
}

MonitorConfig format_monitor_config(const graph::EntityGraph& g, std::string monitor_key,
                                    std::string account, std::vector<MonitorTuple> tuples) {
    std::vector<std::string> missing;
    auto check = [&](graph::NodeKind kind, const std::string& key) {
        if (!key.empty() && !g.find(kind, key)) missing.push_back(std::string(to_string(kind)) + ":" + key);
    };
    check(graph::NodeKind::Service, account);
    for (const MonitorTuple& t : tuples) {
        check(graph::NodeKind::Metric, t.metric_key);
        check(graph::NodeKind::Expression, t.expression_key);
        for (const std::string& d : t.dimension_keys) check(graph::NodeKind::Dimension, d);
        for (const AlertCondition& c : t.conditions) {
            check(graph::NodeKind::Expression, c.expression_key);
            for (const std::string& d : c.dimension_keys) check(graph::NodeKind::Dimension, d);
        }
    }
    if (!missing.empty()) {
        std::string joined;
        for (const std::string& m : missing) joined += (joined.empty() ? "" : ", ") + m;
        throw Error("monitor config references missing entities: " + joined);
    }
    MonitorConfig cfg{std::move(monitor_key), std::move(account), std::move(tuples)};
    validate_monitor_config(cfg);
    return cfg;
}

std::string HttpLlmClient::complete(const std::string& prompt, const std::string& response_format) {
    auto scheme = cfg_.endpoint.find("://");
    if (scheme == std::string::npos) throw Error("malformed LLM endpoint: " + cfg_.endpoint);
    auto slash = cfg_.endpoint.find('/', scheme + 3);
    const std::string base = slash == std::string::npos ? cfg_.endpoint : cfg_.endpoint.substr(0, slash);
    const std::string path = slash == std::string::npos ? "/" : cfg_.endpoint.substr(slash);
    httplib::Client cli(base);
    cli.set_read_timeout(cfg_.timeout_ms / 1000, (cfg_.timeout_ms % 1000) * 1000);
    httplib::Headers headers;
    if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);
    nlohmann::json req{{"model", cfg_.model}, {"prompt", prompt}, {"response_format", response_format}};
    auto res = cli.Post(path, headers, req.dump(), "application/json");
    if (!res) throw Error("LLM endpoint unreachable: " + cfg_.endpoint);
    if (res->status != 200) throw Error("LLM endpoint returned status " + std::to_string(res->status));
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(std::string("LLM response is not valid JSON: ") + e.what());
    }
    if (!doc.contains("text")) throw Error("LLM response missing 'text'");
    return doc.at("text").get<std::string>();
}

std::string response_format_tag() { return "monrec.alertconditions.v1"; }

Prompt build_prompt(const SynthesisContext& context) {
    SynthesisContext ctx = context;
    if (ctx.similar.size() > ctx.max_similar) ctx.similar.resize(ctx.max_similar);

    Prompt prompt;
    auto render = [&](const SynthesisContext& c) {
        std::ostringstream os;
        os << "You are an expert service engineer. Design the alerting configuration (expressions,"
              " comparators and thresholds) for the service below.\n\n";
        os << "You are given the service details, the metric to monitor, its recommended dimensions"
              " and aggregation expression, raw timeseries and percentile data when available, and"
              " the alert conditions of similar metrics with best practices.\n\n";
        os << "Glossary of aggregation operators:\n"
              "  Count: number of samples in the window\n"
              "  Sum: sum of samples in the window\n"
              "  Average: arithmetic mean over the window\n"
              "  Percentile: percentile of samples over the window\n"
              "  Rate: change per time step\n"
              "  QoS: fraction of samples meeting the service objective\n"
              "  Max: largest sample in the window\n"
              "  Min: smallest sample in the window\n\n";
        os << "Given service information:\n";
        os << "{Account: " << c.account_text << ", Metrics: " << c.metric_key;
        if (!c.metric_ontology.empty()) os << " (" << c.metric_ontology << ")";
        os << ", Dimensions: [";
        for (std::size_t i = 0; i < c.dimensions.size(); ++i)
            os << (i ? ", " : "") << c.dimensions[i];
        os << "], Sampling Types: " << (c.sampling_kind.empty() ? "unknown" : c.sampling_kind);
        os << ", Expression: " << c.expression_key << " [" << to_string(c.expression_op) << "]";
        os << ", Raw Timeseries: ";
        if (c.series.empty()) {
            os << "none";
        } else {
            os << "[";
            const std::size_t head = std::min<std::size_t>(c.series.size(), 24);
            for (std::size_t i = 0; i < head; ++i) os << (i ? ", " : "") << c.series[i];
            if (c.series.size() > head) os << ", ...";
            os << "]";
        }
        os << ", Percentile data: ";
        if (c.p1 && c.p99)
            os << "{p1: " << *c.p1 << ", p99: " << *c.p99 << "}";
        else
            os << "none";
        os << ", best practices: [";
        for (std::size_t i = 0; i < c.best_practices.size(); ++i)
            os << (i ? ", " : "") << c.best_practices[i];
        os << "]}\n\n";
        os << "Below are the alert conditions of similar metrics:\n";
        if (c.similar.empty()) {
            os << "  none available\n";
        } else {
            for (const SimilarMetricAlerts& s : c.similar) {
                os << "  - " << s.key << " (similarity " << s.similarity << "): ";
                if (s.conditions.empty()) os << "no conditions";
                for (std::size_t i = 0; i < s.conditions.size(); ++i)
                    os << (i ? "; " : "") << to_json(s.conditions[i]).dump();
                os << "\n";
            }
        }
        os << "\nPlease generate the alert conditions as JSON matching format "
           << response_format_tag()
           << ":\n"
              "{\"conditions\": [{\"expression\": str, \"operator\": str, \"dimensions\": [str],"
              " \"comparator\": one of \">\" \">=\" \"<\" \"<=\" \"=\", \"threshold\": number,"
              " \"unit\": str, \"window\": int >= 1, \"min_violations\": int in [1, window],"
              " \"severity\": int in [1,5]}]}\n";
        return os.str();
    };

    prompt.text = render(ctx);
    // crude token estimate: 4 characters per token; drop the least similar
    // metrics first until the prompt fits
    while (prompt.text.size() / 4 > ctx.token_budget && !ctx.similar.empty()) {
        ctx.similar.pop_back();
        ++prompt.dropped_similar;
        prompt.truncated = true;
        prompt.text = render(ctx);
    }
    return prompt;
}

namespace {

std::vector<AlertCondition> parse_llm_conditions(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("LLM conditions: ") + e.what(), 1);
    }
    if (!doc.contains("conditions") || !doc["conditions"].is_array())
        throw SchemaError("LLM conditions: missing 'conditions' array");
    std::vector<AlertCondition> out;
    for (const auto& jc : doc["conditions"]) {
        AlertCondition c;
        try {
            c = condition_from_json(jc);
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(std::string("LLM conditions: ") + e.what());
        }
        c.provenance = "llm";
        c.validate();
        out.push_back(std::move(c));
    }
    if (out.empty()) throw SchemaError("LLM conditions: empty list");
    return out;
}

}  // namespace

SynthesisResult synthesize_llm(const SynthesisContext& context, LlmClient& client, int retry_budget) {
    Prompt prompt = build_prompt(context);
    std::string ask = prompt.text;
    SynthesisResult result;
    for (int attempt = 0; attempt <= retry_budget; ++attempt) {
        result.attempts = attempt + 1;
        try {
            const std::string text = client.complete(ask, response_format_tag());
            result.conditions = parse_llm_conditions(text);
            result.provenance = "llm";
            return result;
        } catch (const Error& e) {
            ask = prompt.text;
            ask += "\nYour previous answer was rejected: ";
            ask += e.what();
            ask += "\nAnswer with exactly one JSON object in the required format and nothing else.\n";
        }
    }
    result.conditions = synthesize_fallback(context);
    result.provenance = result.conditions.empty() ? "fallback" : result.conditions.front().provenance;
    return result;
}

std::vector<AlertCondition> synthesize_fallback(const SynthesisContext& context) {
    AlertCondition c;
    c.expression_key = context.expression_key;
    c.op = context.expression_op;
    c.dimension_keys = context.dimensions;
    c.unit = context.unit;
    c.window = 20;
    c.min_violations = 20;
    c.severity = 3;

    // thresholds of same-operator conditions from similar metrics, weighted
    // by similarity; the weighted median picks an actual sourced value
    struct Sourced {
        double threshold;
        double weight;
        Comparator comparator;
        std::string source;
    };
    std::vector<Sourced> sourced;
    for (const SimilarMetricAlerts& s : context.similar)
        for (const AlertCondition& sc : s.conditions)
            if (sc.op == context.expression_op && sc.threshold)
                sourced.push_back({*sc.threshold, std::max(s.similarity, 1e-6), sc.comparator,
                                   "similar:" + s.key});

    if (!sourced.empty()) {
        std::stable_sort(sourced.begin(), sourced.end(),
                         [](const Sourced& a, const Sourced& b) { return a.threshold < b.threshold; });
        double total = 0.0;
        for (const Sourced& s : sourced) total += s.weight;
        double cum = 0.0;
        const Sourced* pick = &sourced.back();
        for (const Sourced& s : sourced) {
            cum += s.weight;
            if (cum >= total / 2.0) {
                pick = &s;
                break;
            }
        }
        c.threshold = pick->threshold;
        c.comparator = pick->comparator;
        c.threshold_source = pick->source;
        c.provenance = "fallback";
    } else if (!context.series.empty()) {
        // percentile rule: upper-bound operators take p99 with ">", lower
        // bound take p1 with "<"
        std::vector<double> sorted = context.series;
        std::sort(sorted.begin(), sorted.end());
        auto percentile = [&](double p) {
            const double idx = p / 100.0 * static_cast<double>(sorted.size() - 1);
            const std::size_t lo = static_cast<std::size_t>(idx);
            const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
            const double frac = idx - static_cast<double>(lo);
            return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
        };
        if (is_upper_bound(context.expression_op)) {
            c.threshold = percentile(99.0);
            c.comparator = Comparator::GT;
            c.threshold_source = "percentile:p99";
        } else {
            c.threshold = percentile(1.0);
            c.comparator = Comparator::LT;
            c.threshold_source = "percentile:p1";
        }
        c.provenance = "fallback";
    } else {
        c.provenance = "needs-review";
        c.comparator = is_upper_bound(context.expression_op) ? Comparator::GT : Comparator::LT;
    }

    // severity from how rarely the series would have violated the rule
    if (c.threshold && !context.series.empty()) {
        std::size_t violations = 0;
        for (double v : context.series) {
            const bool hit = c.comparator == Comparator::GT    ? v > *c.threshold
                             : c.comparator == Comparator::GE  ? v >= *c.threshold
                             : c.comparator == Comparator::LT  ? v < *c.threshold
                             : c.comparator == Comparator::LE  ? v <= *c.threshold
                                                               : v == *c.threshold;
            if (hit) ++violations;
        }
        const double rate = static_cast<double>(violations) / static_cast<double>(context.series.size());
        c.severity = rate < 0.001 ? 2 : 3;
    }
    return {c};
}

}  // namespace monrec::alert
