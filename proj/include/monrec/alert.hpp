#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "monrec/common.hpp"
#include "monrec/graph.hpp"

// Alert-condition synthesis: the LLM-backed path with a deterministic
// rule-based fallback, plus the monitor configuration document the pipeline
// ultimately emits.

namespace monrec::alert {

enum class AggOp : std::uint8_t { Count, Sum, Average, Percentile, Rate, QoS, Max, Min };
constexpr std::size_t kAggOpCount = 8;
enum class Comparator : std::uint8_t { GT, GE, LT, LE, EQ };

std::string_view to_string(AggOp op);
std::string_view to_string(Comparator c);
AggOp agg_op_from_string(std::string_view s);
Comparator comparator_from_string(std::string_view s);

/// true when the operator alerts on values running high (threshold is an
/// upper bound); Min and QoS alert on values running low.
bool is_upper_bound(AggOp op);

struct AlertCondition {
    std::string expression_key;
    AggOp op = AggOp::Average;
    std::vector<std::string> dimension_keys;
    Comparator comparator = Comparator::GT;
    std::optional<double> threshold;  // unset only on needs-review conditions
    std::string unit;
    int window = 20;
    int min_violations = 20;
    int severity = 3;
    std::string provenance;        // llm | fallback | needs-review | planted
    std::string threshold_source;  // e.g. "similar:<metric>" or "percentile:p99"

    /// Throws Error naming the violated invariant.
    void validate() const;
    bool is_valid() const;
};

nlohmann::ordered_json to_json(const AlertCondition& c);
AlertCondition condition_from_json(const nlohmann::json& j);

struct MonitorTuple {
    std::string metric_key;
    std::vector<std::string> dimension_keys;
    std::string expression_key;
    std::vector<AlertCondition> conditions;
};

struct MonitorConfig {
    std::string monitor_key;
    std::string account;
    std::vector<MonitorTuple> tuples;
};

// ---- monitor configuration document (monrec.monitorconfig.v1) ----
std::string monitor_config_to_string(const MonitorConfig& cfg);
MonitorConfig monitor_config_from_string(const std::string& text);

/// Schema validation: field presence/types plus AlertCondition invariants
/// and at least one tuple. Throws SchemaError with the first violation.
void validate_monitor_config(const MonitorConfig& cfg);

/// Builds the document after checking every referenced entity exists in the
/// graph; a dangling reference lists all missing keys.
MonitorConfig format_monitor_config(const graph::EntityGraph& g, std::string monitor_key,
                                    std::string account, std::vector<MonitorTuple> tuples);

struct SimilarMetricAlerts {
    std::string key;
    std::string ontology;
    double similarity = 0.0;
    std::vector<AlertCondition> conditions;
};

struct SynthesisContext {
    std::string account_text;
    std::string metric_key;
    std::string metric_ontology;
    std::string sampling_kind;
    std::vector<double> series;  // may be empty (new metrics have no history)
    std::optional<double> p1, p99;
    std::vector<std::string> dimensions;
    std::string expression_key;
    AggOp expression_op = AggOp::Average;
    std::string unit;
    std::vector<SimilarMetricAlerts> similar;  // most similar first
    std::vector<std::string> best_practices;
    std::size_t max_similar = 5;
    std::size_t token_budget = 4000;  // estimated tokens (chars/4)
};

/// Text completion client. The HTTP implementation follows the wire
/// contract {model, prompt, response_format} -> {text}; tests plug in stubs.
class LlmClient {
public:
    virtual ~LlmClient() = default;
    virtual std::string complete(const std::string& prompt, const std::string& response_format) = 0;
    virtual std::string model_id() const = 0;
};

struct LlmClientConfig {
    std::string endpoint;
    std::string api_key;
    std::string model = "configured-model";
    int timeout_ms = 30000;
    int retry_budget = 2;
};

class HttpLlmClient : public LlmClient {
public:
    explicit HttpLlmClient(LlmClientConfig cfg) : cfg_(std::move(cfg)) {}
    std::string complete(const std::string& prompt, const std::string& response_format) override;
    std::string model_id() const override { return cfg_.model; }

private:
    LlmClientConfig cfg_;
};

struct Prompt {
    std::string text;
    bool truncated = false;       // similar metrics dropped to fit the budget
    std::size_t dropped_similar = 0;
};

/// Deterministic prompt: role, input description, operator glossary, service
/// information block, similar-metric alert conditions, required output
/// format. Over-budget prompts drop the least similar metrics first.
Prompt build_prompt(const SynthesisContext& context);

/// Name of the structured response schema the LLM must follow.
std::string response_format_tag();

struct SynthesisResult {
    std::vector<AlertCondition> conditions;
    std::string provenance;  // llm | fallback | needs-review
    int attempts = 0;
};

/// LLM path: parse and validate the structured response, retry with a repair
/// instruction up to the budget, then fall back to the rule-based synthesis.
SynthesisResult synthesize_llm(const SynthesisContext& context, LlmClient& client,
                               int retry_budget = 2);

/// Deterministic rules: operator from the recommended expression; threshold
/// as the similarity-weighted median of same-operator thresholds from
/// similar metrics, else the p99 (upper-bound) / p1 (lower-bound) of the
/// series; window 20 with min violations = window; severity from exceedance
/// rarity. With neither source the condition is flagged needs-review.
std::vector<AlertCondition> synthesize_fallback(const SynthesisContext& context);

}  // namespace monrec::alert
