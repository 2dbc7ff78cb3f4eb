#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "monrec/alert.hpp"
#include "monrec/common.hpp"

// Offline evaluation: classification and ranking metrics, set overlap, and
// the deterministic alert-quality scorer standing in for the LLM judge.

namespace monrec::eval {

struct ClassificationReport {
    double accuracy = 0, precision = 0, recall = 0, f1 = 0, macro_f1 = 0, hamming = 0;
};

/// Standard binary definitions; macro-F1 averages the per-class F1 scores and
/// hamming loss equals 1 - accuracy for single-label binary tasks.
ClassificationReport classification_report(const std::vector<int>& preds,
                                           const std::vector<int>& labels);

struct RankingReport {
    std::map<int, double> hit_ratio;  // HR@k
    std::map<int, double> ndcg;       // NDCG@k, binary gains
    std::map<int, double> recall;     // Recall@k
    double mrr = 0.0;
};

/// Per-query ranked candidate ids vs relevant sets. Queries without any
/// relevant item contribute 0 to every metric and stay in the denominator.
RankingReport ranking_report(const std::vector<std::vector<std::uint32_t>>& ranked,
                             const std::vector<std::set<std::uint32_t>>& relevant,
                             const std::vector<int>& ks = {1, 3, 5});

/// |A n B| / |A u B|; two empty sets score 1 by convention.
double jaccard(const std::set<std::string>& a, const std::set<std::string>& b);

struct AlertEvalScore {
    double threshold_appropriateness = 0;
    double condition_validity = 0;
    double incident_detection = 0;
    double noise_reduction = 0;
    double specificity = 0;
    double completeness = 0;
    double required_fields = 0;
    bool clamped = false;          // an LLM judge value was out of range
    std::string provenance = "rules";  // rules | llm | llm-fallback

    double aggregate() const {
        return (threshold_appropriateness + condition_validity + incident_detection +
                noise_reduction + specificity + completeness + required_fields) /
               7.0;
    }
};

struct FuzzyMatchWeights {
    double op = 0.4;
    double dimensions = 0.3;
    double threshold = 0.3;
    double match_cutoff = 0.5;  // greedy pairs below this stay unmatched
};

/// Deterministic seven-criterion scoring of predicted vs expected conditions.
/// Matching is greedy on a weighted blend of operator equality, dimension
/// Jaccard and threshold relative error.
AlertEvalScore alert_eval_rules(const std::vector<alert::AlertCondition>& predicted,
                                const std::vector<alert::AlertCondition>& expected,
                                std::optional<double> p1, std::optional<double> p99,
                                const FuzzyMatchWeights& weights = {});

/// LLM judge following the same seven criteria; out-of-range values are
/// clamped and flagged, failures fall back to the rule-based scorer.
AlertEvalScore alert_eval_llm(const std::string& account_context,
                              const std::vector<alert::AlertCondition>& predicted,
                              const std::vector<alert::AlertCondition>& expected,
                              std::optional<double> p1, std::optional<double> p99,
                              alert::LlmClient& client);

}  // namespace monrec::eval
