#include "monrec/eval.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace monrec::eval {

ClassificationReport classification_report(const std::vector<int>& preds,
                                           const std::vector<int>& labels) {
    if (preds.empty() || preds.size() != labels.size())
        throw Error("classification_report: need equal-length non-empty inputs");
    double tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] != 0 && preds[i] != 1) throw Error("classification_report: predictions must be binary");
        if (labels[i] != 0 && labels[i] != 1) throw Error("classification_report: labels must be binary");
        if (preds[i] == 1 && labels[i] == 1) ++tp;
        else if (preds[i] == 1) ++fp;
        else if (labels[i] == 1) ++fn;
        else ++tn;
    }
    const double n = static_cast<double>(preds.size());
    ClassificationReport r;
    r.accuracy = (tp + tn) / n;
    r.precision = (tp + fp) > 0 ? tp / (tp + fp) : 0.0;
    r.recall = (tp + fn) > 0 ? tp / (tp + fn) : 0.0;
    r.f1 = (r.precision + r.recall) > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
    // per-class F1 for the negative class
    const double prec_neg = (tn + fn) > 0 ? tn / (tn + fn) : 0.0;
    const double rec_neg = (tn + fp) > 0 ? tn / (tn + fp) : 0.0;
    const double f1_neg = (prec_neg + rec_neg) > 0 ? 2 * prec_neg * rec_neg / (prec_neg + rec_neg) : 0.0;
    r.macro_f1 = (r.f1 + f1_neg) / 2.0;
    r.hamming = 1.0 - r.accuracy;
    return r;
}

RankingReport ranking_report(const std::vector<std::vector<std::uint32_t>>& ranked,
                             const std::vector<std::set<std::uint32_t>>& relevant,
                             const std::vector<int>& ks) {
    if (ranked.size() != relevant.size())
        throw Error("ranking_report: ranked lists and relevance sets differ in count");
    if (ranked.empty()) throw Error("ranking_report: no queries");

    RankingReport rep;
    for (int k : ks) {
        rep.hit_ratio[k] = 0;
        rep.ndcg[k] = 0;
        rep.recall[k] = 0;
    }
    const double q = static_cast<double>(ranked.size());
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        const auto& list = ranked[i];
        const auto& rel = relevant[i];
        // first relevant rank (1-based)
        std::size_t first = 0;
        for (std::size_t pos = 0; pos < list.size(); ++pos)
            if (rel.count(list[pos])) {
                first = pos + 1;
                break;
            }
        if (first > 0) rep.mrr += 1.0 / static_cast<double>(first);

        for (int k : ks) {
            const std::size_t kk = static_cast<std::size_t>(k);
            std::size_t hits = 0;
            double dcg = 0.0;
            for (std::size_t pos = 0; pos < std::min(kk, list.size()); ++pos) {
                if (rel.count(list[pos])) {
                    ++hits;
                    dcg += 1.0 / std::log2(static_cast<double>(pos) + 2.0);
                }
            }
            double idcg = 0.0;
            const std::size_t ideal = std::min(kk, rel.size());
            for (std::size_t pos = 0; pos < ideal; ++pos)
                idcg += 1.0 / std::log2(static_cast<double>(pos) + 2.0);
            if (hits > 0) rep.hit_ratio[k] += 1.0;
            if (idcg > 0) rep.ndcg[k] += dcg / idcg;
            if (!rel.empty()) rep.recall[k] += static_cast<double>(hits) / static_cast<double>(rel.size());
        }
    }
    rep.mrr /= q;
    for (int k : ks) {
        rep.hit_ratio[k] /= q;
        rep.ndcg[k] /= q;
        rep.recall[k] /= q;
    }
    return rep;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() && b.empty()) return 1.0;
    std::size_t inter = 0;
    for (const auto& x : a) inter += b.count(x);
    const std::size_t uni = a.size() + b.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

double threshold_agreement(const alert::AlertCondition& p, const alert::AlertCondition& e) {
    if (!p.threshold || !e.threshold) return (!p.threshold && !e.threshold) ? 1.0 : 0.0;
    const double rel = std::abs(*p.threshold - *e.threshold) / std::max(std::abs(*e.threshold), 1e-9);
    if (rel <= 0.1) return 1.0;
    return std::max(0.0, 1.0 - (rel - 0.1));
}

double fuzzy_similarity(const alert::AlertCondition& p, const alert::AlertCondition& e,
                        const FuzzyMatchWeights& w) {
    std::set<std::string> pd(p.dimension_keys.begin(), p.dimension_keys.end());
    std::set<std::string> ed(e.dimension_keys.begin(), e.dimension_keys.end());
    return w.op * (p.op == e.op ? 1.0 : 0.0) + w.dimensions * jaccard(pd, ed) +
           w.threshold * threshold_agreement(p, e);
}

bool has_required_fields(const alert::AlertCondition& c) {
    return !c.expression_key.empty() && c.threshold.has_value() && c.window >= 1 && c.severity >= 1;
}

}  // namespace

AlertEvalScore alert_eval_rules(const std::vector<alert::AlertCondition>& predicted,
                                const std::vector<alert::AlertCondition>& expected,
                                std::optional<double> p1, std::optional<double> p99,
                                const FuzzyMatchWeights& weights) {
    AlertEvalScore score;
    score.provenance = "rules";

    if (predicted.empty()) {
        // nothing predicted: silent on everything expected, but also no noise
        const bool vacuous = expected.empty();
        score.threshold_appropriateness = vacuous ? 1.0 : 0.0;
        score.condition_validity = vacuous ? 1.0 : 0.0;
        score.incident_detection = vacuous ? 1.0 : 0.0;
        score.noise_reduction = 1.0;
        score.specificity = vacuous ? 1.0 : 0.0;
        score.completeness = vacuous ? 1.0 : 0.0;
        score.required_fields = vacuous ? 1.0 : 0.0;
        return score;
    }

    // greedy one-to-one matching by descending fuzzy similarity
    struct Pair {
        std::size_t pi, ei;
        double sim;
    };
    std::vector<Pair> pairs;
    for (std::size_t pi = 0; pi < predicted.size(); ++pi)
        for (std::size_t ei = 0; ei < expected.size(); ++ei)
            pairs.push_back({pi, ei, fuzzy_similarity(predicted[pi], expected[ei], weights)});
    std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
        if (a.sim != b.sim) return a.sim > b.sim;
        if (a.pi != b.pi) return a.pi < b.pi;
        return a.ei < b.ei;
    });
    std::vector<bool> p_used(predicted.size(), false), e_used(expected.size(), false);
    double matched_quality = 0.0;
    std::size_t matched = 0;
    for (const Pair& pr : pairs) {
        if (pr.sim < weights.match_cutoff) break;
        if (p_used[pr.pi] || e_used[pr.ei]) continue;
        p_used[pr.pi] = true;
        e_used[pr.ei] = true;
        matched_quality += pr.sim;
        ++matched;
    }

    const double np = static_cast<double>(predicted.size());
    const double ne = static_cast<double>(expected.size());

    double validity = 0.0, fields = 0.0, thr = 0.0;
    for (const alert::AlertCondition& c : predicted) {
        validity += c.is_valid() ? 1.0 : 0.0;
        fields += has_required_fields(c) ? 1.0 : 0.0;

        // threshold appropriateness: inside the percentile-anchored band or
        // within 10% of an expected threshold scores 1, degrading linearly
        double best = 0.0;
        if (c.threshold) {
            if (p1 && p99) {
                const double range = std::max(*p99 - *p1, 1e-9);
                if (*c.threshold >= *p1 - 0.05 * range && *c.threshold <= *p99 + 0.05 * range)
                    best = 1.0;
            }
            double min_rel = std::numeric_limits<double>::infinity();
            for (const alert::AlertCondition& e : expected)
                if (e.threshold)
                    min_rel = std::min(min_rel, std::abs(*c.threshold - *e.threshold) /
                                                    std::max(std::abs(*e.threshold), 1e-9));
            if (std::isfinite(min_rel))
                best = std::max(best, min_rel <= 0.1 ? 1.0 : std::max(0.0, 1.0 - (min_rel - 0.1)));
            if (!p1 && expected.empty()) best = 0.5;  // nothing to judge against
        }
        thr += best;
    }
    score.condition_validity = validity / np;
    score.required_fields = fields / np;
    score.threshold_appropriateness = thr / np;

    score.completeness = ne == 0 ? 1.0 : static_cast<double>(matched) / ne;
    score.incident_detection = ne == 0 ? 1.0 : matched_quality / ne;
    score.specificity = static_cast<double>(matched) / np;
    score.noise_reduction = np <= ne ? 1.0 : ne / np;
    return score;
}

AlertEvalScore alert_eval_llm(const std::string& account_context,
                              const std::vector<alert::AlertCondition>& predicted,
                              const std::vector<alert::AlertCondition>& expected,
                              std::optional<double> p1, std::optional<double> p99,
                              alert::LlmClient& client) {
    std::string prompt;
    prompt += "You are evaluating alert recommendations for a cloud monitoring system.\n\n";
    prompt += "Account Context: " + account_context + "\n\n";
    prompt += "Alert Conditions to evaluate:\n";
    for (const auto& c : predicted) prompt += "  " + alert::to_json(c).dump() + "\n";
    prompt += "\nActual Alert Conditions Set:\n";
    for (const auto& c : expected) prompt += "  " + alert::to_json(c).dump() + "\n";
    prompt += "\n1st percentile of the metrics' timeseries data: ";
    prompt += p1 ? std::to_string(*p1) : std::string("unknown");
    prompt += "\n99th percentile of the metrics' timeseries data: ";
    prompt += p99 ? std::to_string(*p99) : std::string("unknown");
    prompt +=
        "\n\nEvaluation Criteria (rate each from [0,1], higher the better):\n"
        "1. Threshold Appropriateness\n2. Condition Validity\n3. Detecting Customer Incidents\n"
        "4. Noise reduction\n5. Specificity\n6. Completeness of alerts\n7. Checks for required fields\n\n"
        "Response Format: {\"threshold_appropriateness\": x, \"condition_validity\": x, "
        "\"incident_detection\": x, \"noise_reduction\": x, \"specificity\": x, "
        "\"completeness\": x, \"required_fields\": x}\n";

    try {
        const std::string text = client.complete(prompt, "monrec.alerteval.v1");
        nlohmann::json doc = nlohmann::json::parse(text);
        AlertEvalScore s;
        s.provenance = "llm";
        auto read = [&](const char* key, double& slot) {
            const double v = doc.at(key).get<double>();
            slot = std::clamp(v, 0.0, 1.0);
            if (slot != v) s.clamped = true;
        };
        read("threshold_appropriateness", s.threshold_appropriateness);
        read("condition_validity", s.condition_validity);
        read("incident_detection", s.incident_detection);
        read("noise_reduction", s.noise_reduction);
        read("specificity", s.specificity);
        read("completeness", s.completeness);
        read("required_fields", s.required_fields);
        return s;
    } catch (const std::exception&) {
        AlertEvalScore s = alert_eval_rules(predicted, expected, p1, p99);
        s.provenance = "llm-fallback";
        return s;
    }
}

}  // namespace monrec::eval
