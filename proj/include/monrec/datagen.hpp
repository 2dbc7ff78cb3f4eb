#pragma once

#include <map>
#include <string>
#include <vector>

#include "monrec/alert.hpp"
#include "monrec/common.hpp"
#include "monrec/graph.hpp"
#include "monrec/select.hpp"
#include "monrec/ts.hpp"

// Synthetic monitor-entity corpora whose statistics match the empirical
// observations the models are built on: sparse dimension selection, a
// concentrated operator mix, two dimension co-occurrence clusters, activity
// -bearing series only for monitored metrics, and family-shared alert
// thresholds that correlate with metric similarity.

namespace monrec::datagen {

enum class LabelMode {
    Separable,  // monitoring status is a global function of the metric text
    Local,      // half the metrics flip with the account group (kNN territory)
    Null,       // labels independent of everything
};
std::string_view to_string(LabelMode m);
LabelMode label_mode_from_string(std::string_view s);

struct GenConfig {
    std::size_t services = 100;
    std::size_t monitors = 1000;
    std::size_t metrics = 700;
    std::size_t dimensions = 350;
    std::size_t expressions = 500;

    double dimension_degree_exponent = 1.5;  // popularity power law
    double subset_selection_rate = 0.94;     // strict-subset fraction target
    std::map<std::string, double> operator_mix = {
        {"Count", 0.35}, {"Sum", 0.28},  {"Average", 0.20}, {"Percentile", 0.05},
        {"Rate", 0.04},  {"QoS", 0.03},  {"Max", 0.02},     {"Min", 0.02},
        {"other", 0.01}};
    int dimension_cluster_count = 2;
    double similarity_threshold_corr = 0.4;  // planted correlation target
    double threshold_jitter = 0.08;          // within-family lognormal sigma
    double dim_choice_noise = 0.05;          // chance to perturb a planted subset
    std::size_t max_planted_dims = 3;        // cap on a monitor's chosen subset
    std::size_t min_candidate_dims = 7;
    std::size_t max_candidate_dims = 13;
    std::size_t series_length = 288;
    double anomaly_rate = 0.03;
    double duplicate_rate = 0.05;  // near-duplicate metric pairs
    LabelMode label_mode = LabelMode::Separable;
    double local_fraction = 0.5;  // Local mode: share of account-flipped metrics
    std::uint64_t seed = 7;

    void validate() const;
};

struct GroundTruth {
    // per-monitor planted structure
    std::map<std::string, std::vector<std::string>> monitor_dimensions;
    std::map<std::string, std::string> monitor_expression;
    std::map<std::string, std::vector<alert::AlertCondition>> monitor_conditions;
    // per-metric structure
    std::map<std::string, int> metric_label;
    std::map<std::string, std::size_t> metric_family;
    std::map<std::string, double> metric_threshold;
    std::map<std::string, std::string> duplicate_partner;
    std::map<std::string, std::vector<alert::AlertCondition>> metric_conditions;
    std::map<std::string, std::size_t> family_shape;  // family id -> shape class
};

struct Dataset {
    graph::EntityGraph graph;
    std::vector<ts::MetricTimeseries> series;
    std::vector<select::MetricSample> select_samples;
    GroundTruth truth;
    GenConfig config;
};

/// Deterministic for a fixed seed.
Dataset generate(const GenConfig& config);

/// Aggregation operator of an expression node; by generator convention the
/// ontology text starts with the operator name.
alert::AggOp expression_operator(const std::string& ontology);

struct StatsReport {
    double subset_selection_fraction = 0.0;
    bool subset_selection_pass = false;
    double count_sum_average_share = 0.0;
    bool operator_mix_pass = false;
    double listed_operator_share = 0.0;
    bool listed_operator_pass = false;
    double dimension_correlation_silhouette = 0.0;
    bool bimodality_pass = false;
    double similarity_threshold_correlation = 0.0;
    bool correlation_pass = false;
    double long_tail_top20_share = 0.0;  // informational
    bool all_pass() const {
        return subset_selection_pass && operator_mix_pass && listed_operator_pass &&
               bimodality_pass && correlation_pass;
    }
};

/// Measures the planted statistics back out of a dataset and checks them
/// against the config targets. Failures land in the report, not in throws.
StatsReport validate_stats(const Dataset& dataset);

std::string stats_report_to_string(const StatsReport& report);

// ---- ground-truth document (monrec.groundtruth.v1) ----
void save_ground_truth(const GroundTruth& truth, const std::string& path);
GroundTruth load_ground_truth(const std::string& path);

}  // namespace monrec::datagen
