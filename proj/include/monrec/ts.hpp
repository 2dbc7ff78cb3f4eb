#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "monrec/common.hpp"
#include "monrec/embed.hpp"

// Time-series features, shapelets and the combined ontology+timeseries
// similarity used to retrieve historically similar metrics.

namespace monrec::ts {

struct MetricTimeseries {
    std::string metric_key;
    std::string resource;  // optional resource identifier
    std::vector<double> timestamps;
    std::vector<double> values;
    std::string sampling_kind;

    void validate() const;  // strictly increasing timestamps, equal lengths
};

/// The nine statistics of the empirical monitoring-status study.
struct StatFeatures {
    double minimum = 0, maximum = 0, mean = 0, median = 0, mode = 0;
    double skew = 0, kurtosis = 0;
    double mean_frequency = 0, max_frequency = 0;

    std::vector<double> as_vector() const {
        return {minimum, maximum, mean, median, mode, skew, kurtosis, mean_frequency, max_frequency};
    }
};

/// Frequencies come from the magnitude spectrum of the mean-removed series,
/// expressed in cycles per sample. Needs at least two samples.
StatFeatures stat_features(std::span<const double> values);

struct Shapelet {
    std::vector<double> values;  // z-normalized
    std::size_t offset = 0;      // source position in the series
    bool constant = false;       // true when the source window was flat
    std::size_t length() const { return values.size(); }
};

struct ShapeletParams {
    std::size_t length = 0;  // 0 -> max(8, n/10)
    std::size_t count = 5;
    std::size_t stride = 0;  // 0 -> length/4 (>=1)
};

/// Top-`count` discriminative subsequences: stride-grid candidates scored by
/// the variance of their z-normalized distance profile over the series, with
/// >=50% overlap suppression.
std::vector<Shapelet> extract_shapelets(std::span<const double> values, ShapeletParams params = {});

/// Shape-based distance in [0,2]: 1 - max over full-overlap alignments of the
/// normalized cross-correlation of the z-normalized sequences. Equal-length
/// inputs have a single alignment. Constant inputs: 0 when both are constant,
/// 1 when only one is.
double shapelet_distance(const Shapelet& a, const Shapelet& b);

/// Min pairwise shapelet distance between two shapelet sets; 2 when either
/// set is empty.
double series_shapelet_distance(const std::vector<Shapelet>& a, const std::vector<Shapelet>& b);

struct SimilarityScore {
    double text = 0.5;      // [0,1]
    double timeseries = 0.5;  // [0,1]; 0.5 when either side lacks a series
    double combined = 0.5;
    double weight = 0.5;
};

struct MetricRecord {
    std::string key;
    std::string ontology;
    embed::Vec text_embedding;
    std::vector<Shapelet> shapelets;  // empty when no series is known
    bool has_series = false;
};

SimilarityScore metric_similarity(const MetricRecord& a, const MetricRecord& b, double weight = 0.5);

struct SimilarMetric {
    std::string key;
    double score = 0.0;
    double base_score = 0.0;
    std::optional<double> rescoring;  // LLM description-match score when used
};

/// Optional external rescoring hook: returns a [0,1] description-match score
/// for (query ontology, candidate ontology) or throws.
using RescoreFn = std::function<double(const std::string&, const std::string&)>;

struct CorpusIndex {
    std::vector<MetricRecord> records;
    std::size_t shortlist = 20;

    /// Top-k by combined similarity; a rescoring client refines the shortlist
    /// by averaging a [0,1] description-match score with the base score.
    /// Rescoring failures degrade to base scores.
    std::vector<SimilarMetric> top_k_similar(const MetricRecord& query, std::size_t k,
                                             double weight = 0.5,
                                             const RescoreFn& rescore = nullptr) const;
};

// ---- timeseries document (monrec.timeseries.v1, line-delimited) ----
void save_timeseries(const std::vector<MetricTimeseries>& series, const std::string& path);
std::vector<MetricTimeseries> load_timeseries(const std::string& path);

}  // namespace monrec::ts
