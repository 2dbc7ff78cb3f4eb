#pragma once

#include <memory>
#include <mutex>
#include <set>
#include <optional>
#include <string>
#include <vector>

#include "monrec/alert.hpp"
#include "monrec/config.hpp"
#include "monrec/datagen.hpp"
#include "monrec/eval.hpp"
#include "monrec/graph.hpp"
#include "monrec/ranker.hpp"
#include "monrec/select.hpp"
#include "monrec/ts.hpp"

// End-to-end orchestration: metric selection -> dimension ranking ->
// expression ranking -> similar-metric retrieval -> alert synthesis ->
// monitor configuration, plus training, the evaluation grid, the serve loop
// and feedback ingestion.

namespace monrec::pipeline {

/// On-disk dataset layout inside one directory.
struct StorePaths {
    std::string dir;
    std::string graph() const { return dir + "/graph.jsonl"; }
    std::string series() const { return dir + "/timeseries.jsonl"; }
    std::string samples() const { return dir + "/select_dataset.jsonl"; }
    std::string truth() const { return dir + "/ground_truth.json"; }
};

struct Stores {
    graph::EntityGraph graph;
    std::vector<ts::MetricTimeseries> series;
    std::vector<select::MetricSample> samples;
    datagen::GroundTruth truth;  // historical conditions/labels store
};

void save_stores(const datagen::Dataset& dataset, const StorePaths& paths);
Stores load_stores(const StorePaths& paths);

struct Checkpoints {
    select::SelectModel select_bce;    // trained with the BCE objective
    select::SelectModel select_knn;    // trained with the contrastive objective
    select::SelectModel select_joint;  // joint objective, powers the ensemble
    ranker::RankerModel dim_ranker;
    ranker::RankerModel exp_ranker;
};

struct TrainSummary {
    select::TrainReport select_bce, select_knn, select_joint;
    ranker::RankTrainReport dim_report, exp_report;
};

/// Trains every learnable component and writes checkpoints plus per-epoch
/// reports under `out_dir`.
Checkpoints train_all(const config::AppConfig& cfg, const Stores& stores,
                      const std::string& out_dir, TrainSummary* summary = nullptr);

Checkpoints load_checkpoints(const config::AppConfig& cfg, const Stores& stores,
                             const std::string& dir);

struct MetricPlan {
    std::string metric_key;
    std::vector<std::pair<std::string, double>> dimension_scores;   // ranked
    std::vector<std::string> dimensions;                            // chosen top slice
    std::vector<std::pair<std::string, double>> expression_scores;  // ranked head
    std::string expression_key;
    std::vector<ts::SimilarMetric> similar;
    std::vector<alert::AlertCondition> conditions;
    std::string rationale;
};

struct RecommendationBundle {
    std::string id;  // content hash
    std::string account;
    std::string status;  // ok | nothing-to-monitor
    select::Variant variant = select::Variant::Ens;
    std::vector<select::SelectDecision> decisions;
    std::vector<MetricPlan> plans;
    std::string monitor_config;  // monrec.monitorconfig.v1 document text
    std::string config_hash;
    std::string dataset_hash;
    std::vector<std::string> stage_artifacts;  // audit trail when persisted
};

std::string bundle_to_string(const RecommendationBundle& bundle);
RecommendationBundle bundle_from_string(const std::string& text);

struct RecommendOptions {
    select::Variant variant = select::Variant::Ens;
    bool use_dim_ranker = true;   // off = text-similarity fallback ranking
    bool use_exp_ranker = true;
    std::size_t top_dims = 3;
    std::string out_dir;  // persist per-stage artifacts when set
};

/// Binds config, stores and checkpoints; reused by the CLI and the serve
/// loop. Read-only after construction, safe for concurrent recommends.
class Engine {
public:
    Engine(config::AppConfig cfg, Stores stores, Checkpoints checkpoints);

    RecommendationBundle recommend(const std::string& account, const RecommendOptions& opts = {});

    /// Line protocol: {"action":"recommend","account":...} or
    /// {"action":"ingest-feedback","record":{...}}. Always answers one JSON
    /// line; malformed input yields {"ok":false,"error":...}.
    std::string handle_request(const std::string& line);

    void set_feedback_log(std::string path) { feedback_log_ = std::move(path); }
    const Stores& stores() const { return stores_; }
    const config::AppConfig& app_config() const { return cfg_; }
    std::string dataset_hash() const { return dataset_hash_; }

private:
    config::AppConfig cfg_;
    Stores stores_;
    Checkpoints ckpt_;
    std::unique_ptr<embed::Embedder> embedder_;
    std::unique_ptr<alert::LlmClient> llm_;
    ranker::TaskGraph dim_graph_, exp_graph_;
    ts::CorpusIndex corpus_;
    select::KnnIndex knn_index_;
    std::vector<std::vector<double>> features_;  // aligned with stores_.samples
    std::map<std::string, std::size_t> sample_by_key_;
    std::string dataset_hash_;
    std::string feedback_log_;
    std::set<std::string> issued_bundles_;
    std::mutex feedback_mu_;
};

// ---- evaluation grid (selection variants x dimension/expression modules) ----
struct EvalCell {
    std::string variant;  // BCE | KNN | Ens
    bool dim_module = false;
    bool exp_module = false;
    eval::ClassificationReport selection;
    double dimension_jaccard = 0.0;
    double expression_mrr = 0.0;
    double alert_aggregate = 0.0;
};

struct EvalReport {
    std::vector<EvalCell> cells;
    std::string config_hash;
    std::string dataset_hash;
    std::string timestamp;  // informational; excluded from determinism checks
};

EvalReport evaluate(const config::AppConfig& cfg, const Stores& stores,
                    const Checkpoints& checkpoints, std::size_t sample_monitors = 150);
std::string eval_report_to_string(const EvalReport& report);

// ---- feedback ----
struct FeedbackRecord {
    std::string bundle_id;
    std::string verdict;  // accepted | rejected | modified
    std::optional<std::string> corrected_config;  // monitor config document
    std::optional<std::string> incident;          // detected | missed | noisy
    double timestamp = 0.0;

    void validate() const;
};

nlohmann::ordered_json feedback_to_json(const FeedbackRecord& r);
FeedbackRecord feedback_from_json(const nlohmann::json& j);
void append_feedback(const std::string& path, const FeedbackRecord& record);
std::vector<FeedbackRecord> load_feedback(const std::string& path);

/// Monitor configs from accepted/modified records; corrected documents win
/// over the originally issued bundle.
std::vector<alert::MonitorConfig> accepted_configs(const std::vector<FeedbackRecord>& log,
                                                   const std::string& bundles_dir);

/// Adds the configs' monitors and their supervision edges; existing nodes
/// and edges are reused, so replaying a log is idempotent.
graph::EntityGraph augment_with_configs(const graph::EntityGraph& g,
                                        const std::vector<alert::MonitorConfig>& configs);

}  // namespace monrec::pipeline
