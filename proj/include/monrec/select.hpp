#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "monrec/common.hpp"
#include "monrec/embed.hpp"
#include "monrec/optim.hpp"
#include "monrec/tensor.hpp"

// Metric selection: a global classifier over pooled text features, a local
// latent-space kNN vote per account, and their ensemble.

namespace monrec::select {

/// One dataset record (monrec.selectdata.v1).
struct MetricSample {
    std::string account;
    std::string metric_key;
    std::string service_text;
    std::vector<std::string> dependent_texts;
    std::string metric_text;
    std::vector<std::string> dimension_texts;
    int label = 0;  // 1 = monitored
    double timestamp = 0.0;
};

void save_select_dataset(const std::vector<MetricSample>& samples, const std::string& path);
std::vector<MetricSample> load_select_dataset(const std::string& path);

enum class Variant { BCE, KNN, Ens };
std::string_view to_string(Variant v);
Variant variant_from_string(std::string_view s);

enum class Objective { BceOnly, ContrastiveOnly, Joint };

struct SelectConfig {
    std::size_t embed_width = 256;  // d; the feature vector is 4d wide
    std::size_t hidden = 256;       // MLP width; the second layer is the latent e_k
    double alpha = 0.5;             // joint loss mix
    double gamma = 1.0;             // contrastive margin
    bool literal_centroid_term = false;  // keep the printed (uncorrected) centroid sign
    int knn_k = 5;
    int max_negatives = 10;
    int max_positives = 3;
    std::size_t max_anchors_per_epoch = 128;
    int max_epochs = 200;
    double lr = 1e-3;
    double weight_decay = 1e-5;
    std::array<double, 3> split_ratios{0.8, 0.1, 0.1};  // by timestamp order
    Objective objective = Objective::Joint;
    std::uint64_t seed = 7;
};

/// Builds the 4d feature vector: mean-pooled set embeddings of the service
/// text, dependent-service texts, metric text and dimension texts, in that
/// order.
std::vector<double> build_feature(embed::Embedder& embedder, const MetricSample& sample);

struct SelectModel {
    SelectConfig config;
    optim::ParamStore params;  // layer1.{w,b}, layer2.{w,b}, head.{w,b}

    /// Forward pass without a tape. Returns per-row latent embeddings and
    /// monitoring probabilities.
    void forward(const tensor::Tensor& features, tensor::Tensor* latent,
                 std::vector<double>* probs) const;
};

SelectModel init_select_model(const SelectConfig& config, std::uint64_t seed);

// ---- losses (tape-level for training; tests check them against scalar oracles) ----
tensor::Var loss_bce(tensor::Tape& tape, tensor::Var probs, const std::vector<int>& labels);
tensor::Var loss_contrastive(tensor::Tape& tape, tensor::Var latent, std::size_t anchor_row,
                             const std::vector<std::size_t>& positive_rows,
                             const std::vector<std::size_t>& negative_rows, double gamma,
                             bool literal_centroid);
tensor::Var loss_joint(tensor::Tape& tape, tensor::Var bce, tensor::Var contrastive, double alpha);

// scalar conveniences used by tests and reporting
double loss_bce_value(const std::vector<double>& probs, const std::vector<int>& labels);
double loss_contrastive_value(const std::vector<double>& anchor,
                              const std::vector<std::vector<double>>& positives,
                              const std::vector<std::vector<double>>& negatives, double gamma,
                              bool literal_centroid = false);

/// Per-account latent history for the kNN vote. Only entries of the query's
/// account are ever consulted.
class KnnIndex {
public:
    void add(const std::string& account, std::vector<double> latent, int label,
             std::string metric_key);
    /// Fraction of the k nearest same-account labeled metrics that are
    /// monitored; uses all when fewer than k exist. Throws Error when the
    /// account has no history (caller falls back to the global decision).
    /// `exclude_key` drops the query's own historical entry.
    double vote(const std::string& account, const std::vector<double>& query, int k,
                const std::string& exclude_key = "") const;
    std::size_t account_size(const std::string& account) const;

private:
    struct Entry {
        std::vector<double> latent;
        int label;
        std::string metric_key;
    };
    std::map<std::string, std::vector<Entry>> accounts_;
};

/// Decision rules: BCE p>0.5, KNN vote>0.5, Ens mean>0.5 (tie = not monitored).
bool decide(Variant variant, double p_global, double knn_fraction);

struct SelectDecision {
    std::string metric_key;
    double p_global = 0.0;
    double knn_vote = 0.0;  // 0.5 stands in when the account has no history
    bool decision = false;
    Variant variant = Variant::Ens;
};

void save_decisions(const std::vector<SelectDecision>& decisions, const std::string& path);

struct EpochStat {
    int epoch;
    double train_loss;
    double val_metric;
    double lr;
};

struct TrainReport {
    std::vector<EpochStat> epochs;
    double best_val_metric = 0.0;
    bool early_stopped = false;
    std::vector<std::size_t> train_idx, val_idx, test_idx;
};

/// Trains on a time-based split with Adam, plateau scheduling and early
/// stopping. The validation metric is decision accuracy under the variant
/// matching the configured objective.
SelectModel train_select(const std::vector<MetricSample>& samples,
                         const std::vector<std::vector<double>>& features,
                         const SelectConfig& config, TrainReport* report = nullptr);

/// Latent index over the given rows (normally the train split).
KnnIndex build_knn_index(const SelectModel& model, const std::vector<MetricSample>& samples,
                         const std::vector<std::vector<double>>& features,
                         const std::vector<std::size_t>& rows);

}  // namespace monrec::select
