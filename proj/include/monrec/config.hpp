#pragma once

#include <string>

#include "monrec/datagen.hpp"
#include "monrec/embed.hpp"
#include "monrec/eval.hpp"
#include "monrec/ranker.hpp"
#include "monrec/select.hpp"

// Whole-application configuration: one human-editable JSON document carrying
// every tunable default. Environment keys EMBED_ENDPOINT/EMBED_KEY and
// LLM_ENDPOINT/LLM_KEY switch the external providers on.

namespace monrec::config {

struct SimilarityConfig {
    double weight = 0.5;          // text vs timeseries mix
    std::size_t shortlist = 20;   // pre-rescoring shortlist
    std::size_t top_k = 5;        // similar metrics retrieved per query
    std::size_t shapelet_count = 5;
    std::size_t shapelet_length = 0;  // 0 -> max(8, n/10)
};

struct AlertConfig {
    std::size_t max_similar = 5;
    std::size_t token_budget = 4000;
    int retry_budget = 2;
    std::string llm_model = "configured-model";
    int llm_timeout_ms = 30000;
};

struct AppConfig {
    std::uint64_t seed = 7;
    std::size_t embed_width = 256;

    select::SelectConfig select;
    ranker::RankerConfig ranker;  // hidden/output widths shared by both tasks
    datagen::GenConfig datagen;
    SimilarityConfig similarity;
    AlertConfig alert;
    eval::FuzzyMatchWeights fuzzy;

    bool no_llm = false;  // forces the deterministic fallback everywhere

    /// Applies the shared seed and embed width to the nested configs.
    void propagate();
};

AppConfig default_config();

/// Small widths for laptop-scale runs; spec-scale layer sizes stay in the
/// default document.
AppConfig desk_config();

std::string to_json_string(const AppConfig& cfg);
AppConfig from_json_string(const std::string& text);
void save_config(const AppConfig& cfg, const std::string& path);
AppConfig load_config(const std::string& path);

/// Environment-backed provider settings (EMBED_ENDPOINT, EMBED_KEY).
embed::EmbedderOptions embedder_options(const AppConfig& cfg);

/// LLM client config from LLM_ENDPOINT / LLM_KEY; nullopt when unset or
/// no_llm is on.
std::optional<alert::LlmClientConfig> llm_client_config(const AppConfig& cfg);

std::string config_hash(const AppConfig& cfg);

}  // namespace monrec::config
