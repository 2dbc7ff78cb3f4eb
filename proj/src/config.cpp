#include "monrec/config.hpp"

#include <cstdlib>
#include <fstream>

#include <json.hpp>

namespace monrec::config {

void AppConfig::propagate() {
    select.embed_width = embed_width;
    select.seed = seed;
    datagen.seed = seed;
    ranker.seed = seed;
}

AppConfig default_config() {
    AppConfig cfg;  // member defaults mirror the documented values
    cfg.propagate();
    return cfg;
}

AppConfig desk_config() {
    AppConfig cfg;
    cfg.embed_width = 48;
    cfg.select.hidden = 48;
    cfg.select.max_epochs = 120;
    cfg.select.knn_k = 3;  // accounts hold ~3 same-family peers at desk scale
    cfg.select.max_anchors_per_epoch = 256;
    cfg.select.max_positives = 4;
    cfg.ranker.hidden = {64, 32};
    cfg.ranker.output_dim_rec = 32;
    cfg.ranker.output_exp_rec = 16;
    cfg.ranker.heads = 4;
    cfg.ranker.max_epochs = 60;
    cfg.ranker.walks_per_node = 12;
    cfg.propagate();
    return cfg;
}

namespace {

nlohmann::ordered_json ranker_to_json(const ranker::RankerConfig& r) {
    nlohmann::ordered_json j;
    j["layers"] = r.layers;
    j["hidden"] = r.hidden;
    j["output_dim_rec"] = r.output_dim_rec;
    j["output_exp_rec"] = r.output_exp_rec;
    j["heads"] = r.heads;
    j["conventional_attention_scale"] = r.conventional_attention_scale;
    j["use_ranking_loss"] = r.use_ranking_loss;
    j["use_metapaths"] = r.use_metapaths;
    j["walk_length"] = r.walk_length;
    j["walks_per_node"] = r.walks_per_node;
    j["max_negatives"] = r.max_negatives;
    j["lr"] = r.lr;
    j["weight_decay"] = r.weight_decay;
    j["max_epochs"] = r.max_epochs;
    j["split_ratios"] = r.split_ratios;
    j["mp_fraction"] = r.mp_fraction;
    return j;
}

void ranker_from_json(const nlohmann::json& j, ranker::RankerConfig& r) {
    r.layers = j.value("layers", r.layers);
    r.hidden = j.value("hidden", r.hidden);
    r.output_dim_rec = j.value("output_dim_rec", r.output_dim_rec);
    r.output_exp_rec = j.value("output_exp_rec", r.output_exp_rec);
    r.heads = j.value("heads", r.heads);
    r.conventional_attention_scale =
        j.value("conventional_attention_scale", r.conventional_attention_scale);
    r.use_ranking_loss = j.value("use_ranking_loss", r.use_ranking_loss);
    r.use_metapaths = j.value("use_metapaths", r.use_metapaths);
    r.walk_length = j.value("walk_length", r.walk_length);
    r.walks_per_node = j.value("walks_per_node", r.walks_per_node);
    r.max_negatives = j.value("max_negatives", r.max_negatives);
    r.lr = j.value("lr", r.lr);
    r.weight_decay = j.value("weight_decay", r.weight_decay);
    r.max_epochs = j.value("max_epochs", r.max_epochs);
    r.split_ratios = j.value("split_ratios", r.split_ratios);
    r.mp_fraction = j.value("mp_fraction", r.mp_fraction);
}

}  // namespace

std::string to_json_string(const AppConfig& cfg) {
    nlohmann::ordered_json j;
    j["schema"] = "monrec.config.v1";
    j["seed"] = cfg.seed;
    j["embed_width"] = cfg.embed_width;
    j["no_llm"] = cfg.no_llm;

    nlohmann::ordered_json js;
    js["hidden"] = cfg.select.hidden;
    js["alpha"] = cfg.select.alpha;
    js["gamma"] = cfg.select.gamma;
    js["literal_centroid_term"] = cfg.select.literal_centroid_term;
    js["knn_k"] = cfg.select.knn_k;
    js["max_negatives"] = cfg.select.max_negatives;
    js["max_positives"] = cfg.select.max_positives;
    js["max_anchors_per_epoch"] = cfg.select.max_anchors_per_epoch;
    js["max_epochs"] = cfg.select.max_epochs;
    js["lr"] = cfg.select.lr;
    js["weight_decay"] = cfg.select.weight_decay;
    js["split_ratios"] = cfg.select.split_ratios;
    j["select"] = std::move(js);

    j["ranker"] = ranker_to_json(cfg.ranker);

    nlohmann::ordered_json jd;
    jd["services"] = cfg.datagen.services;
    jd["monitors"] = cfg.datagen.monitors;
    jd["metrics"] = cfg.datagen.metrics;
    jd["dimensions"] = cfg.datagen.dimensions;
    jd["expressions"] = cfg.datagen.expressions;
    jd["dimension_degree_exponent"] = cfg.datagen.dimension_degree_exponent;
    jd["subset_selection_rate"] = cfg.datagen.subset_selection_rate;
    jd["operator_mix"] = cfg.datagen.operator_mix;
    jd["dimension_cluster_count"] = cfg.datagen.dimension_cluster_count;
    jd["similarity_threshold_corr"] = cfg.datagen.similarity_threshold_corr;
    jd["threshold_jitter"] = cfg.datagen.threshold_jitter;
    jd["dim_choice_noise"] = cfg.datagen.dim_choice_noise;
    jd["min_candidate_dims"] = cfg.datagen.min_candidate_dims;
    jd["max_candidate_dims"] = cfg.datagen.max_candidate_dims;
    jd["series_length"] = cfg.datagen.series_length;
    jd["anomaly_rate"] = cfg.datagen.anomaly_rate;
    jd["duplicate_rate"] = cfg.datagen.duplicate_rate;
    jd["label_mode"] = datagen::to_string(cfg.datagen.label_mode);
    jd["local_fraction"] = cfg.datagen.local_fraction;
    j["datagen"] = std::move(jd);

    nlohmann::ordered_json jm;
    jm["weight"] = cfg.similarity.weight;
    jm["shortlist"] = cfg.similarity.shortlist;
    jm["top_k"] = cfg.similarity.top_k;
    jm["shapelet_count"] = cfg.similarity.shapelet_count;
    jm["shapelet_length"] = cfg.similarity.shapelet_length;
    j["similarity"] = std::move(jm);

    nlohmann::ordered_json ja;
    ja["max_similar"] = cfg.alert.max_similar;
    ja["token_budget"] = cfg.alert.token_budget;
    ja["retry_budget"] = cfg.alert.retry_budget;
    ja["llm_model"] = cfg.alert.llm_model;
    ja["llm_timeout_ms"] = cfg.alert.llm_timeout_ms;
    j["alert"] = std::move(ja);

    nlohmann::ordered_json jf;
    jf["op"] = cfg.fuzzy.op;
    jf["dimensions"] = cfg.fuzzy.dimensions;
    jf["threshold"] = cfg.fuzzy.threshold;
    jf["match_cutoff"] = cfg.fuzzy.match_cutoff;
    j["fuzzy_match"] = std::move(jf);

    return j.dump(2);
}

AppConfig from_json_string(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("config: ") + e.what(), 1);
    }
    if (j.value("schema", "") != "monrec.config.v1")
        throw SchemaError("config: unknown schema '" + j.value("schema", "") + "'");
    AppConfig cfg;
    cfg.seed = j.value("seed", cfg.seed);
    cfg.embed_width = j.value("embed_width", cfg.embed_width);
    cfg.no_llm = j.value("no_llm", cfg.no_llm);
    if (j.contains("select")) {
        const auto& js = j["select"];
        cfg.select.hidden = js.value("hidden", cfg.select.hidden);
        cfg.select.alpha = js.value("alpha", cfg.select.alpha);
        cfg.select.gamma = js.value("gamma", cfg.select.gamma);
        cfg.select.literal_centroid_term =
            js.value("literal_centroid_term", cfg.select.literal_centroid_term);
        cfg.select.knn_k = js.value("knn_k", cfg.select.knn_k);
        cfg.select.max_negatives = js.value("max_negatives", cfg.select.max_negatives);
        cfg.select.max_positives = js.value("max_positives", cfg.select.max_positives);
        cfg.select.max_anchors_per_epoch =
            js.value("max_anchors_per_epoch", cfg.select.max_anchors_per_epoch);
        cfg.select.max_epochs = js.value("max_epochs", cfg.select.max_epochs);
        cfg.select.lr = js.value("lr", cfg.select.lr);
        cfg.select.weight_decay = js.value("weight_decay", cfg.select.weight_decay);
        cfg.select.split_ratios = js.value("split_ratios", cfg.select.split_ratios);
    }
    if (j.contains("ranker")) ranker_from_json(j["ranker"], cfg.ranker);
    if (j.contains("datagen")) {
        const auto& jd = j["datagen"];
        cfg.datagen.services = jd.value("services", cfg.datagen.services);
        cfg.datagen.monitors = jd.value("monitors", cfg.datagen.monitors);
        cfg.datagen.metrics = jd.value("metrics", cfg.datagen.metrics);
        cfg.datagen.dimensions = jd.value("dimensions", cfg.datagen.dimensions);
        cfg.datagen.expressions = jd.value("expressions", cfg.datagen.expressions);
        cfg.datagen.dimension_degree_exponent =
            jd.value("dimension_degree_exponent", cfg.datagen.dimension_degree_exponent);
        cfg.datagen.subset_selection_rate =
            jd.value("subset_selection_rate", cfg.datagen.subset_selection_rate);
        if (jd.contains("operator_mix"))
            cfg.datagen.operator_mix = jd["operator_mix"].get<std::map<std::string, double>>();
        cfg.datagen.dimension_cluster_count =
            jd.value("dimension_cluster_count", cfg.datagen.dimension_cluster_count);
        cfg.datagen.similarity_threshold_corr =
            jd.value("similarity_threshold_corr", cfg.datagen.similarity_threshold_corr);
        cfg.datagen.threshold_jitter = jd.value("threshold_jitter", cfg.datagen.threshold_jitter);
        cfg.datagen.dim_choice_noise = jd.value("dim_choice_noise", cfg.datagen.dim_choice_noise);
        cfg.datagen.min_candidate_dims = jd.value("min_candidate_dims", cfg.datagen.min_candidate_dims);
        cfg.datagen.max_candidate_dims = jd.value("max_candidate_dims", cfg.datagen.max_candidate_dims);
        cfg.datagen.series_length = jd.value("series_length", cfg.datagen.series_length);
        cfg.datagen.anomaly_rate = jd.value("anomaly_rate", cfg.datagen.anomaly_rate);
        cfg.datagen.duplicate_rate = jd.value("duplicate_rate", cfg.datagen.duplicate_rate);
        if (jd.contains("label_mode"))
            cfg.datagen.label_mode = datagen::label_mode_from_string(jd["label_mode"].get<std::string>());
        cfg.datagen.local_fraction = jd.value("local_fraction", cfg.datagen.local_fraction);
    }
    if (j.contains("similarity")) {
        const auto& jm = j["similarity"];
        cfg.similarity.weight = jm.value("weight", cfg.similarity.weight);
        cfg.similarity.shortlist = jm.value("shortlist", cfg.similarity.shortlist);
        cfg.similarity.top_k = jm.value("top_k", cfg.similarity.top_k);
        cfg.similarity.shapelet_count = jm.value("shapelet_count", cfg.similarity.shapelet_count);
        cfg.similarity.shapelet_length = jm.value("shapelet_length", cfg.similarity.shapelet_length);
    }
    if (j.contains("alert")) {
        const auto& ja = j["alert"];
        cfg.alert.max_similar = ja.value("max_similar", cfg.alert.max_similar);
        cfg.alert.token_budget = ja.value("token_budget", cfg.alert.token_budget);
        cfg.alert.retry_budget = ja.value("retry_budget", cfg.alert.retry_budget);
        cfg.alert.llm_model = ja.value("llm_model", cfg.alert.llm_model);
        cfg.alert.llm_timeout_ms = ja.value("llm_timeout_ms", cfg.alert.llm_timeout_ms);
    }
    if (j.contains("fuzzy_match")) {
        const auto& jf = j["fuzzy_match"];
        cfg.fuzzy.op = jf.value("op", cfg.fuzzy.op);
        cfg.fuzzy.dimensions = jf.value("dimensions", cfg.fuzzy.dimensions);
        cfg.fuzzy.threshold = jf.value("threshold", cfg.fuzzy.threshold);
        cfg.fuzzy.match_cutoff = jf.value("match_cutoff", cfg.fuzzy.match_cutoff);
    }
    cfg.propagate();
    return cfg;
}

void save_config(const AppConfig& cfg, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open config path for writing: " + path);
    os << to_json_string(cfg) << '\n';
}

AppConfig load_config(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open config: " + path);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return from_json_string(text);
}

embed::EmbedderOptions embedder_options(const AppConfig& cfg) {
    embed::EmbedderOptions opts;
    opts.width = cfg.embed_width;
    const char* endpoint = std::getenv("EMBED_ENDPOINT");
    if (endpoint && endpoint[0]) {
        opts.use_external = true;
        opts.client.endpoint = endpoint;
        const char* key = std::getenv("EMBED_KEY");
        if (key) opts.client.api_key = key;
    }
    return opts;
}

std::optional<alert::LlmClientConfig> llm_client_config(const AppConfig& cfg) {
    if (cfg.no_llm) return std::nullopt;
    const char* endpoint = std::getenv("LLM_ENDPOINT");
    if (!endpoint || !endpoint[0]) return std::nullopt;
    alert::LlmClientConfig c;
    c.endpoint = endpoint;
    const char* key = std::getenv("LLM_KEY");
    if (key) c.api_key = key;
    c.model = cfg.alert.llm_model;
    c.timeout_ms = cfg.alert.llm_timeout_ms;
    c.retry_budget = cfg.alert.retry_budget;
    return c;
}

std::string config_hash(const AppConfig& cfg) { return to_hex(fnv1a64(to_json_string(cfg))); }

}  // namespace monrec::config
