// monrec: monitor-configuration recommendation toolkit.
//
// Subcommands: generate-data, validate-stats, train, evaluate, recommend,
// serve, ingest-feedback. See README.md for the full walkthrough.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "monrec/config.hpp"
#include "monrec/datagen.hpp"
#include "monrec/pipeline.hpp"

using namespace monrec;
namespace fs = std::filesystem;

namespace {

config::AppConfig resolve_config(const std::string& config_path, bool desk, std::uint64_t seed,
                                 bool no_llm) {
    config::AppConfig cfg = desk ? config::desk_config() : config::default_config();
    if (!config_path.empty()) cfg = config::load_config(config_path);
    if (seed != 0) cfg.seed = seed;
    if (no_llm) cfg.no_llm = true;
    cfg.propagate();
    return cfg;
}

pipeline::Stores load_data(const std::string& dir) {
    pipeline::StorePaths paths{dir};
    return pipeline::load_stores(paths);
}

datagen::GenConfig load_gen_config(const std::string& dir) {
    const std::string path = dir + "/genconfig.json";
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("dataset directory is missing genconfig.json: " + dir);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    config::AppConfig app = config::from_json_string(text);
    return app.datagen;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"monitor-configuration recommendation toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    bool no_llm = false;
    bool desk = false;
    app.add_option("--config", config_path, "configuration file (monrec.config.v1)");
    app.add_option("--seed", seed, "override the configured seed");
    app.add_flag("--no-llm", no_llm, "disable external LLM calls; use deterministic fallbacks");
    app.add_flag("--desk", desk, "start from the laptop-scale configuration preset");

    // generate-data
    auto* gen = app.add_subcommand("generate-data", "generate a synthetic corpus");
    std::string gen_out = "data";
    std::string gen_label_mode;
    gen->add_option("--out", gen_out, "output directory");
    gen->add_option("--label-mode", gen_label_mode, "separable | local | null");

    // validate-stats
    auto* vstats = app.add_subcommand("validate-stats", "check a dataset against its targets");
    std::string vs_data = "data";
    vstats->add_option("--data", vs_data, "dataset directory");

    // train
    auto* train = app.add_subcommand("train", "train selection and ranking models");
    std::string tr_data = "data", tr_out = "checkpoints";
    std::string tr_feedback, tr_bundles;
    train->add_option("--data", tr_data, "dataset directory");
    train->add_option("--out", tr_out, "checkpoint output directory");
    train->add_option("--feedback-log", tr_feedback, "feedback log to fold into supervision");
    train->add_option("--bundles-dir", tr_bundles, "bundle directory backing the feedback log");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "run the module ablation grid");
    std::string ev_data = "data", ev_ckpt = "checkpoints", ev_out;
    std::size_t ev_sample = 150;
    evaluate->add_option("--data", ev_data, "dataset directory");
    evaluate->add_option("--checkpoints", ev_ckpt, "checkpoint directory");
    evaluate->add_option("--out", ev_out, "write the report here (stdout otherwise)");
    evaluate->add_option("--sample-monitors", ev_sample, "held-out monitors to score");

    // recommend
    auto* rec = app.add_subcommand("recommend", "produce a recommendation bundle for an account");
    std::string rc_data = "data", rc_ckpt = "checkpoints", rc_account, rc_out, rc_variant = "Ens";
    std::size_t rc_top_dims = 3;
    rec->add_option("--data", rc_data, "dataset directory");
    rec->add_option("--checkpoints", rc_ckpt, "checkpoint directory");
    rec->add_option("--account", rc_account, "account/service key")->required();
    rec->add_option("--variant", rc_variant, "BCE | KNN | Ens");
    rec->add_option("--top-dims", rc_top_dims, "dimensions per tuple");
    rec->add_option("--out", rc_out, "persist bundle and stage artifacts here");

    // serve
    auto* serve = app.add_subcommand("serve", "line-delimited request/response loop on stdio");
    std::string sv_data = "data", sv_ckpt = "checkpoints", sv_feedback = "feedback.jsonl", sv_out;
    serve->add_option("--data", sv_data, "dataset directory");
    serve->add_option("--checkpoints", sv_ckpt, "checkpoint directory");
    serve->add_option("--feedback-log", sv_feedback, "feedback log path");
    serve->add_option("--out", sv_out, "bundle persistence directory");

    // ingest-feedback
    auto* ingest = app.add_subcommand("ingest-feedback", "append a feedback record to the log");
    std::string if_log = "feedback.jsonl", if_record, if_bundles;
    ingest->add_option("--log", if_log, "feedback log path");
    ingest->add_option("--record", if_record, "feedback record JSON, or @file")->required();
    ingest->add_option("--bundles-dir", if_bundles, "bundle directory for id validation");

    CLI11_PARSE(app, argc, argv);

    try {
        config::AppConfig cfg = resolve_config(config_path, desk, seed, no_llm);

        if (gen->parsed()) {
            if (!gen_label_mode.empty())
                cfg.datagen.label_mode = datagen::label_mode_from_string(gen_label_mode);
            datagen::Dataset ds = datagen::generate(cfg.datagen);
            pipeline::StorePaths paths{gen_out};
            pipeline::save_stores(ds, paths);
            config::save_config(cfg, gen_out + "/genconfig.json");
            std::cout << "wrote " << ds.graph.node_count() << " nodes, " << ds.graph.edge_count()
                      << " edges, " << ds.series.size() << " series to " << gen_out << "\n";
            return 0;
        }
        if (vstats->parsed()) {
            datagen::Dataset ds;
            pipeline::Stores stores = load_data(vs_data);
            ds.graph = std::move(stores.graph);
            ds.series = std::move(stores.series);
            ds.select_samples = std::move(stores.samples);
            ds.truth = std::move(stores.truth);
            ds.config = load_gen_config(vs_data);
            const auto report = datagen::validate_stats(ds);
            std::cout << datagen::stats_report_to_string(report) << "\n";
            return report.all_pass() ? 0 : 1;
        }
        if (train->parsed()) {
            pipeline::Stores stores = load_data(tr_data);
            if (!tr_feedback.empty()) {
                const auto log = pipeline::load_feedback(tr_feedback);
                const auto configs = pipeline::accepted_configs(log, tr_bundles);
                stores.graph = pipeline::augment_with_configs(stores.graph, configs);
                std::cout << "folded " << configs.size() << " accepted configs into the graph\n";
            }
            pipeline::TrainSummary summary;
            pipeline::train_all(cfg, stores, tr_out, &summary);
            std::cout << "checkpoints written to " << tr_out
                      << " (dim val MRR " << summary.dim_report.best_val_mrr << ", exp val MRR "
                      << summary.exp_report.best_val_mrr << ")\n";
            return 0;
        }
        if (evaluate->parsed()) {
            pipeline::Stores stores = load_data(ev_data);
            pipeline::Checkpoints ckpt = pipeline::load_checkpoints(cfg, stores, ev_ckpt);
            const auto report = pipeline::evaluate(cfg, stores, ckpt, ev_sample);
            const std::string text = pipeline::eval_report_to_string(report);
            if (ev_out.empty()) {
                std::cout << text << "\n";
            } else {
                std::ofstream os(ev_out, std::ios::binary);
                os << text << "\n";
                std::cout << "report written to " << ev_out << "\n";
            }
            return 0;
        }
        if (rec->parsed()) {
            pipeline::Stores stores = load_data(rc_data);
            pipeline::Checkpoints ckpt = pipeline::load_checkpoints(cfg, stores, rc_ckpt);
            pipeline::Engine engine(cfg, std::move(stores), std::move(ckpt));
            pipeline::RecommendOptions opts;
            opts.variant = select::variant_from_string(rc_variant);
            opts.top_dims = rc_top_dims;
            opts.out_dir = rc_out;
            const auto bundle = engine.recommend(rc_account, opts);
            std::cout << pipeline::bundle_to_string(bundle) << "\n";
            return 0;
        }
        if (serve->parsed()) {
            pipeline::Stores stores = load_data(sv_data);
            pipeline::Checkpoints ckpt = pipeline::load_checkpoints(cfg, stores, sv_ckpt);
            pipeline::Engine engine(cfg, std::move(stores), std::move(ckpt));
            engine.set_feedback_log(sv_feedback);
            std::cerr << "serving on stdio; one JSON request per line\n";
            std::string line;
            while (std::getline(std::cin, line)) {
                if (line.empty()) continue;
                std::cout << engine.handle_request(line) << "\n" << std::flush;
            }
            return 0;
        }
        if (ingest->parsed()) {
            std::string text = if_record;
            if (!text.empty() && text[0] == '@') {
                std::ifstream is(text.substr(1), std::ios::binary);
                if (!is) throw Error("cannot read record file " + text.substr(1));
                text.assign((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
            }
            pipeline::FeedbackRecord record = pipeline::feedback_from_json(nlohmann::json::parse(text));
            record.validate();
            if (!if_bundles.empty() &&
                !fs::exists(fs::path(if_bundles) / (record.bundle_id + ".json")))
                throw Error("unknown bundle id '" + record.bundle_id + "' (not in " + if_bundles + ")");
            pipeline::append_feedback(if_log, record);
            std::cout << "acknowledged " << record.bundle_id << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
