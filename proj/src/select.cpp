#include "monrec/select.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "monrec/kernels.hpp"

namespace monrec::select {

using tensor::Tape;
using tensor::Tensor;
using tensor::Var;

std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::BCE: return "BCE";
        case Variant::KNN: return "KNN";
        case Variant::Ens: return "Ens";
    }
    return "?";
}

Variant variant_from_string(std::string_view s) {
    if (s == "BCE") return Variant::BCE;
    if (s == "KNN") return Variant::KNN;
    if (s == "Ens") return Variant::Ens;
    throw SchemaError("unknown selection variant '" + std::string(s) + "'");
}

void save_select_dataset(const std::vector<MetricSample>& samples, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open select dataset path for writing: " + path);
    os << R"({"schema":"monrec.selectdata.v1"})" << '\n';
    for (const MetricSample& s : samples) {
        nlohmann::ordered_json rec;
        rec["account"] = s.account;
        rec["metric"] = s.metric_key;
        rec["service_text"] = s.service_text;
        rec["dependent_texts"] = s.dependent_texts;
        rec["metric_text"] = s.metric_text;
        rec["dimension_texts"] = s.dimension_texts;
        rec["label"] = s.label;
        rec["timestamp"] = s.timestamp;
        os << rec.dump() << '\n';
    }
}

std::vector<MetricSample> load_select_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open select dataset: " + path);
    std::vector<MetricSample> out;
    std::string line;
    std::size_t lineno = 0;
    bool saw_header = false;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(std::string("select dataset: ") + e.what(), lineno);
        }
        if (!saw_header) {
            if (rec.value("schema", "") != "monrec.selectdata.v1")
                throw ParseError("select dataset: missing or unknown schema header", lineno);
            saw_header = true;
            continue;
        }
        try {
            MetricSample s;
            s.account = rec.at("account").get<std::string>();
            s.metric_key = rec.at("metric").get<std::string>();
            s.service_text = rec.value("service_text", "");
            s.dependent_texts = rec.value("dependent_texts", std::vector<std::string>{});
            s.metric_text = rec.value("metric_text", "");
            s.dimension_texts = rec.value("dimension_texts", std::vector<std::string>{});
            s.label = rec.at("label").get<int>();
            s.timestamp = rec.at("timestamp").get<double>();
            out.push_back(std::move(s));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("select dataset: ") + e.what(), lineno);
        }
    }
    if (!saw_header) throw ParseError("select dataset: empty document (no schema header)", lineno);
    return out;
}

std::vector<double> build_feature(embed::Embedder& embedder, const MetricSample& sample) {
    std::vector<double> out;
    out.reserve(4 * embedder.width());
    auto append = [&](const embed::Vec& v) { out.insert(out.end(), v.begin(), v.end()); };
    append(embedder.embed_set({sample.service_text}));
    append(embedder.embed_set(sample.dependent_texts));
    append(embedder.embed_set({sample.metric_text}));
    append(embedder.embed_set(sample.dimension_texts));
    return out;
}

namespace {

Tensor glorot(std::size_t rows, std::size_t cols, Rng& rng) {
    Tensor t = Tensor::matrix(rows, cols);
    std::normal_distribution<double> d(0.0, std::sqrt(2.0 / static_cast<double>(rows + cols)));
    for (double& v : t.data) v = d(rng);
    return t;
}

}  // namespace

SelectModel init_select_model(const SelectConfig& config, std::uint64_t seed) {
    if (config.hidden == 0 || config.embed_width == 0)
        throw Error("select config: widths must be positive");
    SelectModel m;
    m.config = config;
    Rng rng(mix_seed(seed, 0x5e1ec7));
    const std::size_t in = 4 * config.embed_width;
    m.params["layer1.w"] = glorot(in, config.hidden, rng);
    m.params["layer1.b"] = Tensor::vec(config.hidden, 0.0);
    m.params["layer2.w"] = glorot(config.hidden, config.hidden, rng);
    m.params["layer2.b"] = Tensor::vec(config.hidden, 0.0);
    m.params["head.w"] = glorot(config.hidden, 1, rng);
    m.params["head.b"] = Tensor::vec(1, 0.0);
    return m;
}

void SelectModel::forward(const Tensor& features, Tensor* latent, std::vector<double>* probs) const {
    const std::size_t n = features.rows();
    const Tensor& w1 = params.at("layer1.w");
    const Tensor& b1 = params.at("layer1.b");
    const Tensor& w2 = params.at("layer2.w");
    const Tensor& b2 = params.at("layer2.b");
    const Tensor& w3 = params.at("head.w");
    const Tensor& b3 = params.at("head.b");

    Tensor h1 = Tensor::matrix(n, w1.cols());
    kernels::matmul_nn(features.data.data(), w1.data.data(), h1.data.data(), n, w1.rows(), w1.cols());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < w1.cols(); ++j) {
            double& v = h1.data[i * w1.cols() + j];
            v = std::max(0.0, v + b1.data[j]);
        }
    Tensor h2 = Tensor::matrix(n, w2.cols());
    kernels::matmul_nn(h1.data.data(), w2.data.data(), h2.data.data(), n, w2.rows(), w2.cols());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < w2.cols(); ++j) {
            double& v = h2.data[i * w2.cols() + j];
            v = std::max(0.0, v + b2.data[j]);
        }
    if (probs) {
        probs->resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            double z = b3.data[0];
            for (std::size_t j = 0; j < w3.rows(); ++j) z += h2.data[i * w3.rows() + j] * w3.data[j];
            (*probs)[i] = 1.0 / (1.0 + std::exp(-z));
        }
    }
    if (latent) *latent = std::move(h2);
}

Var loss_bce(Tape& tape, Var probs, const std::vector<int>& labels) {
    // copy the shape out: pushing ops below may reallocate the tape storage
    const std::vector<std::size_t> shape = tape.value(probs).shape;
    const std::size_t n = tape.value(probs).numel();
    if (n != labels.size()) throw ShapeError("loss_bce: probability/label count mismatch");
    Tensor y(shape, std::vector<double>(n));
    Tensor one_minus_y(shape, std::vector<double>(n));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) throw Error("loss_bce: labels must be binary");
        y.data[i] = labels[i];
        one_minus_y.data[i] = 1 - labels[i];
    }
    Var pc = tape.clamp(probs, 1e-7, 1.0 - 1e-7);
    Var ones = tape.constant(Tensor(shape, std::vector<double>(n, 1.0)));
    Var pos_term = tape.mul(tape.constant(std::move(y)), tape.log(pc));
    Var neg_term = tape.mul(tape.constant(std::move(one_minus_y)), tape.log(tape.add(ones, tape.neg(pc))));
    return tape.neg(tape.mean_all(tape.add(pos_term, neg_term)));
}

Var loss_contrastive(Tape& tape, Var latent, std::size_t anchor_row,
                     const std::vector<std::size_t>& positive_rows,
                     const std::vector<std::size_t>& negative_rows, double gamma,
                     bool literal_centroid) {
    if (positive_rows.empty() || negative_rows.empty())
        throw Error("loss_contrastive: needs at least one positive and one negative");
    Var anchor = tape.gather_rows(latent, {anchor_row});
    Var gamma_c = tape.constant(Tensor::scalar(gamma));

    // per-pair hinged triplet term
    std::vector<Var> pos_dist, neg_dist;
    for (std::size_t r : positive_rows)
        pos_dist.push_back(tape.l2norm(tape.add(tape.gather_rows(latent, {r}), tape.neg(anchor))));
    for (std::size_t r : negative_rows)
        neg_dist.push_back(tape.l2norm(tape.add(tape.gather_rows(latent, {r}), tape.neg(anchor))));
    Var total = tape.constant(Tensor::scalar(0.0));
    for (Var dp : pos_dist)
        for (Var dn : neg_dist)
            total = tape.add(total, tape.relu(tape.add(tape.add(dp, tape.neg(dn)), gamma_c)));

    // centroid separation, corrected sign by default
    Var cpos = tape.mean(tape.gather_rows(latent, positive_rows), 0);
    Var cneg = tape.mean(tape.gather_rows(latent, negative_rows), 0);
    Var sep = tape.l2norm(tape.add(cpos, tape.neg(cneg)));
    Var centroid = literal_centroid ? tape.relu(tape.add(gamma_c, sep))
                                    : tape.relu(tape.add(gamma_c, tape.neg(sep)));
    return tape.add(total, centroid);
}

Var loss_joint(Tape& tape, Var bce, Var contrastive, double alpha) {
    return tape.add(tape.scale(bce, alpha), tape.scale(contrastive, 1.0 - alpha));
}

double loss_bce_value(const std::vector<double>& probs, const std::vector<int>& labels) {
    Tape tape;
    Var p = tape.constant(Tensor({probs.size()}, probs));
    return tape.value(loss_bce(tape, p, labels)).item();
}

double loss_contrastive_value(const std::vector<double>& anchor,
                              const std::vector<std::vector<double>>& positives,
                              const std::vector<std::vector<double>>& negatives, double gamma,
                              bool literal_centroid) {
    const std::size_t h = anchor.size();
    Tensor all = Tensor::matrix(1 + positives.size() + negatives.size(), h);
    std::copy(anchor.begin(), anchor.end(), all.data.begin());
    std::vector<std::size_t> pos, neg;
    std::size_t row = 1;
    for (const auto& p : positives) {
        std::copy(p.begin(), p.end(), all.data.begin() + static_cast<std::ptrdiff_t>(row * h));
        pos.push_back(row++);
    }
    for (const auto& q : negatives) {
        std::copy(q.begin(), q.end(), all.data.begin() + static_cast<std::ptrdiff_t>(row * h));
        neg.push_back(row++);
    }
    Tape tape;
    Var latent = tape.constant(std::move(all));
    return tape.value(loss_contrastive(tape, latent, 0, pos, neg, gamma, literal_centroid)).item();
}

void KnnIndex::add(const std::string& account, std::vector<double> latent, int label,
                   std::string metric_key) {
    accounts_[account].push_back(Entry{std::move(latent), label, std::move(metric_key)});
}

std::size_t KnnIndex::account_size(const std::string& account) const {
    auto it = accounts_.find(account);
    return it == accounts_.end() ? 0 : it->second.size();
}

double KnnIndex::vote(const std::string& account, const std::vector<double>& query, int k,
                      const std::string& exclude_key) const {
    auto it = accounts_.find(account);
    if (it == accounts_.end() || it->second.empty())
        throw Error("knn_vote: account '" + account + "' has no labeled history");
    const auto& entries = it->second;
    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (!exclude_key.empty() && entries[i].metric_key == exclude_key) continue;
        if (entries[i].latent.size() != query.size())
            throw ShapeError("knn_vote: latent width mismatch");
        double acc = 0.0;
        for (std::size_t j = 0; j < query.size(); ++j) {
            const double d = entries[i].latent[j] - query[j];
            acc += d * d;
        }
        dist.emplace_back(acc, i);
    }
    if (dist.empty()) throw Error("knn_vote: account '" + account + "' has no other labeled history");
    std::stable_sort(dist.begin(), dist.end());
    const std::size_t used = std::min<std::size_t>(static_cast<std::size_t>(k), dist.size());
    std::size_t monitored = 0;
    for (std::size_t i = 0; i < used; ++i) monitored += entries[dist[i].second].label == 1;
    return static_cast<double>(monitored) / static_cast<double>(used);
}

bool decide(Variant variant, double p_global, double knn_fraction) {
    switch (variant) {
        case Variant::BCE: return p_global > 0.5;
        case Variant::KNN: return knn_fraction > 0.5;
        case Variant::Ens: return (p_global + knn_fraction) / 2.0 > 0.5;
    }
    return false;
}

void save_decisions(const std::vector<SelectDecision>& decisions, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open decisions path for writing: " + path);
    os << R"({"schema":"monrec.selectdecisions.v1"})" << '\n';
    for (const SelectDecision& d : decisions) {
        nlohmann::ordered_json rec;
        rec["metric"] = d.metric_key;
        rec["p_global"] = d.p_global;
        rec["knn_vote"] = d.knn_vote;
        rec["decision"] = d.decision;
        rec["variant"] = to_string(d.variant);
        os << rec.dump() << '\n';
    }
}

namespace {

struct SplitIdx {
    std::vector<std::size_t> train, val, test;
};

SplitIdx time_split(const std::vector<MetricSample>& samples, std::array<double, 3> ratios) {
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return samples[a].timestamp < samples[b].timestamp;
    });
    const std::size_t n = order.size();
    std::size_t n_train = static_cast<std::size_t>(std::llround(ratios[0] * static_cast<double>(n)));
    std::size_t n_val = static_cast<std::size_t>(std::llround(ratios[1] * static_cast<double>(n)));
    n_train = std::min(n_train, n);
    n_val = std::min(n_val, n - n_train);
    SplitIdx s;
    s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                 order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
    return s;
}

Tensor rows_to_tensor(const std::vector<std::vector<double>>& features,
                      const std::vector<std::size_t>& rows) {
    if (rows.empty()) throw Error("train_select: empty row selection");
    const std::size_t w = features.at(rows[0]).size();
    Tensor t = Tensor::matrix(rows.size(), w);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& f = features.at(rows[i]);
        if (f.size() != w) throw ShapeError("train_select: inconsistent feature widths");
        std::copy(f.begin(), f.end(), t.data.begin() + static_cast<std::ptrdiff_t>(i * w));
    }
    return t;
}

}  // namespace

KnnIndex build_knn_index(const SelectModel& model, const std::vector<MetricSample>& samples,
                         const std::vector<std::vector<double>>& features,
                         const std::vector<std::size_t>& rows) {
    KnnIndex index;
    if (rows.empty()) return index;
    Tensor x = rows_to_tensor(features, rows);
    Tensor latent;
    model.forward(x, &latent, nullptr);
    const std::size_t h = latent.cols();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::vector<double> row(latent.data.begin() + static_cast<std::ptrdiff_t>(i * h),
                                latent.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * h));
        const MetricSample& s = samples[rows[i]];
        index.add(s.account, std::move(row), s.label, s.metric_key);
    }
    return index;
}

SelectModel train_select(const std::vector<MetricSample>& samples,
                         const std::vector<std::vector<double>>& features,
                         const SelectConfig& config, TrainReport* report) {
    if (samples.empty()) throw Error("train_select: empty dataset");
    if (samples.size() != features.size())
        throw Error("train_select: sample/feature count mismatch");
    if (config.hidden == 0) throw Error("train_select: hidden width must be positive");

    SplitIdx split = time_split(samples, config.split_ratios);
    if (split.train.empty() || split.val.empty())
        throw Error("train_select: split leaves train or val empty");

    SelectModel model = init_select_model(config, config.seed);
    optim::AdamState adam;
    adam.cfg.lr = config.lr;
    adam.cfg.weight_decay = config.weight_decay;
    optim::TrainControl control;
    control.mode = optim::TrainControl::Mode::Maximize;

    const Tensor x_train = rows_to_tensor(features, split.train);
    std::vector<int> y_train;
    for (std::size_t r : split.train) y_train.push_back(samples[r].label);
    const Tensor x_val = rows_to_tensor(features, split.val);

    // per-account row groupings (train only) for contrastive sampling
    std::map<std::string, std::array<std::vector<std::size_t>, 2>> account_rows;
    for (std::size_t i = 0; i < split.train.size(); ++i) {
        const MetricSample& s = samples[split.train[i]];
        account_rows[s.account][static_cast<std::size_t>(s.label == 1)].push_back(i);
    }
    std::vector<std::size_t> anchor_pool;
    for (std::size_t i = 0; i < split.train.size(); ++i) {
        const MetricSample& s = samples[split.train[i]];
        const auto& groups = account_rows[s.account];
        const auto& same = groups[static_cast<std::size_t>(s.label == 1)];
        const auto& diff = groups[static_cast<std::size_t>(s.label != 1)];
        if (same.size() >= 2 && !diff.empty()) anchor_pool.push_back(i);
    }

    optim::ParamStore best_params = model.params;
    double best_metric = -1.0;

    auto val_accuracy = [&]() {
        Tensor latent;
        std::vector<double> probs;
        model.forward(x_val, &latent, &probs);
        KnnIndex index;
        if (config.objective != Objective::BceOnly)
            index = build_knn_index(model, samples, features, split.train);
        std::size_t correct = 0;
        const std::size_t h = latent.cols();
        for (std::size_t i = 0; i < split.val.size(); ++i) {
            const MetricSample& s = samples[split.val[i]];
            double vote = 0.5;
            if (config.objective != Objective::BceOnly) {
                std::vector<double> q(latent.data.begin() + static_cast<std::ptrdiff_t>(i * h),
                                      latent.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * h));
                try {
                    vote = index.vote(s.account, q, config.knn_k);
                } catch (const Error&) {
                }
            }
            const Variant variant = config.objective == Objective::BceOnly        ? Variant::BCE
                                    : config.objective == Objective::ContrastiveOnly ? Variant::KNN
                                                                                      : Variant::Ens;
            const bool hit = decide(variant, probs[i], vote) == (s.label == 1);
            correct += hit;
        }
        return static_cast<double>(correct) / static_cast<double>(split.val.size());
    };

    double lr = config.lr;
    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        Tape tape;
        Var w1 = tape.leaf(model.params["layer1.w"], true);
        Var b1 = tape.leaf(model.params["layer1.b"], true);
        Var w2 = tape.leaf(model.params["layer2.w"], true);
        Var b2 = tape.leaf(model.params["layer2.b"], true);
        Var w3 = tape.leaf(model.params["head.w"], true);
        Var b3 = tape.leaf(model.params["head.b"], true);
        Var x = tape.constant(x_train);

        Var h1 = tape.relu(tape.add(tape.matmul(x, w1), b1));
        Var latent = tape.relu(tape.add(tape.matmul(h1, w2), b2));
        Var logits = tape.add(tape.matmul(latent, w3), b3);
        Var probs = tape.sigmoid(logits);

        Var loss{};
        double train_loss = 0.0;
        try {
            Var bce{};
            if (config.objective != Objective::ContrastiveOnly) bce = loss_bce(tape, probs, y_train);

            Var contrast{};
            if (config.objective != Objective::BceOnly && !anchor_pool.empty()) {
                Rng rng(mix_seed(config.seed, 0xa11c409 + static_cast<std::uint64_t>(epoch)));
                std::vector<std::size_t> anchors = anchor_pool;
                std::shuffle(anchors.begin(), anchors.end(), rng);
                if (anchors.size() > config.max_anchors_per_epoch)
                    anchors.resize(config.max_anchors_per_epoch);
                Var sum = tape.constant(Tensor::scalar(0.0));
                std::size_t used = 0;
                for (std::size_t a : anchors) {
                    const MetricSample& s = samples[split.train[a]];
                    auto& groups = account_rows[s.account];
                    std::vector<std::size_t> pos, neg;
                    for (std::size_t r : groups[static_cast<std::size_t>(s.label == 1)])
                        if (r != a && pos.size() < static_cast<std::size_t>(config.max_positives))
                            pos.push_back(r);
                    for (std::size_t r : groups[static_cast<std::size_t>(s.label != 1)])
                        if (neg.size() < static_cast<std::size_t>(config.max_negatives)) neg.push_back(r);
                    if (pos.empty() || neg.empty()) continue;
                    // per-pair normalization keeps the summed pairwise term on
                    // the same footing as the mean BCE when mixed by alpha
                    Var anchor_loss = loss_contrastive(tape, latent, a, pos, neg, config.gamma,
                                                       config.literal_centroid_term);
                    sum = tape.add(sum, tape.scale(anchor_loss,
                                                   1.0 / static_cast<double>(pos.size() * neg.size())));
                    ++used;
                }
                if (used > 0) contrast = tape.scale(sum, 1.0 / static_cast<double>(used));
            }

            if (config.objective == Objective::BceOnly || !contrast.valid()) {
                loss = bce.valid() ? bce : tape.constant(Tensor::scalar(0.0));
            } else if (config.objective == Objective::ContrastiveOnly) {
                loss = contrast;
            } else {
                loss = loss_joint(tape, bce, contrast, config.alpha);
            }
            train_loss = tape.value(loss).item();
            tape.backward(loss);
        } catch (const NonFiniteError& e) {
            throw DivergenceError(std::string("train_select diverged: ") + e.what());
        }

        optim::GradMap grads;
        auto collect = [&](const char* name, Var v) {
            // objectives that never touch a parameter leave it without a
            // gradient (e.g. the head under a contrastive-only objective)
            try {
                grads[name] = tape.grad(v);
            } catch (const Error&) {
            }
        };
        collect("layer1.w", w1);
        collect("layer1.b", b1);
        collect("layer2.w", w2);
        collect("layer2.b", b2);
        collect("head.w", w3);
        collect("head.b", b3);
        adam.cfg.lr = lr;
        if (!grads.empty()) optim::adam_step(model.params, grads, adam);

        const double val = val_accuracy();
        if (val > best_metric) {
            best_metric = val;
            best_params = model.params;
        }
        auto step = control.step(lr, val);
        lr = step.lr;
        if (report) report->epochs.push_back(EpochStat{epoch, train_loss, val, lr});
        if (step.stop) {
            if (report) report->early_stopped = true;
            break;
        }
    }

    model.params = best_params;
    if (report) {
        report->best_val_metric = best_metric;
        report->train_idx = split.train;
        report->val_idx = split.val;
        report->test_idx = split.test;
    }
    return model;
}

}  // namespace monrec::select
