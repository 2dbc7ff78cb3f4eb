#include "monrec/optim.hpp"

#include <fstream>

#include <json.hpp>

namespace monrec::optim {

void adam_step(ParamStore& params, const GradMap& grads, AdamState& state) {
    state.step += 1;
    const AdamConfig& c = state.cfg;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    for (auto& [name, p] : params) {
        auto git = grads.find(name);
        if (git == grads.end()) continue;
        const Tensor& g = git->second;
        if (!g.same_shape(p))
            throw ShapeError("adam_step: gradient shape mismatch for parameter '" + name + "'");
        Tensor& m = state.m.try_emplace(name, Tensor(p.shape, std::vector<double>(p.data.size(), 0.0))).first->second;
        Tensor& v = state.v.try_emplace(name, Tensor(p.shape, std::vector<double>(p.data.size(), 0.0))).first->second;
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            m.data[i] = c.beta1 * m.data[i] + (1.0 - c.beta1) * g.data[i];
            v.data[i] = c.beta2 * v.data[i] + (1.0 - c.beta2) * g.data[i] * g.data[i];
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            p.data[i] -= c.lr * (mhat / (std::sqrt(vhat) + c.eps) + c.weight_decay * p.data[i]);
        }
    }
}

TrainControl::Step TrainControl::step(double lr, double val_metric) {
    if (!std::isfinite(val_metric)) throw NonFiniteError("TrainControl: validation metric is non-finite");
    bool improved;
    if (std::isnan(best)) {
        improved = true;
    } else if (mode == Mode::Maximize) {
        improved = val_metric > best + min_delta;
    } else {
        improved = val_metric < best - min_delta;
    }
    if (improved) {
        best = val_metric;
        scheduler_bad = 0;
        stop_bad = 0;
    } else {
        ++scheduler_bad;
        ++stop_bad;
        if (scheduler_bad >= scheduler_patience) {
            lr /= factor;
            scheduler_bad = 0;
        }
    }
    return Step{lr, stop_bad >= stop_patience, improved};
}

std::string checkpoint_to_string(const ParamStore& params) {
    nlohmann::ordered_json doc;
    doc["schema"] = "monrec.checkpoint.v1";
    nlohmann::ordered_json p = nlohmann::ordered_json::object();
    for (const auto& [name, t] : params) {
        nlohmann::ordered_json entry;
        entry["shape"] = t.shape;
        entry["values"] = t.data;
        p[name] = std::move(entry);
    }
    doc["params"] = std::move(p);
    return doc.dump();
}

ParamStore checkpoint_from_string(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("checkpoint: ") + e.what(), 1);
    }
    if (doc.value("schema", "") != "monrec.checkpoint.v1")
        throw SchemaError("checkpoint: unknown schema '" + doc.value("schema", "") + "'");
    ParamStore out;
    for (const auto& [name, entry] : doc.at("params").items()) {
        Tensor t;
        t.shape = entry.at("shape").get<std::vector<std::size_t>>();
        t.data = entry.at("values").get<std::vector<double>>();
        if (t.numel() != t.data.size())
            throw SchemaError("checkpoint: shape/value length mismatch for '" + name + "'");
        out.emplace(name, std::move(t));
    }
    return out;
}

void save_checkpoint(const ParamStore& params, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open checkpoint path for writing: " + path);
    os << checkpoint_to_string(params) << '\n';
}

ParamStore load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open checkpoint: " + path);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return checkpoint_from_string(text);
}

}  // namespace monrec::optim
