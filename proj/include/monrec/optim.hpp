#pragma once

#include <cmath>
#include <map>
#include <string>

#include "monrec/tensor.hpp"

namespace monrec::optim {

using tensor::Tensor;

/// Named parameter set. std::map keeps iteration (and therefore checkpoint)
/// order deterministic.
using ParamStore = std::map<std::string, Tensor>;
using GradMap = std::map<std::string, Tensor>;

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-5;  // decoupled
};

struct AdamState {
    AdamConfig cfg;
    long long step = 0;
    std::map<std::string, Tensor> m;  // first moments, same shapes as params
    std::map<std::string, Tensor> v;  // second moments
};

/// One bias-corrected adaptive-moment step with decoupled weight decay.
/// Parameters without a gradient entry are left untouched.
void adam_step(ParamStore& params, const GradMap& grads, AdamState& state);

/// Plateau scheduler plus early stopping. "Improvement" means beating the
/// best seen metric by more than min_delta.
struct TrainControl {
    enum class Mode { Minimize, Maximize };
    Mode mode = Mode::Maximize;
    double factor = 2.0;  // lr divisor on plateau
    int scheduler_patience = 5;
    int stop_patience = 10;
    double min_delta = 1e-6;

    double best = std::nan("");
    int scheduler_bad = 0;
    int stop_bad = 0;

    struct Step {
        double lr;
        bool stop;
        bool improved;
    };
    Step step(double lr, double val_metric);
};

// ---- checkpoint document (monrec.checkpoint.v1) ----
std::string checkpoint_to_string(const ParamStore& params);
ParamStore checkpoint_from_string(const std::string& text);
void save_checkpoint(const ParamStore& params, const std::string& path);
ParamStore load_checkpoint(const std::string& path);

}  // namespace monrec::optim
