#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "tsab/data.hpp"
#include "tsab/model.hpp"

namespace tsab {

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::int64_t t = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
};

// Bias-corrected Adam update over the canonical parameter list; gradients
// are read from each tensor's grad buffer.
void adam_step(std::vector<NamedTensor>& params, AdamState& state, double lr);

struct ScheduleState {
    double init_lr = 1e-3;
    double floor = 1e-4;
    int patience = 100;
    double best_train_loss = std::numeric_limits<double>::infinity();
    int epochs_since_improve = 0;
    int decays = 0;

    // max(init * 2^(-decays/3), floor)
    double lr() const;
};

// Strictly-lower training loss resets the counter; hitting `patience`
// non-improving epochs cuts the rate by 2^(-1/3), never below the floor.
void schedule_update(ScheduleState& state, double epoch_train_loss);

struct TrainOptions {
    int epochs = 2000;
    int batch = 128;
    std::uint64_t seed = 0;
};

struct TrainReport {
    std::vector<double> train_loss;  // one entry per epoch
    std::vector<double> lr_trace;    // rate used during that epoch
    double best_test_accuracy = 0.0;
    int best_epoch = 0;
    ModelParams best_params;
    double wall_seconds = 0.0;
    std::uint64_t seed = 0;
    std::int64_t cells = 0;
};

// The full protocol: Adam, plateau schedule, class-weighted cross-entropy,
// seeded epoch shuffling, per-epoch test evaluation with best-checkpoint
// tracking.
TrainReport train(const ModelConfig& cfg, const Dataset& data, const TrainOptions& opts);

struct EvalResult {
    double accuracy = 0.0;
    std::map<int, double> per_class_error;
};

EvalResult evaluate(ModelParams& params, const ModelConfig& cfg,
                    const std::vector<LabeledSeries>& split);

struct GridResult {
    ModelConfig best_config;
    std::vector<TrainReport> reports;  // one per cell count, input order
};

// Trains one model per cell count and keeps the best test accuracy; ties go
// to the smaller cell count.
GridResult grid_search_cells(ModelConfig tmpl, const Dataset& data,
                             const std::vector<std::int64_t>& cells, const TrainOptions& opts);

}  // namespace tsab
