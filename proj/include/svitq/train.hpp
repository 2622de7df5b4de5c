#pragma once

#include <cstdint>

#include "svitq/dataset.hpp"
#include "svitq/model.hpp"

namespace svitq {

struct TrainOptions {
    int epochs = 20;
    int batch_size = 32;
    double lr = 2e-3;
    uint64_t seed = 1;
};

struct TrainResult {
    NetworkModel model;
    double val_accuracy = 0.0;
    int epochs_run = 0;
    uint64_t steps = 0;
    std::vector<double> epoch_val_accuracy;
};

// Surrogate-gradient training (Adam on cross-entropy). Deterministic for a
// given seed. Throws Error{Diverged} if the loss becomes non-finite.
TrainResult train_toy(const NetworkModel& model, const Dataset& train_data,
                      const Dataset& val_data, const TrainOptions& opts);

} // namespace svitq
