#pragma once

#include <functional>

#include "svitq/dataset.hpp"
#include "svitq/kernels.hpp"
#include "svitq/model.hpp"

namespace svitq {

// Called for every spike tensor the forward pass produces (one call per LIF
// site per timestep). Used by tests to audit binariness and token shapes.
using SpikeObserver = std::function<void(int slot, int timestep, const Tensor& spikes)>;

// Runs the spiking forward pass over model.timesteps() steps and returns
// logits (n, classes) averaged over timesteps.
Tensor forward(const NetworkModel& model, const Batch& batch,
               const SpikeObserver& observer = nullptr);

// Top-1 accuracy in percent over all samples, fixed iteration order.
// Argmax ties resolve to the lowest class index.
double evaluate(const NetworkModel& model, const Dataset& data);

std::vector<int> predict(const NetworkModel& model, const Dataset& data);

using Evaluator = std::function<double(const NetworkModel&)>;

// evaluate bound to a fixed dataset
Evaluator make_evaluator(const Dataset& data);

} // namespace svitq
