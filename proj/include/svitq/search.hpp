#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "svitq/model.hpp"
#include "svitq/quant.hpp"
#include "svitq/runtime.hpp"

namespace svitq {

struct ThresholdPolicy {
    double delta = 5.0; // absolute accuracy percentage points

    double threshold(double baseline) const { return baseline - delta; }
};

// (layer, bit) -> accuracy grid from the layer-wise sweep.
struct SensitivityTable {
    std::vector<int> bits; // axis in sweep order, e.g. {32, 16, 12, 8, 4}
    double baseline_accuracy = 0.0;
    // layer rows in ascending id order
    struct Row {
        int layer_id;
        std::string block_label;
        int block_ordinal;
        LayerKind kind;
        std::map<int, double> accuracy; // bit -> percent
    };
    std::vector<Row> rows;

    const Row& row(int layer_id) const;
    double accuracy(int layer_id, int bit) const;
    void check_complete() const; // every (layer, bit) cell present
};

struct BaseSettings {
    std::map<int, int> high; // bSettingH: layer id -> bit
    std::map<int, int> low;  // bSettingL: layer id -> bit
};

struct SweepOptions {
    std::vector<int> bits = {32, 16, 12, 8, 4};
    QuantMode mode = QuantMode::Faithful;
    int workers = 1;
    // called after each completed cell, in merge order
    std::function<void(int layer_id, int bit, double acc)> on_cell;
    // resume support: cells already evaluated, (layer id, bit) -> accuracy
    std::map<std::pair<int, int>, double> precomputed;
};

// Quantizes one layer at a time on a fresh copy of the model and evaluates
// each candidate. The grid covers every quantizable layer at every bit of the
// axis (the 32-bit cells are evaluated too, not assumed).
SensitivityTable layerwise_sweep(const NetworkModel& model, const Evaluator& evaluator,
                                 const SweepOptions& opts = {});

// For each layer, over bits whose sweep accuracy stays within the threshold:
// high = the largest qualifying reduced bit, falling back to 32 when no
// reduced precision qualifies; low = the smallest qualifying bit.
BaseSettings select_base_settings(const SensitivityTable& table, const ThresholdPolicy& policy);

struct GuidedResult {
    QuantSpec spec; // provenance "guided"
    double baseline_accuracy = 0.0;
    std::map<int, double> stored_accuracy; // accuracy recorded at the selected bit
};

// Per layer, walks candidate bits from high down to low in steps of 4, each on
// a fresh copy of the original model, and keeps the lowest qualifying bit.
GuidedResult guided_explore(const NetworkModel& model, const Evaluator& evaluator,
                            const BaseSettings& base, const ThresholdPolicy& policy,
                            QuantMode mode = QuantMode::Faithful, int workers = 1);

struct CompositeCandidate {
    std::string name; // bSettingH, bSettingL, ExpSetting<k>, Selected, Repair<k>
    QuantSpec spec;
    double accuracy = 0.0;
    uint64_t footprint_bytes = 0;
    bool qualifies = false;
};

struct CompositeStrategy {
    // per-layer candidates between high and low, one changed layer per setting
    bool single_layer_perturbations = true;
    std::vector<std::pair<std::string, QuantSpec>> extra_candidates;
};

struct CompositeResult {
    std::vector<CompositeCandidate> ranked; // qualifying first, then smaller footprint
    QuantSpec selected;                     // provenance "composite"
    double baseline_accuracy = 0.0;
    double selected_accuracy = 0.0;
    bool selected_qualifies = false;
};

// Evaluates whole-network settings: both base endpoints plus single-layer
// perturbations of high toward low. The selected spec takes, per layer, the
// lowest precision appearing in any qualifying candidate; it is evaluated
// itself and repaired toward high if it misses the threshold.
CompositeResult explore_composite(const NetworkModel& model, const Evaluator& evaluator,
                                  const BaseSettings& base, const ThresholdPolicy& policy,
                                  const CompositeStrategy& strategy = {},
                                  QuantMode mode = QuantMode::Faithful, int workers = 1);

struct BuildResult {
    NetworkModel model;
    double accuracy = 0.0;
    double baseline_accuracy = 0.0;
    bool below_threshold = false; // warning flag, not an error
};

BuildResult build_quantized(const NetworkModel& model, const QuantSpec& spec,
                            const Evaluator& evaluator, const ThresholdPolicy& policy,
                            QuantMode mode = QuantMode::Faithful);

// JSON documents (versioned, byte-stable for identical inputs)
std::string sensitivity_table_to_json(const SensitivityTable& table);
SensitivityTable sensitivity_table_from_json(const std::string& text);
std::string base_settings_to_json(const BaseSettings& base, const NetworkModel& model);
BaseSettings base_settings_from_json(const std::string& text, const NetworkModel& model);

} // namespace svitq
