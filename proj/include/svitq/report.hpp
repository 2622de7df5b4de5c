#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "svitq/model.hpp"
#include "svitq/quant.hpp"
#include "svitq/search.hpp"

namespace svitq {

// Byte accounting is exact integer math: per row ceil(params * bit / 8).
uint64_t bytes_for(uint64_t param_count, int bit);
double to_mib(uint64_t bytes);
double saving_percent(double reference, double actual);

struct FootprintRow {
    int layer_id = 0; // 0 for the non-quantizable remainder (biases + head)
    std::string label;
    uint64_t params = 0;
    int bit = 32;
    uint64_t bytes = 0;
};

struct FootprintBreakdown {
    std::vector<FootprintRow> rows; // per layer, plus one row for bias/head params
    uint64_t total_bytes = 0;
    uint64_t reference_bytes = 0; // everything at 32-bit
    double saving = 0.0;          // percent vs reference
};

FootprintBreakdown footprint_bytes(const NetworkModel& model);
FootprintBreakdown footprint_bytes(const NetworkModel& model, const QuantSpec& spec);

struct ArtifactRef {
    std::string name;
    std::string path;   // relative paths resolve against the report's directory
    std::string digest; // fnv64 hex of file bytes
};

struct TimingProxies {
    uint64_t evaluations = 0;     // evaluator invocations across the run
    uint64_t samples_evaluated = 0;
    uint64_t train_steps = 0;
};

struct RunReport {
    std::string run_id; // equals the config digest
    uint64_t seed = 0;
    std::string config_digest;
    std::string mode;
    double baseline_accuracy = 0.0;
    double final_accuracy = 0.0;
    bool below_threshold = false;
    std::vector<ArtifactRef> artifacts;
    FootprintBreakdown footprint;
    TimingProxies timing;
};

// Writes the report as JSON with a stable field order; verifies every
// referenced artifact exists and its digest matches (Error{Integrity} if not).
void emit_report(const RunReport& report, const std::string& path);
RunReport load_report(const std::string& path);

// CSV with units in the header: one row per (block_label, layer, bit, accuracy)
void emit_plot_data(const SensitivityTable& table, const std::string& path);
// CSV: one row per composite setting (name, accuracy, footprint)
void emit_plot_data(const std::vector<CompositeCandidate>& candidates, const std::string& path);

} // namespace svitq
