#pragma once

#include <string>

#include "svitq/config.hpp"

namespace svitq {

// Stage runners behind the CLI subcommands. Each reads its predecessor's
// artifact from the run directory, writes its own artifact plus a JSON
// fragment, and skips the work when the existing artifact is up to date
// (matching config and input digests) unless force is set.
struct StageContext {
    RunConfig config;
    bool force = false;
    bool quiet = false;
};

// artifact file names inside the run directory
namespace artifact {
inline constexpr const char* kModel = "model.qsvc";
inline constexpr const char* kTrainInfo = "train.json";
inline constexpr const char* kSweep = "sweep.json";
inline constexpr const char* kSweepPartial = "sweep.partial.json";
inline constexpr const char* kBase = "base.json";
inline constexpr const char* kGuided = "guided.spec.json";
inline constexpr const char* kComposite = "composite.json";
inline constexpr const char* kSelected = "selected.spec.json";
inline constexpr const char* kQuantized = "quantized.qsvc";
inline constexpr const char* kQuantizeInfo = "quantize.json";
inline constexpr const char* kReport = "report.json";
inline constexpr const char* kPlotSensitivity = "plot_sensitivity.csv";
inline constexpr const char* kPlotComposite = "plot_composite.csv";
} // namespace artifact

void run_train_toy(const StageContext& ctx);
void run_sweep(const StageContext& ctx);
void run_base(const StageContext& ctx);
void run_guided(const StageContext& ctx);
void run_composite(const StageContext& ctx);
void run_quantize(const StageContext& ctx, const std::string& spec_path = "");
double run_eval(const StageContext& ctx, const std::string& checkpoint_path = "");
void run_report(const StageContext& ctx);
void run_pipeline(const StageContext& ctx);

} // namespace svitq
