#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "svitq/config.hpp"
#include "svitq/error.hpp"
#include "svitq/orchestrator.hpp"

namespace {

struct CliState {
    std::string config_path;
    svitq::ConfigOverrides overrides;
    bool force = false;
    bool quiet = false;
};

void add_common(CLI::App* cmd, CliState& state) {
    cmd->add_option("--config", state.config_path, "run configuration file")->required();
    cmd->add_option("--output-dir", [&state](const std::vector<std::string>& v) {
        state.overrides.output_dir = v.back();
        return true;
    }, "override output_dir");
    cmd->add_option("--seed", [&state](const std::vector<std::string>& v) {
        state.overrides.seed = std::stoull(v.back());
        return true;
    }, "override seed");
    cmd->add_option("--workers", [&state](const std::vector<std::string>& v) {
        state.overrides.workers = std::stoi(v.back());
        return true;
    }, "override worker count");
    cmd->add_option("--subset-size", [&state](const std::vector<std::string>& v) {
        state.overrides.subset_size = static_cast<size_t>(std::stoull(v.back()));
        return true;
    }, "override evaluation subset size (0 = full validation set)");
    cmd->add_option("--delta", [&state](const std::vector<std::string>& v) {
        state.overrides.delta = std::stod(v.back());
        return true;
    }, "override accuracy threshold delta (percentage points)");
    cmd->add_option("--mode", [&state](const std::vector<std::string>& v) {
        state.overrides.mode = svitq::quant_mode_from_name(v.back());
        return true;
    }, "override quantization mode (faithful|symmetric)");
    cmd->add_flag("--force", state.force, "redo stages even when artifacts are up to date");
    cmd->add_flag("--quiet", state.quiet, "suppress progress records on stderr");
}

svitq::StageContext make_context(const CliState& state) {
    svitq::ConfigOverrides ov = state.overrides;
    // environment overrides apply when no flag was given
    if (!ov.output_dir) {
        if (const char* env = std::getenv("SVITQ_OUTPUT_DIR")) ov.output_dir = std::string(env);
    }
    if (!ov.workers) {
        if (const char* env = std::getenv("SVITQ_WORKERS")) ov.workers = std::atoi(env);
    }
    svitq::RunConfig cfg = svitq::apply_overrides(svitq::load_config(state.config_path), ov);
    if (!state.quiet) {
        std::cout << "# effective configuration (digest " << cfg.digest() << ")\n"
                  << cfg.echo() << std::flush;
    }
    return svitq::StageContext{std::move(cfg), state.force, state.quiet};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"post-training quantization pipeline for spike-driven vision transformers"};
    app.require_subcommand(1);

    CliState state;
    std::string spec_path;
    std::string checkpoint_path;

    CLI::App* train = app.add_subcommand("train-toy", "train the toy model and write model.qsvc");
    add_common(train, state);
    CLI::App* sweep = app.add_subcommand("sweep", "layer-wise sensitivity sweep");
    add_common(sweep, state);
    CLI::App* base = app.add_subcommand("base", "select base quantization settings");
    add_common(base, state);
    CLI::App* guided = app.add_subcommand("guided", "guided per-layer exploration");
    add_common(guided, state);
    CLI::App* composite = app.add_subcommand("composite", "whole-network composite exploration");
    add_common(composite, state);
    CLI::App* quantize = app.add_subcommand("quantize", "apply a quant spec and write quantized.qsvc");
    add_common(quantize, state);
    quantize->add_option("--spec", spec_path, "quant spec file (default: selected.spec.json)");
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on the validation subset");
    add_common(eval, state);
    eval->add_option("--checkpoint", checkpoint_path, "checkpoint to evaluate");
    CLI::App* report = app.add_subcommand("report", "emit the run report and plot data");
    add_common(report, state);
    CLI::App* pipeline = app.add_subcommand("pipeline", "run every stage in order");
    add_common(pipeline, state);

    CLI11_PARSE(app, argc, argv);

    try {
        const svitq::StageContext ctx = make_context(state);
        if (train->parsed()) svitq::run_train_toy(ctx);
        if (sweep->parsed()) svitq::run_sweep(ctx);
        if (base->parsed()) svitq::run_base(ctx);
        if (guided->parsed()) svitq::run_guided(ctx);
        if (composite->parsed()) svitq::run_composite(ctx);
        if (quantize->parsed()) svitq::run_quantize(ctx, spec_path);
        if (eval->parsed()) {
            const double acc = svitq::run_eval(ctx, checkpoint_path);
            std::cout << "accuracy_percent = " << acc << "\n";
        }
        if (report->parsed()) svitq::run_report(ctx);
        if (pipeline->parsed()) svitq::run_pipeline(ctx);
    } catch (const svitq::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(svitq::ErrorCode::Internal);
    }
    return 0;
}
