#include "svitq/orchestrator.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <sstream>

#include <json.hpp>

#include "svitq/checkpoint.hpp"
#include "svitq/digest.hpp"
#include "svitq/error.hpp"
#include "svitq/report.hpp"
#include "svitq/rng.hpp"
#include "svitq/search.hpp"
#include "svitq/train.hpp"

namespace svitq {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

void log_line(const StageContext& ctx, json record) {
    if (ctx.quiet) return;
    std::cerr << record.dump() << "\n";
}

std::string join(const std::string& dir, const char* name) {
    return (fs::path(dir) / name).string();
}

std::string read_text(const std::string& path, ErrorCode missing_code,
                      const std::string& what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(missing_code, what + " not found: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Config, "cannot write " + path);
    out << text;
}

// Per-run manifest: records, for each stage, the config digest plus input and
// output artifact digests, so re-running with unchanged inputs is a no-op.
struct Manifest {
    json doc;

    static Manifest load_or_new(const std::string& run_dir, const std::string& config_digest,
                                bool force) {
        Manifest m;
        m.doc = {{"schema", "svitq.manifest/1"},
                 {"config_digest", config_digest},
                 {"stages", json::object()}};
        const std::string path = join(run_dir, "manifest.json");
        if (!fs::exists(path)) return m;

        json existing;
        try {
            existing = json::parse(read_text(path, ErrorCode::MissingArtifact, "manifest"));
        } catch (const std::exception&) {
            if (force) return m;
            fail(ErrorCode::Format, "manifest.json is corrupt; re-run with --force");
        }
        if (existing.value("config_digest", "") != config_digest) {
            if (force) return m; // start over under the new config
            fail(ErrorCode::StaleArtifact,
                 "run directory was produced with a different config (digest " +
                     existing.value("config_digest", "?") + " vs " + config_digest +
                     "); use --force to redo");
        }
        // force still keeps the recorded history; stages overwrite their entries
        m.doc = std::move(existing);
        return m;
    }

    void save(const std::string& run_dir) const {
        write_text(join(run_dir, "manifest.json"), doc.dump(2) + "\n");
    }

    bool stage_fresh(const std::string& stage, const std::string& run_dir,
                     const std::map<std::string, std::string>& inputs) const {
        if (!doc.at("stages").contains(stage)) return false;
        const json& entry = doc.at("stages").at(stage);
        for (const auto& [name, digest] : inputs) {
            if (!entry.at("inputs").contains(name)) return false;
            if (entry.at("inputs").at(name).get<std::string>() != digest) return false;
        }
        if (entry.at("inputs").size() != inputs.size()) return false;
        for (const auto& [name, digest] : entry.at("outputs").items()) {
            const std::string path = join(run_dir, name.c_str());
            if (!fs::exists(path) || digest_file(path) != digest.get<std::string>())
                return false;
        }
        return true;
    }

    void record_stage(const std::string& stage, const std::string& run_dir,
                      const std::map<std::string, std::string>& inputs,
                      const std::vector<std::string>& outputs, json stats) {
        json entry;
        entry["inputs"] = json::object();
        for (const auto& [name, digest] : inputs) entry["inputs"][name] = digest;
        entry["outputs"] = json::object();
        for (const auto& name : outputs) entry["outputs"][name] = digest_file(join(run_dir, name.c_str()));
        entry["stats"] = std::move(stats);
        doc["stages"][stage] = std::move(entry);
        save(run_dir);
    }

    json stage_stats(const std::string& stage) const {
        if (!doc.at("stages").contains(stage)) return json::object();
        return doc.at("stages").at(stage).value("stats", json::object());
    }
};

struct StageEnv {
    const StageContext& ctx;
    std::string run_dir;
    Manifest manifest;

    explicit StageEnv(const StageContext& c) : ctx(c), run_dir(c.config.output_dir) {
        fs::create_directories(run_dir);
        manifest = Manifest::load_or_new(run_dir, c.config.digest(), c.force);
        manifest.save(run_dir);
    }

    std::string model_path() const {
        return ctx.config.model_checkpoint.empty() ? join(run_dir, artifact::kModel)
                                                   : ctx.config.model_checkpoint;
    }

    std::string artifact_path(const char* name) const { return join(run_dir, name); }

    std::string require(const std::string& path, const std::string& what) const {
        if (!fs::exists(path))
            fail(ErrorCode::MissingArtifact,
                 what + " not found: " + path + " (run the producing stage first)");
        return path;
    }
};

Dataset build_train_data(const RunConfig& cfg) {
    if (cfg.data_kind == "idx")
        return load_idx(cfg.idx_train_images, cfg.idx_train_labels, cfg.data_classes);
    return generate_synthetic(derive_seed(cfg.seed, "train-data"), cfg.train_n, cfg.data_classes,
                              cfg.data_h, cfg.data_w, cfg.data_noise);
}

Dataset build_val_data(const RunConfig& cfg) {
    if (cfg.data_kind == "idx")
        return load_idx(cfg.idx_val_images, cfg.idx_val_labels, cfg.data_classes);
    return generate_synthetic(derive_seed(cfg.seed, "val-data"), cfg.val_n, cfg.data_classes,
                              cfg.data_h, cfg.data_w, cfg.data_noise);
}

struct CountingEvaluator {
    Evaluator fn;
    std::shared_ptr<std::atomic<uint64_t>> count = std::make_shared<std::atomic<uint64_t>>(0);
    size_t subset_samples = 0;
};

CountingEvaluator make_subset_evaluator(const RunConfig& cfg) {
    const Dataset val = build_val_data(cfg);
    const Dataset subset = eval_subset(val, cfg.subset_size, cfg.subset_seed);
    CountingEvaluator ce;
    ce.subset_samples = subset.size();
    auto count = ce.count;
    ce.fn = [subset, count](const NetworkModel& m) {
        count->fetch_add(1);
        return evaluate(m, subset);
    };
    return ce;
}

std::string dataset_tag(const RunConfig& cfg) {
    std::ostringstream tag;
    if (cfg.data_kind == "synthetic")
        tag << "synthetic(classes=" << cfg.data_classes << "," << cfg.data_h << "x" << cfg.data_w
            << ",seed=" << cfg.seed << ")";
    else
        tag << "idx(" << cfg.idx_train_images << ")";
    return tag.str();
}

json assignment_to_json(const std::map<int, int>& assignment) {
    json j = json::object();
    for (const auto& [id, bit] : assignment) j[std::to_string(id)] = bit;
    return j;
}

std::map<int, int> assignment_from_json(const json& j) {
    std::map<int, int> a;
    for (const auto& [key, bit] : j.items()) a[std::stoi(key)] = bit.get<int>();
    return a;
}

} // namespace

void run_train_toy(const StageContext& ctx) {
    const RunConfig& cfg = ctx.config;
    if (!cfg.model_checkpoint.empty())
        fail(ErrorCode::Config,
             "model.checkpoint is set; train-toy only applies when the toy model is built here");
    StageEnv env(ctx);

    if (!ctx.force && env.manifest.stage_fresh("train", env.run_dir, {})) {
        log_line(ctx, {{"event", "stage_skipped"}, {"stage", "train"}, {"reason", "up-to-date"}});
        return;
    }
    log_line(ctx, {{"event", "stage_start"}, {"stage", "train"}});

    const Dataset train_data = build_train_data(cfg);
    const Dataset val_data = build_val_data(cfg);
    NetworkModel model = build_toy_model(cfg.model, derive_seed(cfg.seed, "model-init"));
    TrainOptions opts;
    opts.epochs = cfg.train_epochs;
    opts.batch_size = cfg.train_batch;
    opts.lr = cfg.train_lr;
    opts.seed = cfg.seed;
    TrainResult result = train_toy(model, train_data, val_data, opts);

    save_checkpoint(result.model, env.artifact_path(artifact::kModel), dataset_tag(cfg));
    env.manifest.record_stage("train", env.run_dir, {}, {artifact::kModel},
                              {{"val_accuracy", result.val_accuracy},
                               {"epochs", result.epochs_run},
                               {"train_steps", result.steps}});
    log_line(ctx, {{"event", "stage_done"},
                   {"stage", "train"},
                   {"val_accuracy", result.val_accuracy}});
}

void run_sweep(const StageContext& ctx) {
    const RunConfig& cfg = ctx.config;
    StageEnv env(ctx);
    const std::string model_path = env.require(env.model_path(), "model checkpoint");
    const std::string model_digest = digest_file(model_path);

    if (!ctx.force &&
        env.manifest.stage_fresh("sweep", env.run_dir, {{"model", model_digest}})) {
        log_line(ctx, {{"event", "stage_skipped"}, {"stage", "sweep"}, {"reason", "up-to-date"}});
        return;
    }
    log_line(ctx, {{"event", "stage_start"}, {"stage", "sweep"}});

    const NetworkModel model = load_checkpoint(model_path);
    CountingEvaluator ev = make_subset_evaluator(cfg);

    SweepOptions opts;
    opts.bits = cfg.bits;
    opts.mode = cfg.mode;
    opts.workers = cfg.workers;

    // resume from the partial table if it matches this exact input
    const std::string partial_path = env.artifact_path(artifact::kSweepPartial);
    if (fs::exists(partial_path) && !ctx.force) {
        try {
            json partial = json::parse(
                read_text(partial_path, ErrorCode::MissingArtifact, "partial sweep"));
            if (partial.value("config_digest", "") == cfg.digest() &&
                partial.value("model_digest", "") == model_digest) {
                for (const auto& cell : partial.at("cells"))
                    opts.precomputed[{cell.at("id").get<int>(), cell.at("bit").get<int>()}] =
                        cell.at("accuracy").get<double>();
                log_line(ctx, {{"event", "sweep_resume"},
                               {"cells", opts.precomputed.size()}});
            }
        } catch (const std::exception&) {
            // unreadable partial state is discarded, the sweep restarts
        }
    }

    json partial = {{"schema", "svitq.sweep_partial/1"},
                    {"config_digest", cfg.digest()},
                    {"model_digest", model_digest},
                    {"cells", json::array()}};
    for (const auto& [key, acc] : opts.precomputed)
        partial["cells"].push_back(
            {{"id", key.first}, {"bit", key.second}, {"accuracy", acc}});

    opts.on_cell = [&](int layer_id, int bit, double acc) {
        partial["cells"].push_back({{"id", layer_id}, {"bit", bit}, {"accuracy", acc}});
        write_text(partial_path, partial.dump() + "\n");
        log_line(ctx, {{"event", "sweep_cell"},
                       {"layer", layer_id},
                       {"bit", bit},
                       {"accuracy", acc}});
    };

    const SensitivityTable table = layerwise_sweep(model, ev.fn, opts);
    write_text(env.artifact_path(artifact::kSweep), sensitivity_table_to_json(table));
    fs::remove(partial_path);

    env.manifest.record_stage("sweep", env.run_dir, {{"model", model_digest}},
                              {artifact::kSweep},
                              {{"baseline_accuracy", table.baseline_accuracy},
                               {"evaluations", ev.count->load()},
                               {"subset_samples", ev.subset_samples}});
    log_line(ctx, {{"event", "stage_done"},
                   {"stage", "sweep"},
                   {"baseline_accuracy", table.baseline_accuracy}});
}

void run_base(const StageContext& ctx) {
    const RunConfig& cfg = ctx.config;
    StageEnv env(ctx);
    const std::string sweep_path =
        env.require(env.artifact_path(artifact::kSweep), "sweep artifact");
    const std::string model_path = env.require(env.model_path(), "model checkpoint");
    const std::map<std::string, std::string> inputs = {
        {"sweep", digest_file(sweep_path)}, {"model", digest_file(model_path)}};

    if (!ctx.force && env.manifest.stage_fresh("base", env.run_dir, inputs)) {
        log_line(ctx, {{"event", "stage_skipped"}, {"stage", "base"}, {"reason", "up-to-date"}});
        return;
    }
    log_line(ctx, {{"event", "stage_start"}, {"stage", "base"}});

    const SensitivityTable table = sensitivity_table_from_json(
        read_text(sweep_path, ErrorCode::MissingArtifact, "sweep artifact"));
    const NetworkModel model = load_checkpoint(model_path);
    const BaseSettings base = select_base_settings(table, ThresholdPolicy{cfg.delta});
    write_text(env.artifact_path(artifact::kBase), base_settings_to_json(base, model));

    env.manifest.record_stage("base", env.run_dir, inputs, {artifact::kBase},
                              {{"baseline_accuracy", table.baseline_accuracy},
                               {"delta", cfg.delta}});
    log_line(ctx, {{"event", "stage_done"}, {"stage", "base"}});
}

void run_guided(const StageContext& ctx) {
    const RunConfig& cfg = ctx.config;
    StageEnv env(ctx);
    const std::string model_path = env.require(env.model_path(), "model checkpoint");
    const std::string base_path =
        env.require(env.artifact_path(artifact::kBase), "base settings artifact");
    const std::map<std::string, std::string> inputs = {
        {"model", digest_file(model_path)}, {"base", digest_file(base_path)}};

    if (!ctx.force && env.manifest.stage_fresh("guided", env.run_dir, inputs)) {
        log_line(ctx, {{"event", "stage_skipped"}, {"stage", "guided"}, {"reason", "up-to-date"}});
        return;
    }
    log_line(ctx, {{"event", "stage_start"}, {"stage", "guided"}});

    const NetworkModel model = load_checkpoint(model_path);
    const BaseSettings base = base_settings_from_json(
        read_text(base_path, ErrorCode::MissingArtifact, "base settings"), model);
    CountingEvaluator ev = make_subset_evaluator(cfg);
    const GuidedResult result = guided_explore(model, ev.fn, base, ThresholdPolicy{cfg.delta},
                                               cfg.mode, cfg.workers);
    save_quant_spec(result.spec, model, env.artifact_path(artifact::kGuided));

    env.manifest.record_stage("guided", env.run_dir, inputs, {artifact::kGuided},
                              {{"baseline_accuracy", result.baseline_accuracy},
                               {"evaluations", ev.count->load()},
                               {"subset_samples", ev.subset_samples}});
    log_line(ctx, {{"event", "stage_done"}, {"stage", "guided"}});
}

void run_composite(const StageContext& ctx) {
    const RunConfig& cfg = ctx.config;
    StageEnv env(ctx);
    const std::string model_path = env.require(env.model_path(), "model checkpoint");
    const std::string base_path =
        env.require(env.artifact_path(artifact::kBase), "base settings artifact");
    const std::map<std::string, std::string> inputs = {
        {"model", digest_file(model_path)}, {"base", digest_file(base_path)}};

    if (!ctx.force && env.manifest.stage_fresh("composite", env.run_dir, inputs)) {
        log_line(ctx,
                 {{"event", "stage_skipped"}, {"stage", "composite"}, {"reason", "up-to-date"}});
        return;
    }
    log_line(ctx, {{"event", "stage_start"}, {"stage", "composite"}});

    const NetworkModel model = load_checkpoint(model_path);
    const BaseSettings base = base_settings_from_json(
        read_text(base_path, ErrorCode::MissingArtifact, "base settings"), model);
    CountingEvaluator ev = make_subset_evaluator(cfg);
    const CompositeResult result = explore_composite(model, ev.fn, base,
                                                     ThresholdPolicy{cfg.delta}, {}, cfg.mode,
                                                     cfg.workers);

    json doc;
    doc["schema"] = "svitq.composite/1";
    doc["baseline_accuracy"] = result.baseline_accuracy;
    doc["delta"] = cfg.delta;
    json cands = json::array();
    for (const auto& c : result.ranked)
        cands.push_back({{"name", c.name},
                         {"accuracy", c.accuracy},
                         {"footprint_bytes", c.footprint_bytes},
                         {"qualifies", c.qualifies},
                         {"assignment", assignment_to_json(c.spec.assignment)}});
    doc["candidates"] = std::move(cands);
    doc["selected"] = assignment_to_json(result.selected.assignment);
    doc["selected_accuracy"] = result.selected_accuracy;
    doc["selected_qualifies"] = result.selected_qualifies;
    write_text(env.artifact_path(artifact::kComposite), doc.dump(2) + "\n");
    save_quant_spec(result.selected, model, env.artifact_path(artifact::kSelected));

    env.manifest.record_stage("composite", env.run_dir, inputs,
                              {artifact::kComposite, artifact::kSelected},
                              {{"baseline_accuracy", result.baseline_accuracy},
                               {"selected_accuracy", result.selected_accuracy},
                               {"selected_qualifies", result.selected_qualifies},
                               {"evaluations", ev.count->load()},
                               {"subset_samples", ev.subset_samples}});
    log_line(ctx, {{"event", "stage_done"},
                   {"stage", "composite"},
                   {"selected_accuracy", result.selected_accuracy}});
}

void run_quantize(const StageContext& ctx, const std::string& spec_path_arg) {
    const RunConfig& cfg = ctx.config;
    StageEnv env(ctx);
    const std::string model_path = env.require(env.model_path(), "model checkpoint");
    const std::string spec_path =
        spec_path_arg.empty()
            ? env.require(env.artifact_path(artifact::kSelected), "selected quant spec")
            : env.require(spec_path_arg, "quant spec");
    const std::map<std::string, std::string> inputs = {
        {"model", digest_file(model_path)}, {"spec", digest_file(spec_path)}};

    if (!ctx.force && env.manifest.stage_fresh("quantize", env.run_dir, inputs)) {
        log_line(ctx,
                 {{"event", "stage_skipped"}, {"stage", "quantize"}, {"reason", "up-to-date"}});
        return;
    }
    log_line(ctx, {{"event", "stage_start"}, {"stage", "quantize"}});

    const NetworkModel model = load_checkpoint(model_path);
    const QuantSpec spec = load_quant_spec(spec_path, model);
    CountingEvaluator ev = make_subset_evaluator(cfg);
    const BuildResult result =
        build_quantized(model, spec, ev.fn, ThresholdPolicy{cfg.delta}, cfg.mode);
    save_checkpoint(result.model, env.artifact_path(artifact::kQuantized),
                    checkpoint_dataset_tag(model_path));
    if (result.below_threshold)
        log_line(ctx, {{"event", "warning"},
                       {"stage", "quantize"},
                       {"message", "quantized accuracy fell below the threshold"},
                       {"accuracy", result.accuracy},
                       {"baseline", result.baseline_accuracy}});

    env.manifest.record_stage("quantize", env.run_dir, inputs, {artifact::kQuantized},
                              {{"baseline_accuracy", result.baseline_accuracy},
                               {"final_accuracy", result.accuracy},
                               {"below_threshold", result.below_threshold},
                               {"evaluations", ev.count->load()},
                               {"subset_samples", ev.subset_samples}});
    log_line(ctx, {{"event", "stage_done"},
                   {"stage", "quantize"},
                   {"final_accuracy", result.accuracy}});
}

double run_eval(const StageContext& ctx, const std::string& checkpoint_path) {
    const RunConfig& cfg = ctx.config;
    StageEnv env(ctx);
    std::string path = checkpoint_path;
    if (path.empty()) {
        path = fs::exists(env.artifact_path(artifact::kQuantized))
                   ? env.artifact_path(artifact::kQuantized)
                   : env.model_path();
    }
    env.require(path, "checkpoint");
    const NetworkModel model = load_checkpoint(path);
    const Dataset val = build_val_data(cfg);
    const Dataset subset = eval_subset(val, cfg.subset_size, cfg.subset_seed);
    const double acc = evaluate(model, subset);
    log_line(ctx, {{"event", "eval"}, {"checkpoint", path}, {"accuracy", acc}});
    return acc;
}

void run_report(const StageContext& ctx) {
    const RunConfig& cfg = ctx.config;
    StageEnv env(ctx);
    const std::string quantized_path =
        env.require(env.artifact_path(artifact::kQuantized), "quantized checkpoint");
    std::map<std::string, std::string> inputs = {{"quantized", digest_file(quantized_path)}};
    if (fs::exists(env.artifact_path(artifact::kSweep)))
        inputs["sweep"] = digest_file(env.artifact_path(artifact::kSweep));
    if (fs::exists(env.artifact_path(artifact::kComposite)))
        inputs["composite"] = digest_file(env.artifact_path(artifact::kComposite));

    if (!ctx.force && env.manifest.stage_fresh("report", env.run_dir, inputs)) {
        log_line(ctx, {{"event", "stage_skipped"}, {"stage", "report"}, {"reason", "up-to-date"}});
        return;
    }
    log_line(ctx, {{"event", "stage_start"}, {"stage", "report"}});

    RunReport report;
    report.run_id = cfg.digest();
    report.seed = cfg.seed;
    report.config_digest = cfg.digest();
    report.mode = quant_mode_name(cfg.mode);
    const json sweep_stats = env.manifest.stage_stats("sweep");
    const json quant_stats = env.manifest.stage_stats("quantize");
    report.baseline_accuracy = quant_stats.value("baseline_accuracy", 0.0);
    report.final_accuracy = quant_stats.value("final_accuracy", 0.0);
    report.below_threshold = quant_stats.value("below_threshold", false);

    // run-directory artifacts are referenced by relative name so identical
    // runs in different directories emit identical report bytes
    auto add_ref = [&](const char* name, const char* file) {
        const std::string path = env.artifact_path(file);
        if (fs::exists(path)) report.artifacts.push_back({name, file, digest_file(path)});
    };
    if (ctx.config.model_checkpoint.empty()) add_ref("model", artifact::kModel);
    else
        report.artifacts.push_back({"model", ctx.config.model_checkpoint,
                                    digest_file(ctx.config.model_checkpoint)});
    add_ref("sweep", artifact::kSweep);
    add_ref("base", artifact::kBase);
    add_ref("guided", artifact::kGuided);
    add_ref("composite", artifact::kComposite);
    add_ref("selected", artifact::kSelected);
    add_ref("quantized", artifact::kQuantized);

    const NetworkModel quantized = load_checkpoint(quantized_path);
    report.footprint = footprint_bytes(quantized);

    uint64_t evals = 0, samples = 0;
    for (const char* stage : {"sweep", "guided", "composite", "quantize"}) {
        const json stats = env.manifest.stage_stats(stage);
        const uint64_t e = stats.value("evaluations", uint64_t{0});
        evals += e;
        samples += e * stats.value("subset_samples", uint64_t{0});
    }
    report.timing.evaluations = evals;
    report.timing.samples_evaluated = samples;
    report.timing.train_steps = env.manifest.stage_stats("train").value("train_steps", uint64_t{0});

    emit_report(report, env.artifact_path(artifact::kReport));

    if (fs::exists(env.artifact_path(artifact::kSweep))) {
        const SensitivityTable table = sensitivity_table_from_json(read_text(
            env.artifact_path(artifact::kSweep), ErrorCode::MissingArtifact, "sweep artifact"));
        emit_plot_data(table, env.artifact_path(artifact::kPlotSensitivity));
    }
    if (fs::exists(env.artifact_path(artifact::kComposite))) {
        const json doc = json::parse(read_text(env.artifact_path(artifact::kComposite),
                                               ErrorCode::MissingArtifact, "composite artifact"));
        std::vector<CompositeCandidate> cands;
        for (const auto& c : doc.at("candidates")) {
            CompositeCandidate cc;
            cc.name = c.at("name").get<std::string>();
            cc.accuracy = c.at("accuracy").get<double>();
            cc.footprint_bytes = c.at("footprint_bytes").get<uint64_t>();
            cc.qualifies = c.at("qualifies").get<bool>();
            cc.spec.assignment = assignment_from_json(c.at("assignment"));
            cands.push_back(std::move(cc));
        }
        emit_plot_data(cands, env.artifact_path(artifact::kPlotComposite));
    }

    env.manifest.record_stage(
        "report", env.run_dir, inputs,
        {artifact::kReport, artifact::kPlotSensitivity, artifact::kPlotComposite},
        {{"final_accuracy", report.final_accuracy},
         {"saving_percent", report.footprint.saving}});
    log_line(ctx, {{"event", "stage_done"},
                   {"stage", "report"},
                   {"saving_percent", report.footprint.saving}});
}

void run_pipeline(const StageContext& ctx) {
    if (ctx.config.model_checkpoint.empty()) run_train_toy(ctx);
    run_sweep(ctx);
    run_base(ctx);
    run_guided(ctx);
    run_composite(ctx);
    run_quantize(ctx);
    run_report(ctx);
}

} // namespace svitq
