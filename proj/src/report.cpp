#include "svitq/report.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "svitq/digest.hpp"
#include "svitq/error.hpp"

namespace svitq {

using json = nlohmann::ordered_json;

uint64_t bytes_for(uint64_t param_count, int bit) {
    if (!is_supported_bit(bit))
        fail(ErrorCode::InvalidArgument, "unsupported bit precision " + std::to_string(bit));
    // exact bit accounting, rounded up to whole bytes per row
    return (param_count * static_cast<uint64_t>(bit) + 7) / 8;
}

double to_mib(uint64_t bytes) { return static_cast<double>(bytes) / (1024.0 * 1024.0); }

double saving_percent(double reference, double actual) {
    if (reference <= 0.0) fail(ErrorCode::InvalidArgument, "reference footprint must be > 0");
    return 100.0 * (reference - actual) / reference;
}

FootprintBreakdown footprint_bytes(const NetworkModel& model) {
    QuantSpec spec;
    spec.provenance = "current";
    spec.assignment = model.precision_map;
    return footprint_bytes(model, spec);
}

FootprintBreakdown footprint_bytes(const NetworkModel& model, const QuantSpec& spec) {
    FootprintBreakdown fb;
    uint64_t fixed_params = model.head_weight.numel() + model.head_bias.numel();
    for (const auto& ld : model.layers) {
        auto it = spec.assignment.find(ld.id);
        if (it == spec.assignment.end())
            fail(ErrorCode::InvalidArgument,
                 "bit assignment missing layer " + std::to_string(ld.id));
        FootprintRow row;
        row.layer_id = ld.id;
        row.label = ld.block_label + ":" + std::to_string(ld.block_ordinal);
        row.params = ld.weight_param_count();
        row.bit = it->second;
        row.bytes = bytes_for(row.params, row.bit);
        fb.rows.push_back(row);
        fixed_params += ld.bias_param_count();
    }
    // biases and the classification head are not quantized
    FootprintRow fixed;
    fixed.layer_id = 0;
    fixed.label = "unquantized(biases+head)";
    fixed.params = fixed_params;
    fixed.bit = 32;
    fixed.bytes = bytes_for(fixed_params, 32);
    fb.rows.push_back(fixed);

    for (const auto& row : fb.rows) fb.total_bytes += row.bytes;
    for (const auto& row : fb.rows) fb.reference_bytes += bytes_for(row.params, 32);
    fb.saving = saving_percent(static_cast<double>(fb.reference_bytes),
                               static_cast<double>(fb.total_bytes));
    return fb;
}

namespace {

json footprint_to_json(const FootprintBreakdown& fb) {
    json rows = json::array();
    for (const auto& r : fb.rows)
        rows.push_back({{"layer_id", r.layer_id},
                        {"label", r.label},
                        {"params", r.params},
                        {"bit", r.bit},
                        {"bytes", r.bytes}});
    return {{"rows", std::move(rows)},
            {"total_bytes", fb.total_bytes},
            {"total_mib", to_mib(fb.total_bytes)},
            {"reference_bytes", fb.reference_bytes},
            {"reference_mib", to_mib(fb.reference_bytes)},
            {"saving_percent", fb.saving},
            {"size_unit", "MiB (2^20 bytes)"}};
}

FootprintBreakdown footprint_from_json(const json& j) {
    FootprintBreakdown fb;
    for (const auto& r : j.at("rows")) {
        FootprintRow row;
        row.layer_id = r.at("layer_id").get<int>();
        row.label = r.at("label").get<std::string>();
        row.params = r.at("params").get<uint64_t>();
        row.bit = r.at("bit").get<int>();
        row.bytes = r.at("bytes").get<uint64_t>();
        fb.rows.push_back(std::move(row));
    }
    fb.total_bytes = j.at("total_bytes").get<uint64_t>();
    fb.reference_bytes = j.at("reference_bytes").get<uint64_t>();
    fb.saving = j.at("saving_percent").get<double>();
    return fb;
}

} // namespace

void emit_report(const RunReport& report, const std::string& path) {
    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    // integrity gate: every referenced artifact must exist with matching bytes
    for (const auto& ref : report.artifacts) {
        std::filesystem::path p(ref.path);
        if (p.is_relative()) p = base / p;
        std::ifstream probe(p, std::ios::binary);
        if (!probe)
            fail(ErrorCode::Integrity, "report references missing artifact: " + p.string());
        const std::string actual = digest_file(p.string());
        if (actual != ref.digest)
            fail(ErrorCode::Integrity, "digest mismatch for artifact " + p.string() +
                                           " (expected " + ref.digest + ", found " + actual +
                                           ")");
    }

    json doc;
    doc["schema"] = "svitq.report/1";
    doc["run_id"] = report.run_id;
    doc["seed"] = report.seed;
    doc["config_digest"] = report.config_digest;
    doc["mode"] = report.mode;
    doc["accuracy_unit"] = "percent";
    doc["baseline_accuracy"] = report.baseline_accuracy;
    doc["final_accuracy"] = report.final_accuracy;
    doc["below_threshold"] = report.below_threshold;
    json artifacts = json::array();
    for (const auto& ref : report.artifacts)
        artifacts.push_back({{"name", ref.name}, {"path", ref.path}, {"digest", ref.digest}});
    doc["artifacts"] = std::move(artifacts);
    doc["footprint"] = footprint_to_json(report.footprint);
    doc["timing_proxies"] = {{"evaluations", report.timing.evaluations},
                             {"samples_evaluated", report.timing.samples_evaluated},
                             {"train_steps", report.timing.train_steps}};

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Config, "cannot write report: " + path);
    out << doc.dump(2) << "\n";
}

RunReport load_report(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::MissingArtifact, "report not found: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    json doc;
    try {
        doc = json::parse(ss.str());
    } catch (const std::exception& e) {
        fail(ErrorCode::Format, std::string("report is not valid JSON: ") + e.what());
    }
    if (doc.value("schema", "") != "svitq.report/1")
        fail(ErrorCode::Format, "unsupported report schema");
    RunReport r;
    r.run_id = doc.at("run_id").get<std::string>();
    r.seed = doc.at("seed").get<uint64_t>();
    r.config_digest = doc.at("config_digest").get<std::string>();
    r.mode = doc.at("mode").get<std::string>();
    r.baseline_accuracy = doc.at("baseline_accuracy").get<double>();
    r.final_accuracy = doc.at("final_accuracy").get<double>();
    r.below_threshold = doc.at("below_threshold").get<bool>();
    for (const auto& a : doc.at("artifacts"))
        r.artifacts.push_back({a.at("name").get<std::string>(), a.at("path").get<std::string>(),
                               a.at("digest").get<std::string>()});
    r.footprint = footprint_from_json(doc.at("footprint"));
    r.timing.evaluations = doc.at("timing_proxies").at("evaluations").get<uint64_t>();
    r.timing.samples_evaluated = doc.at("timing_proxies").at("samples_evaluated").get<uint64_t>();
    r.timing.train_steps = doc.at("timing_proxies").at("train_steps").get<uint64_t>();
    return r;
}

void emit_plot_data(const SensitivityTable& table, const std::string& path) {
    table.check_complete();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Config, "cannot write plot data: " + path);
    out << "block_label,layer_ordinal,bit,accuracy_percent\n";
    for (const auto& r : table.rows)
        for (int b : table.bits) {
            std::ostringstream line;
            line << r.block_label << "," << r.block_ordinal << "," << b << ","
                 << json(r.accuracy.at(b)).dump();
            out << line.str() << "\n";
        }
}

void emit_plot_data(const std::vector<CompositeCandidate>& candidates, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Config, "cannot write plot data: " + path);
    out << "setting,accuracy_percent,footprint_bytes,qualifies\n";
    for (const auto& c : candidates)
        out << c.name << "," << json(c.accuracy).dump() << "," << c.footprint_bytes << ","
            << (c.qualifies ? 1 : 0) << "\n";
}

} // namespace svitq
