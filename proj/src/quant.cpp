#include "svitq/quant.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include <fstream>
#include <sstream>

#include "svitq/error.hpp"

namespace svitq {

using json = nlohmann::ordered_json;

const char* quant_mode_name(QuantMode m) {
    return m == QuantMode::Faithful ? "faithful" : "symmetric";
}

QuantMode quant_mode_from_name(const std::string& name) {
    if (name == "faithful") return QuantMode::Faithful;
    if (name == "symmetric") return QuantMode::Symmetric;
    fail(ErrorCode::Config, "unknown quantization mode: " + name + " (faithful|symmetric)");
}

bool is_supported_bit(int b) {
    return b == 4 || b == 8 || b == 12 || b == 16 || b == 32;
}

bool is_reduced_bit(int b) { return b == 4 || b == 8 || b == 12 || b == 16; }

std::pair<int64_t, int64_t> quant_range(int bit) {
    if (!is_reduced_bit(bit))
        fail(ErrorCode::InvalidArgument, "unsupported bit precision " + std::to_string(bit));
    const int64_t q_max = (int64_t{1} << (bit - 1)) - 1;
    return {-(q_max + 1), q_max};
}

QuantParams compute_scale(const Tensor& t, int bit, QuantMode mode) {
    if (t.empty()) fail(ErrorCode::InvalidArgument, "cannot quantize an empty tensor");
    const auto [q_min, q_max] = quant_range(bit);

    auto [lo_it, hi_it] = std::minmax_element(t.data.begin(), t.data.end());
    double w_min = *lo_it;
    double w_max = *hi_it;
    if (mode == QuantMode::Symmetric) {
        const double m = std::max(std::fabs(w_min), std::fabs(w_max));
        w_min = -m;
        w_max = m;
    }

    QuantParams p;
    p.bit = bit;
    p.q_min = q_min;
    p.q_max = q_max;
    p.w_min = w_min;
    p.w_max = w_max;
    if (w_max > w_min) {
        p.scale = (w_max - w_min) / static_cast<double>(q_max - q_min);
    } else {
        // constant tensor: no information to preserve, map everything to code 0
        p.scale = 1.0;
        p.degenerate = true;
    }
    return p;
}

QuantizedTensor quantize_tensor(const Tensor& t, int bit, QuantMode mode) {
    const QuantParams p = compute_scale(t, bit, mode);
    QuantizedTensor q;
    q.shape = t.shape;
    q.params = p;
    q.q_data.resize(t.numel());
    if (p.degenerate) {
        std::fill(q.q_data.begin(), q.q_data.end(), 0);
        return q;
    }
    const double lo = static_cast<double>(p.q_min);
    const double hi = static_cast<double>(p.q_max);
    // w / S computed as w * Q_range / w_range: both factors are exact doubles,
    // so half-step quotients (e.g. 127.5 for the range endpoint) stay exact
    // and the half-away-from-zero tie break applies as written
    const double q_range = static_cast<double>(p.q_max - p.q_min);
    const double w_range = p.w_max - p.w_min;
    for (size_t i = 0; i < t.numel(); ++i) {
        const double code =
            std::round(static_cast<double>(t.data[i]) * q_range / w_range);
        q.q_data[i] = static_cast<int32_t>(std::clamp(code, lo, hi));
    }
    return q;
}

Tensor dequantize(const QuantizedTensor& q) {
    Tensor t(q.shape);
    for (size_t i = 0; i < t.numel(); ++i)
        t.data[i] = static_cast<float>(static_cast<double>(q.q_data[i]) * q.params.scale);
    return t;
}

NetworkModel quantize_layer(const NetworkModel& model, int layer_id, int bit, QuantMode mode) {
    if (!is_supported_bit(bit))
        fail(ErrorCode::InvalidArgument, "unsupported bit precision " + std::to_string(bit));
    NetworkModel out = model;
    auto& ld = out.layer(layer_id);
    if (bit != 32) {
        for (auto& w : ld.weights) w = dequantize(quantize_tensor(w, bit, mode));
    }
    out.precision_map[layer_id] = bit;
    return out;
}

QuantSpec QuantSpec::uniform(const NetworkModel& model, int bit, std::string provenance) {
    QuantSpec spec;
    spec.provenance = std::move(provenance);
    for (const auto& ld : model.layers) spec.assignment[ld.id] = bit;
    return spec;
}

NetworkModel apply_setting(const NetworkModel& model, const QuantSpec& spec, QuantMode mode) {
    for (const auto& [id, bit] : spec.assignment) {
        if (!model.has_layer(id))
            fail(ErrorCode::InvalidArgument, "spec names unknown layer " + std::to_string(id));
        if (!is_supported_bit(bit))
            fail(ErrorCode::InvalidArgument, "spec assigns unsupported bit " + std::to_string(bit));
    }
    for (const auto& ld : model.layers)
        if (!spec.assignment.count(ld.id))
            fail(ErrorCode::InvalidArgument,
                 "spec missing layer " + std::to_string(ld.id) + " (" + ld.block_label + ")");

    NetworkModel out = model;
    for (const auto& ld : model.layers) {
        const int bit = spec.assignment.at(ld.id);
        out = quantize_layer(out, ld.id, bit, mode);
    }
    return out;
}

namespace {

std::string layer_key(const LayerDescriptor& ld) {
    return ld.block_label + ":" + std::to_string(ld.block_ordinal);
}

} // namespace

std::string quant_spec_to_json(const QuantSpec& spec, const NetworkModel& model) {
    json doc;
    doc["schema"] = "svitq.quant_spec/1";
    doc["provenance"] = spec.provenance.empty() ? "manual" : spec.provenance;

    json entries = json::array();
    for (const auto& stage : model.stages) {
        for (const auto& block : stage.blocks) {
            bool uniform = true;
            int first_bit = 0;
            for (size_t i = 0; i < block.layer_ids.size(); ++i) {
                auto it = spec.assignment.find(block.layer_ids[i]);
                if (it == spec.assignment.end())
                    fail(ErrorCode::InvalidArgument,
                         "spec missing layer " + std::to_string(block.layer_ids[i]));
                if (i == 0) first_bit = it->second;
                else if (it->second != first_bit) uniform = false;
            }
            if (uniform) {
                entries.push_back({{"block", block.label}, {"bit", first_bit}});
            } else {
                for (int id : block.layer_ids) {
                    const auto& ld = model.layer(id);
                    entries.push_back({{"block", block.label},
                                       {"layer", ld.block_ordinal},
                                       {"bit", spec.assignment.at(id)}});
                }
            }
        }
    }
    doc["assignments"] = std::move(entries);
    return doc.dump(2) + "\n";
}

QuantSpec quant_spec_from_json(const std::string& text, const NetworkModel& model) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const std::exception& e) {
        fail(ErrorCode::Format, std::string("quant spec is not valid JSON: ") + e.what());
    }
    if (doc.value("schema", "") != "svitq.quant_spec/1")
        fail(ErrorCode::Format, "unsupported quant spec schema");

    QuantSpec spec;
    spec.provenance = doc.value("provenance", "manual");

    if (doc.contains("default")) {
        const int bit = doc.at("default").get<int>();
        for (const auto& ld : model.layers) spec.assignment[ld.id] = bit;
    }

    // label -> layer ids, plus label:ordinal -> single id
    std::map<std::string, std::vector<int>> by_block;
    std::map<std::string, int> by_layer;
    for (const auto& ld : model.layers) {
        by_block[ld.block_label].push_back(ld.id);
        by_layer[layer_key(ld)] = ld.id;
    }

    for (const auto& entry : doc.value("assignments", json::array())) {
        const std::string block = entry.at("block").get<std::string>();
        const int bit = entry.at("bit").get<int>();
        if (entry.contains("layer")) {
            const std::string key = block + ":" + std::to_string(entry.at("layer").get<int>());
            auto it = by_layer.find(key);
            if (it == by_layer.end())
                fail(ErrorCode::Format, "quant spec names unknown layer " + key);
            spec.assignment[it->second] = bit;
        } else {
            auto it = by_block.find(block);
            if (it == by_block.end())
                fail(ErrorCode::Format, "quant spec names unknown block " + block);
            for (int id : it->second) spec.assignment[id] = bit;
        }
    }

    for (const auto& ld : model.layers)
        if (!spec.assignment.count(ld.id))
            fail(ErrorCode::Format, "quant spec missing layer " + std::to_string(ld.id) + " (" +
                                        layer_key(ld) + ")");
    for (const auto& [id, bit] : spec.assignment)
        if (!is_supported_bit(bit))
            fail(ErrorCode::Format, "quant spec assigns unsupported bit " + std::to_string(bit));
    return spec;
}

void save_quant_spec(const QuantSpec& spec, const NetworkModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Config, "cannot write quant spec: " + path);
    out << quant_spec_to_json(spec, model);
}

QuantSpec load_quant_spec(const std::string& path, const NetworkModel& model) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::MissingArtifact, "quant spec not found: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return quant_spec_from_json(ss.str(), model);
}

} // namespace svitq
