#include "svitq/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "svitq/error.hpp"

namespace svitq {

namespace {

using json = nlohmann::ordered_json;

void write_u32le(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64le(std::ostream& out, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t read_u32le(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) fail(ErrorCode::Format, "checkpoint truncated in fixed header");
    return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
           static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

uint64_t read_u64le(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) fail(ErrorCode::Format, "checkpoint truncated in fixed header");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

void write_f32le(std::ostream& out, const Tensor& t) {
    for (float f : t.data) {
        uint32_t v;
        std::memcpy(&v, &f, 4);
        write_u32le(out, v);
    }
}

void read_f32le(std::istream& in, Tensor& t, const std::string& what) {
    for (float& f : t.data) {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        if (!in) fail(ErrorCode::Format, "checkpoint payload truncated in " + what);
        uint32_t v = static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
                     static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
        std::memcpy(&f, &v, 4);
    }
}

json shape_to_json(const Tensor& t) {
    json a = json::array();
    for (size_t d : t.shape) a.push_back(d);
    return a;
}

std::vector<size_t> shape_from_json(const json& a) {
    std::vector<size_t> s;
    for (const auto& d : a) s.push_back(d.get<size_t>());
    return s;
}

void check_finite(const Tensor& t, const std::string& what) {
    if (!t.all_finite())
        fail(ErrorCode::Format, "non-finite values in " + what);
}

json read_header(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        fail(ErrorCode::Format, "checkpoint magic mismatch (expected QSVC)");
    const uint32_t version = read_u32le(in);
    if (version != kCheckpointVersion)
        fail(ErrorCode::Format, "unsupported checkpoint version " + std::to_string(version));
    const uint64_t header_len = read_u64le(in);
    std::string text(header_len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(header_len));
    if (!in) fail(ErrorCode::Format, "checkpoint truncated in header text");
    json header;
    try {
        header = json::parse(text);
    } catch (const std::exception& e) {
        fail(ErrorCode::Format, std::string("checkpoint header is not valid JSON: ") + e.what());
    }
    return header;
}

} // namespace

void save_checkpoint(const NetworkModel& model, const std::string& path,
                     const std::string& dataset_tag) {
    validate_model(model);

    json header;
    header["config"] = {{"C", model.config.base_channels},
                        {"H", model.config.input_h},
                        {"W", model.config.input_w},
                        {"in_channels", model.config.in_channels},
                        {"N3", model.config.tran_blocks_s3},
                        {"N4", model.config.tran_blocks_s4},
                        {"classes", model.config.classes},
                        {"T", model.config.timesteps}};
    header["dataset"] = dataset_tag;

    json layers = json::array();
    for (const auto& ld : model.layers) {
        json shapes = json::array();
        for (const auto& w : ld.weights) {
            check_finite(w, "layer " + std::to_string(ld.id) + " weights");
            shapes.push_back(shape_to_json(w));
        }
        json entry = {{"id", ld.id},
                      {"kind", layer_kind_name(ld.kind)},
                      {"block", ld.block_label},
                      {"stage", ld.stage},
                      {"shapes", shapes}};
        if (ld.bias) {
            check_finite(*ld.bias, "layer " + std::to_string(ld.id) + " bias");
            entry["bias"] = shape_to_json(*ld.bias);
        }
        layers.push_back(std::move(entry));
    }
    header["layers"] = std::move(layers);
    check_finite(model.head_weight, "head weights");
    check_finite(model.head_bias, "head bias");
    header["head"] = {{"weight", shape_to_json(model.head_weight)},
                      {"bias", shape_to_json(model.head_bias)}};
    json precision = json::object();
    for (const auto& [id, bit] : model.precision_map) precision[std::to_string(id)] = bit;
    header["precision"] = std::move(precision);

    const std::string header_text = header.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Config, "cannot write checkpoint: " + path);
    out.write(kCheckpointMagic, 4);
    write_u32le(out, kCheckpointVersion);
    write_u64le(out, header_text.size());
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const auto& ld : model.layers) {
        for (const auto& w : ld.weights) write_f32le(out, w);
        if (ld.bias) write_f32le(out, *ld.bias);
    }
    write_f32le(out, model.head_weight);
    write_f32le(out, model.head_bias);
    if (!out) fail(ErrorCode::Config, "I/O error while writing checkpoint: " + path);
}

NetworkModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::MissingArtifact, "checkpoint not found: " + path);
    const json header = read_header(in);

    const auto& cj = header.at("config");
    ToyConfig config;
    config.base_channels = cj.at("C").get<int>();
    config.input_h = cj.at("H").get<int>();
    config.input_w = cj.at("W").get<int>();
    config.in_channels = cj.at("in_channels").get<int>();
    config.tran_blocks_s3 = cj.at("N3").get<int>();
    config.tran_blocks_s4 = cj.at("N4").get<int>();
    config.classes = cj.at("classes").get<int>();
    config.timesteps = cj.at("T").get<int>();

    // Rebuild the structure from the config, then overwrite weights from the
    // payload; the header's shape table must agree with the rebuilt shapes.
    NetworkModel model = build_toy_model(config, 0);

    const auto& layers = header.at("layers");
    if (layers.size() != model.layers.size())
        fail(ErrorCode::Format, "checkpoint header layer count disagrees with config");
    for (size_t i = 0; i < model.layers.size(); ++i) {
        auto& ld = model.layers[i];
        const auto& entry = layers.at(i);
        const std::string where = "layer " + std::to_string(ld.id) + " (" + ld.block_label + ")";
        if (entry.at("id").get<int>() != ld.id ||
            layer_kind_from_name(entry.at("kind").get<std::string>()) != ld.kind)
            fail(ErrorCode::Format, "checkpoint header disagrees with config at " + where);
        const auto& shapes = entry.at("shapes");
        if (shapes.size() != ld.weights.size())
            fail(ErrorCode::Format, "checkpoint tensor count mismatch at " + where);
        for (size_t w = 0; w < ld.weights.size(); ++w) {
            if (shape_from_json(shapes.at(w)) != ld.weights[w].shape)
                fail(ErrorCode::Format, "checkpoint shape/byte-count mismatch at " + where);
            read_f32le(in, ld.weights[w], where);
        }
        if (entry.contains("bias") != ld.bias.has_value())
            fail(ErrorCode::Format, "checkpoint bias presence mismatch at " + where);
        if (ld.bias) {
            if (shape_from_json(entry.at("bias")) != ld.bias->shape)
                fail(ErrorCode::Format, "checkpoint bias shape mismatch at " + where);
            read_f32le(in, *ld.bias, where + " bias");
        }
    }
    if (shape_from_json(header.at("head").at("weight")) != model.head_weight.shape ||
        shape_from_json(header.at("head").at("bias")) != model.head_bias.shape)
        fail(ErrorCode::Format, "checkpoint head shape mismatch");
    read_f32le(in, model.head_weight, "head");
    read_f32le(in, model.head_bias, "head bias");
    if (in.peek() != std::ifstream::traits_type::eof())
        fail(ErrorCode::Format, "checkpoint has trailing bytes after payload");

    for (const auto& [key, bit] : header.at("precision").items())
        model.precision_map[std::stoi(key)] = bit.get<int>();

    for (const auto& ld : model.layers) {
        for (const auto& w : ld.weights) check_finite(w, "layer " + std::to_string(ld.id));
        if (ld.bias) check_finite(*ld.bias, "layer " + std::to_string(ld.id) + " bias");
    }
    validate_model(model);
    return model;
}

std::string checkpoint_dataset_tag(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::MissingArtifact, "checkpoint not found: " + path);
    return read_header(in).at("dataset").get<std::string>();
}

} // namespace svitq
