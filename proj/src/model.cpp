#include "svitq/model.hpp"

#include <cmath>
#include <string>

#include "svitq/error.hpp"
#include "svitq/rng.hpp"

namespace svitq {

namespace {

// Keeps initial spike rates in a workable band for the default LIF parameters.
constexpr double kInitGain = 2.0;

Tensor init_uniform(Rng& rng, std::vector<size_t> shape, size_t fan_in) {
    Tensor t(std::move(shape));
    const double a = kInitGain * std::sqrt(6.0 / static_cast<double>(fan_in));
    for (float& v : t.data) v = static_cast<float>(rng.uniform(-a, a));
    return t;
}

struct Builder {
    NetworkModel model;
    Rng rng;
    int next_id = 1;

    explicit Builder(uint64_t seed) : rng(seed) {}

    LayerDescriptor& add_layer(LayerKind kind, int stage, BlockInfo& block) {
        LayerDescriptor ld;
        ld.id = next_id++;
        ld.kind = kind;
        ld.stage = stage;
        ld.block_label = block.label;
        ld.block_ordinal = static_cast<int>(block.layer_ids.size()) + 1;
        block.layer_ids.push_back(ld.id);
        model.layers.push_back(std::move(ld));
        return model.layers.back();
    }

    void conv_layer(LayerKind kind, int stage, BlockInfo& block, size_t out_ch, size_t in_ch,
                    size_t k, size_t groups = 1) {
        auto& ld = add_layer(kind, stage, block);
        const size_t fan_in = (in_ch / groups) * k * k;
        ld.weights.push_back(init_uniform(rng, {out_ch, in_ch / groups, k, k}, fan_in));
        ld.bias = Tensor({out_ch});
    }

    void linear_layer(int stage, BlockInfo& block, size_t out_dim, size_t in_dim) {
        auto& ld = add_layer(LayerKind::Linear, stage, block);
        ld.weights.push_back(init_uniform(rng, {out_dim, in_dim}, in_dim));
        ld.bias = Tensor({out_dim});
    }

    void sdsa_layer(int stage, BlockInfo& block, size_t ch) {
        auto& ld = add_layer(LayerKind::SDSA, stage, block);
        for (int i = 0; i < 3; ++i)
            ld.weights.push_back(init_uniform(rng, {ch, ch, 1, 1}, ch));
    }

    BlockInfo& new_block(StageInfo& stage, std::string label, BlockKind kind) {
        stage.blocks.push_back(BlockInfo{std::move(label), kind, {}});
        return stage.blocks.back();
    }

    // Separable CONV (pointwise, depthwise, pointwise) + Channel CONV (two 3x3)
    void conv_snn_block(StageInfo& stage, const std::string& label, size_t ch) {
        auto& block = new_block(stage, label, BlockKind::ConvBlock);
        conv_layer(LayerKind::PWConv, stage.index, block, ch, ch, 1);
        conv_layer(LayerKind::DWConv, stage.index, block, ch, ch, 3, ch);
        conv_layer(LayerKind::PWConv, stage.index, block, ch, ch, 1);
        conv_layer(LayerKind::Conv, stage.index, block, ch, ch, 3);
        conv_layer(LayerKind::Conv, stage.index, block, ch, ch, 3);
    }

    // SDSA sub-block (RepConv mixer, QKV core, three RepConvs) + Channel MLP
    void transformer_block(StageInfo& stage, const std::string& label, size_t ch) {
        auto& block = new_block(stage, label, BlockKind::TransformerBlock);
        conv_layer(LayerKind::RepConv, stage.index, block, ch, ch, 3);
        sdsa_layer(stage.index, block, ch);
        conv_layer(LayerKind::RepConv, stage.index, block, ch, ch, 3);
        conv_layer(LayerKind::RepConv, stage.index, block, ch, ch, 3);
        conv_layer(LayerKind::RepConv, stage.index, block, ch, ch, 3);
        linear_layer(stage.index, block, 2 * ch, ch);
        linear_layer(stage.index, block, ch, 2 * ch);
    }

    void downsample_block(StageInfo& stage, const std::string& label, size_t out_ch,
                          size_t in_ch) {
        auto& block = new_block(stage, label, BlockKind::Downsample);
        conv_layer(LayerKind::Conv, stage.index, block, out_ch, in_ch, 3);
    }
};

} // namespace

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv: return "conv";
        case LayerKind::DWConv: return "dwconv";
        case LayerKind::PWConv: return "pwconv";
        case LayerKind::RepConv: return "repconv";
        case LayerKind::Linear: return "linear";
        case LayerKind::SDSA: return "sdsa";
    }
    return "?";
}

LayerKind layer_kind_from_name(const std::string& name) {
    if (name == "conv") return LayerKind::Conv;
    if (name == "dwconv") return LayerKind::DWConv;
    if (name == "pwconv") return LayerKind::PWConv;
    if (name == "repconv") return LayerKind::RepConv;
    if (name == "linear") return LayerKind::Linear;
    if (name == "sdsa") return LayerKind::SDSA;
    fail(ErrorCode::Format, "unknown layer kind: " + name);
}

size_t LayerDescriptor::weight_param_count() const {
    size_t n = 0;
    for (const auto& w : weights) n += w.numel();
    return n;
}

size_t LayerDescriptor::bias_param_count() const {
    return bias ? bias->numel() : 0;
}

const LayerDescriptor& NetworkModel::layer(int id) const {
    if (!has_layer(id)) fail(ErrorCode::InvalidArgument, "no layer with id " + std::to_string(id));
    return layers[static_cast<size_t>(id - 1)];
}

LayerDescriptor& NetworkModel::layer(int id) {
    if (!has_layer(id)) fail(ErrorCode::InvalidArgument, "no layer with id " + std::to_string(id));
    return layers[static_cast<size_t>(id - 1)];
}

bool NetworkModel::has_layer(int id) const {
    return id >= 1 && static_cast<size_t>(id) <= layers.size() &&
           layers[static_cast<size_t>(id - 1)].id == id;
}

NetworkModel build_toy_model(const ToyConfig& config, uint64_t seed) {
    if (config.base_channels < 1 || config.in_channels < 1)
        fail(ErrorCode::InvalidArgument, "channel counts must be positive");
    if (config.classes < 2) fail(ErrorCode::InvalidArgument, "need at least two classes");
    if (config.timesteps < 1) fail(ErrorCode::InvalidArgument, "timesteps must be >= 1");
    if (config.tran_blocks_s3 < 0 || config.tran_blocks_s4 < 0)
        fail(ErrorCode::InvalidArgument, "transformer block counts must be >= 0");
    if (config.input_h <= 0 || config.input_w <= 0)
        fail(ErrorCode::InvalidArgument, "input resolution must be positive");
    if (config.input_h % 16 != 0 || config.input_w % 16 != 0)
        fail(ErrorCode::InvalidArgument,
             "input resolution must be divisible by 16 (downsampling chain /2 /4 /8 /16)");

    const size_t c = static_cast<size_t>(config.base_channels);
    Builder b(seed);
    b.model.config = config;

    // Stage 1: two (downsampling, CONV SNN block) sets at C and 2C
    StageInfo s1{1, {}};
    b.downsample_block(s1, "DS_S1_B1", c, static_cast<size_t>(config.in_channels));
    b.conv_snn_block(s1, "CONV_S1_B1", c);
    b.downsample_block(s1, "DS_S1_B2", 2 * c, c);
    b.conv_snn_block(s1, "CONV_S1_B2", 2 * c);
    b.model.stages.push_back(std::move(s1));

    // Stage 2: downsampling + two CONV SNN blocks at 4C
    StageInfo s2{2, {}};
    b.downsample_block(s2, "DS_S2", 4 * c, 2 * c);
    b.conv_snn_block(s2, "CONV_S2_B1", 4 * c);
    b.conv_snn_block(s2, "CONV_S2_B2", 4 * c);
    b.model.stages.push_back(std::move(s2));

    // Stage 3: downsampling + transformer blocks at 8C
    StageInfo s3{3, {}};
    b.downsample_block(s3, "DS_S3", 8 * c, 4 * c);
    for (int i = 1; i <= config.tran_blocks_s3; ++i)
        b.transformer_block(s3, "TRAN_S3_B" + std::to_string(i), 8 * c);
    b.model.stages.push_back(std::move(s3));

    // Stage 4: channel-widening downsampling (resolution kept) + transformer blocks at 10C
    StageInfo s4{4, {}};
    b.downsample_block(s4, "DS_S4", 10 * c, 8 * c);
    for (int i = 1; i <= config.tran_blocks_s4; ++i)
        b.transformer_block(s4, "TRAN_S4_B" + std::to_string(i), 10 * c);
    b.model.stages.push_back(std::move(s4));

    b.model.head_weight = init_uniform(b.rng, {static_cast<size_t>(config.classes), 10 * c}, 10 * c);
    b.model.head_bias = Tensor({static_cast<size_t>(config.classes)});

    for (const auto& ld : b.model.layers) b.model.precision_map[ld.id] = 32;

    validate_model(b.model);
    return b.model;
}

std::vector<QuantizableLayerInfo> enumerate_quantizable_layers(const NetworkModel& model) {
    std::vector<QuantizableLayerInfo> out;
    out.reserve(model.layers.size());
    for (const auto& ld : model.layers)
        out.push_back({ld.id, ld.kind, ld.block_label, ld.block_ordinal, ld.weight_param_count()});
    return out;
}

size_t param_count(const NetworkModel& model) {
    size_t n = 0;
    for (const auto& ld : model.layers) n += ld.weight_param_count() + ld.bias_param_count();
    n += model.head_weight.numel() + model.head_bias.numel();
    return n;
}

std::vector<int> diff_layers(const NetworkModel& a, const NetworkModel& b) {
    if (a.layers.size() != b.layers.size())
        fail(ErrorCode::InvalidArgument, "models have different layer counts");
    std::vector<int> changed;
    for (size_t i = 0; i < a.layers.size(); ++i) {
        const auto& la = a.layers[i];
        const auto& lb = b.layers[i];
        bool same = la.weights.size() == lb.weights.size();
        for (size_t w = 0; same && w < la.weights.size(); ++w)
            same = bit_identical(la.weights[w], lb.weights[w]);
        if (same && la.bias.has_value() != lb.bias.has_value()) same = false;
        if (same && la.bias && !bit_identical(*la.bias, *lb.bias)) same = false;
        if (!same) changed.push_back(la.id);
    }
    return changed;
}

bool models_bit_identical(const NetworkModel& a, const NetworkModel& b) {
    return diff_layers(a, b).empty() && bit_identical(a.head_weight, b.head_weight) &&
           bit_identical(a.head_bias, b.head_bias);
}

void validate_model(const NetworkModel& model) {
    if (model.stages.size() != 4) fail(ErrorCode::Format, "model must have four stages");
    int expect = 1;
    for (const auto& ld : model.layers) {
        if (ld.id != expect)
            fail(ErrorCode::Format, "layer ids must be contiguous 1..L in forward order");
        ++expect;
        if (ld.stage < 1 || ld.stage > 4) fail(ErrorCode::Format, "layer stage out of range");
        const size_t want = ld.kind == LayerKind::SDSA ? 3 : 1;
        if (ld.weights.size() != want)
            fail(ErrorCode::Format, "layer " + std::to_string(ld.id) + " has wrong tensor count");
    }
    if (model.precision_map.size() != model.layers.size())
        fail(ErrorCode::Format, "precision map must cover every layer exactly once");
    for (const auto& ld : model.layers) {
        auto it = model.precision_map.find(ld.id);
        if (it == model.precision_map.end())
            fail(ErrorCode::Format, "precision map missing layer " + std::to_string(ld.id));
    }
}

} // namespace svitq
