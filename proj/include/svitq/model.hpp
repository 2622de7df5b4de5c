#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "svitq/tensor.hpp"

namespace svitq {

enum class LayerKind { Conv, DWConv, PWConv, RepConv, Linear, SDSA };

const char* layer_kind_name(LayerKind k);
LayerKind layer_kind_from_name(const std::string& name);

// A quantizable layer. SDSA layers carry three weight tensors (query, key,
// value projections) and no bias; every other kind carries exactly one weight
// tensor and a bias.
struct LayerDescriptor {
    int id = 0; // contiguous 1..L in forward order
    LayerKind kind = LayerKind::Conv;
    std::vector<Tensor> weights; // size 1, or 3 for SDSA
    std::optional<Tensor> bias;
    int stage = 0; // 1..4
    std::string block_label;
    int block_ordinal = 0; // position of this layer within its block, 1-based

    size_t weight_param_count() const;
    size_t bias_param_count() const;
};

enum class BlockKind { Downsample, ConvBlock, TransformerBlock };

struct BlockInfo {
    std::string label;
    BlockKind kind = BlockKind::Downsample;
    std::vector<int> layer_ids;
};

struct StageInfo {
    int index = 0; // 1..4
    std::vector<BlockInfo> blocks;
};

// Architecture parameters for the four-stage toy network.
struct ToyConfig {
    int base_channels = 8;   // C; stage widths are C, 2C, 4C, 8C, 10C
    int input_h = 32;
    int input_w = 32;
    int in_channels = 1;
    int tran_blocks_s3 = 2;  // transformer blocks in stage 3
    int tran_blocks_s4 = 1;  // transformer blocks in stage 4
    int classes = 10;
    int timesteps = 4;
};

struct NetworkModel {
    ToyConfig config;
    std::vector<LayerDescriptor> layers; // id order == forward order
    std::vector<StageInfo> stages;
    Tensor head_weight; // (classes, 10C)
    Tensor head_bias;   // (classes)
    std::map<int, int> precision_map; // layer id -> bit currently in effect

    int timesteps() const { return config.timesteps; }
    const LayerDescriptor& layer(int id) const;
    LayerDescriptor& layer(int id);
    bool has_layer(int id) const;
};

struct QuantizableLayerInfo {
    int id;
    LayerKind kind;
    std::string block_label;
    int block_ordinal;
    size_t param_count; // weight parameters (all three tensors for SDSA)
};

// Builds the four-stage toy model. Stage 1 holds two (downsample, conv block)
// pairs; stage 2 one downsample plus two conv blocks; stages 3 and 4 one
// downsample plus the configured number of transformer blocks. Weights are
// fan-in-scaled uniform, biases zero, precision map all-32.
NetworkModel build_toy_model(const ToyConfig& config, uint64_t seed = 1);

std::vector<QuantizableLayerInfo> enumerate_quantizable_layers(const NetworkModel& model);

// Total parameter count: layer weights + biases + head.
size_t param_count(const NetworkModel& model);

// ids of layers whose weight bytes differ between the two models
std::vector<int> diff_layers(const NetworkModel& a, const NetworkModel& b);

bool models_bit_identical(const NetworkModel& a, const NetworkModel& b);

void validate_model(const NetworkModel& model);

} // namespace svitq
