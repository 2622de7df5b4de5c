#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "svitq/model.hpp"
#include "svitq/tensor.hpp"

namespace svitq {

// How the clamp range is derived from the tensor.
//   Faithful:  range = [min(w), max(w)]  (no zero point; strongly asymmetric
//              tensors clamp heavily at one end)
//   Symmetric: range = [-max|w|, +max|w|]
enum class QuantMode { Faithful, Symmetric };

const char* quant_mode_name(QuantMode m);
QuantMode quant_mode_from_name(const std::string& name);

inline constexpr int kBitAxis[5] = {32, 16, 12, 8, 4};

bool is_supported_bit(int b);          // {4, 8, 12, 16, 32}
bool is_reduced_bit(int b);            // {4, 8, 12, 16}

struct QuantParams {
    int bit = 32;
    double scale = 1.0;
    int64_t q_min = 0;
    int64_t q_max = 0;
    double w_min = 0.0;
    double w_max = 0.0;
    bool degenerate = false; // w_max == w_min: every element maps to code 0
};

struct QuantizedTensor {
    std::vector<size_t> shape;
    std::vector<int32_t> q_data;
    QuantParams params;
};

// (Q_min, Q_max) = (-2^(b-1), 2^(b-1)-1) for b in {4, 8, 12, 16}
std::pair<int64_t, int64_t> quant_range(int bit);

QuantParams compute_scale(const Tensor& t, int bit, QuantMode mode = QuantMode::Faithful);

// codes = clamp(round(w / S), Q_min, Q_max), round half away from zero
QuantizedTensor quantize_tensor(const Tensor& t, int bit, QuantMode mode = QuantMode::Faithful);

// reconstruction: code * S
Tensor dequantize(const QuantizedTensor& q);

// Replaces the layer's weight tensor(s) with dequantize(quantize(., bit)) and
// records the bit in the precision map. SDSA tensors are quantized
// independently, each with its own scale. bit == 32 leaves weights untouched.
NetworkModel quantize_layer(const NetworkModel& model, int layer_id, int bit,
                            QuantMode mode = QuantMode::Faithful);

// Per-layer bit assignment plus the pipeline step that produced it.
struct QuantSpec {
    std::map<int, int> assignment; // layer id -> bit
    std::string provenance;        // sweep | base | guided | composite | manual

    static QuantSpec uniform(const NetworkModel& model, int bit, std::string provenance = "manual");
};

// Folds quantize_layer over every layer in forward order.
NetworkModel apply_setting(const NetworkModel& model, const QuantSpec& spec,
                           QuantMode mode = QuantMode::Faithful);

// QuantSpec document: JSON with a schema version. Entries are keyed by block
// label (applying to every layer of the block) or by "label:ordinal" for a
// single layer; an optional "default" bit covers unlisted layers.
std::string quant_spec_to_json(const QuantSpec& spec, const NetworkModel& model);
QuantSpec quant_spec_from_json(const std::string& text, const NetworkModel& model);

void save_quant_spec(const QuantSpec& spec, const NetworkModel& model, const std::string& path);
QuantSpec load_quant_spec(const std::string& path, const NetworkModel& model);

} // namespace svitq
