#pragma once

#include <filesystem>
#include <string>

#include "svitq/model.hpp"
#include "svitq/rng.hpp"

namespace svitq::test {

// Hand-built model with `n` single-tensor conv layers spread over the four
// stages. Structurally too small to run the forward pass; used by search and
// quantization tests together with scripted evaluators.
inline NetworkModel make_mini_model(int n, uint64_t seed = 7) {
    NetworkModel m;
    m.config = ToyConfig{1, 16, 16, 1, 0, 0, 2, 1};
    Rng rng(seed);
    for (int s = 1; s <= 4; ++s) m.stages.push_back(StageInfo{s, {}});
    for (int i = 1; i <= n; ++i) {
        const int stage = 1 + (i - 1) % 4;
        LayerDescriptor ld;
        ld.id = i;
        ld.kind = LayerKind::Conv;
        ld.stage = stage;
        ld.block_label = "L" + std::to_string(i);
        ld.block_ordinal = 1;
        Tensor w({2, 2, 3, 3});
        for (auto& v : w.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
        ld.weights.push_back(std::move(w));
        ld.bias = Tensor({2});
        m.stages[static_cast<size_t>(stage - 1)].blocks.push_back(
            BlockInfo{ld.block_label, BlockKind::Downsample, {i}});
        m.layers.push_back(std::move(ld));
        m.precision_map[i] = 32;
    }
    m.head_weight = Tensor({2, 2});
    for (auto& v : m.head_weight.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    m.head_bias = Tensor({2});
    return m;
}

class TempDir {
public:
    explicit TempDir(const std::string& name) {
        path_ = std::filesystem::temp_directory_path() / ("svitq_test_" + name);
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    std::string str() const { return path_.string(); }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

} // namespace svitq::test
