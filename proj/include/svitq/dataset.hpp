#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "svitq/tensor.hpp"

namespace svitq {

// images: (n, channels, H, W) with values in [0, 1]; labels in [0, classes)
struct Dataset {
    Tensor images;
    std::vector<int> labels;
    int classes = 0;

    size_t size() const { return labels.size(); }
    Dataset select(const std::vector<size_t>& indices) const;
};

using Batch = Dataset;

// IDX format (big-endian magic and dims, raw ubyte payload)
Tensor load_idx_images(const std::string& path); // scaled to [0, 1]
std::vector<int> load_idx_labels(const std::string& path);
Dataset load_idx(const std::string& images_path, const std::string& labels_path, int classes);

// Class-conditioned blob patterns with additive noise; balanced labels
// (i % classes) and deterministic for a given seed.
Dataset generate_synthetic(uint64_t seed, size_t n, int classes, int h = 16, int w = 16,
                           double noise = 0.08);

// Deterministic seeded subset of size k (all of `data` if k == 0 or k >= n),
// indices sorted ascending so iteration order is stable.
Dataset eval_subset(const Dataset& data, size_t k, uint64_t seed);

} // namespace svitq
