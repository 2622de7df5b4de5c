#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace svitq {

// Dense row-major float32 array. product(shape) == data.size() always.
struct Tensor {
    std::vector<size_t> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<size_t> s);
    Tensor(std::vector<size_t> s, std::vector<float> d);

    size_t numel() const noexcept { return data.size(); }
    bool empty() const noexcept { return data.empty(); }

    float* ptr() noexcept { return data.data(); }
    const float* ptr() const noexcept { return data.data(); }

    // 4-d accessors for (n, c, h, w) feature maps
    size_t dim(size_t i) const { return shape.at(i); }
    float& at4(size_t n, size_t c, size_t h, size_t w) {
        return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    float at4(size_t n, size_t c, size_t h, size_t w) const {
        return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const;

    static Tensor zeros(std::vector<size_t> s) { return Tensor(std::move(s)); }
};

size_t shape_numel(const std::vector<size_t>& shape);

// exact byte-level comparison
bool bit_identical(const Tensor& a, const Tensor& b);

} // namespace svitq
