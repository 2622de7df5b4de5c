#include "svitq/tensor.hpp"

#include <cmath>
#include <cstring>

#include "svitq/error.hpp"

namespace svitq {

size_t shape_numel(const std::vector<size_t>& shape) {
    size_t n = 1;
    for (size_t d : shape) {
        if (d == 0) fail(ErrorCode::InvalidArgument, "tensor dimension must be positive");
        n *= d;
    }
    return shape.empty() ? 0 : n;
}

Tensor::Tensor(std::vector<size_t> s) : shape(std::move(s)) {
    data.assign(shape_numel(shape), 0.0f);
}

Tensor::Tensor(std::vector<size_t> s, std::vector<float> d)
    : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != data.size())
        fail(ErrorCode::InvalidArgument, "tensor shape does not match data size");
}

bool Tensor::all_finite() const {
    for (float v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

bool bit_identical(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) return false;
    if (a.data.empty()) return b.data.empty();
    return std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0;
}

} // namespace svitq
