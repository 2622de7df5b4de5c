#include "svitq/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "svitq/error.hpp"
#include "svitq/rng.hpp"

namespace svitq {

namespace {

uint32_t read_u32be(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) fail(ErrorCode::Format, "IDX file truncated: " + path);
    return static_cast<uint32_t>(b[0]) << 24 | static_cast<uint32_t>(b[1]) << 16 |
           static_cast<uint32_t>(b[2]) << 8 | static_cast<uint32_t>(b[3]);
}

} // namespace

Dataset Dataset::select(const std::vector<size_t>& indices) const {
    const size_t c = images.shape[1], h = images.shape[2], w = images.shape[3];
    const size_t stride = c * h * w;
    Dataset out;
    out.classes = classes;
    out.images = Tensor({indices.size(), c, h, w});
    out.labels.reserve(indices.size());
    for (size_t i = 0; i < indices.size(); ++i) {
        const size_t src = indices[i];
        if (src >= size()) fail(ErrorCode::InvalidArgument, "dataset index out of range");
        std::copy_n(images.data.begin() + static_cast<long>(src * stride), stride,
                    out.images.data.begin() + static_cast<long>(i * stride));
        out.labels.push_back(labels[src]);
    }
    return out;
}

Tensor load_idx_images(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::MissingArtifact, "IDX file not found: " + path);
    const uint32_t magic = read_u32be(in, path);
    if (magic != 0x00000803u)
        fail(ErrorCode::Format, "IDX image magic mismatch in " + path);
    const size_t n = read_u32be(in, path);
    const size_t rows = read_u32be(in, path);
    const size_t cols = read_u32be(in, path);
    std::vector<unsigned char> raw(n * rows * cols);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<size_t>(in.gcount()) != raw.size())
        fail(ErrorCode::Format, "IDX image payload truncated: " + path);
    Tensor t({n, 1, rows, cols});
    for (size_t i = 0; i < raw.size(); ++i) t.data[i] = static_cast<float>(raw[i]) / 255.0f;
    return t;
}

std::vector<int> load_idx_labels(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::MissingArtifact, "IDX file not found: " + path);
    const uint32_t magic = read_u32be(in, path);
    if (magic != 0x00000801u)
        fail(ErrorCode::Format, "IDX label magic mismatch in " + path);
    const size_t n = read_u32be(in, path);
    std::vector<unsigned char> raw(n);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<size_t>(in.gcount()) != raw.size())
        fail(ErrorCode::Format, "IDX label payload truncated: " + path);
    return std::vector<int>(raw.begin(), raw.end());
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path, int classes) {
    Dataset d;
    d.images = load_idx_images(images_path);
    d.labels = load_idx_labels(labels_path);
    d.classes = classes;
    if (d.images.shape[0] != d.labels.size())
        fail(ErrorCode::Format, "IDX image/label counts disagree");
    for (int l : d.labels)
        if (l < 0 || l >= classes) fail(ErrorCode::Format, "IDX label out of range");
    return d;
}

Dataset generate_synthetic(uint64_t seed, size_t n, int classes, int h, int w, double noise) {
    if (classes < 2) fail(ErrorCode::InvalidArgument, "need at least two classes");
    if (n == 0) fail(ErrorCode::InvalidArgument, "need at least one sample");
    Rng rng(derive_seed(seed, "synthetic"));

    Dataset d;
    d.classes = classes;
    d.images = Tensor({n, 1, static_cast<size_t>(h), static_cast<size_t>(w)});
    d.labels.resize(n);

    // Each class gets a pair of Gaussian blobs at class-specific ring
    // positions; per-sample noise keeps samples distinct but separable.
    const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
    const double radius = 0.32 * std::min(h, w);
    const double sigma = std::min(h, w) / 6.0;
    const double two_pi = 2.0 * 3.14159265358979323846;

    for (size_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % static_cast<size_t>(classes));
        d.labels[i] = label;
        const double angle = two_pi * label / classes;
        const double b1y = cy + radius * std::sin(angle);
        const double b1x = cx + radius * std::cos(angle);
        const double b2y = cy - radius * std::sin(angle + two_pi / (2.0 * classes));
        const double b2x = cx - radius * std::cos(angle + two_pi / (2.0 * classes));
        float* img = &d.images.data[i * static_cast<size_t>(h) * static_cast<size_t>(w)];
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double d1 = ((y - b1y) * (y - b1y) + (x - b1x) * (x - b1x)) /
                                  (2.0 * sigma * sigma);
                const double d2 = ((y - b2y) * (y - b2y) + (x - b2x) * (x - b2x)) /
                                  (2.0 * sigma * sigma);
                double v = 0.9 * std::exp(-d1) + 0.6 * std::exp(-d2);
                v += rng.uniform(-noise, noise);
                img[y * w + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
    }
    return d;
}

Dataset eval_subset(const Dataset& data, size_t k, uint64_t seed) {
    if (k == 0 || k >= data.size()) return data;
    std::vector<size_t> idx(data.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(derive_seed(seed, "eval-subset"));
    rng.shuffle(idx);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return data.select(idx);
}

} // namespace svitq
