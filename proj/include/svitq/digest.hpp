#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace svitq {

// FNV-1a 64-bit, used for config digests and artifact content addressing.
class Fnv64 {
public:
    Fnv64& update(const void* data, size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < n; ++i) {
            h_ ^= p[i];
            h_ *= 1099511628211ull;
        }
        return *this;
    }

    Fnv64& update(std::string_view s) { return update(s.data(), s.size()); }

    uint64_t value() const noexcept { return h_; }

    std::string hex() const {
        static const char* digits = "0123456789abcdef";
        std::string out(16, '0');
        uint64_t v = h_;
        for (int i = 15; i >= 0; --i) {
            out[static_cast<size_t>(i)] = digits[v & 0xf];
            v >>= 4;
        }
        return out;
    }

private:
    uint64_t h_ = 14695981039346656037ull;
};

inline std::string digest_hex(std::string_view s) {
    Fnv64 f;
    f.update(s);
    return f.hex();
}

std::string digest_file(const std::string& path);

} // namespace svitq
