#include "svitq/digest.hpp"

#include <fstream>
#include <vector>

#include "svitq/error.hpp"

namespace svitq {

std::string digest_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::MissingArtifact, "cannot open file for hashing: " + path);
    Fnv64 f;
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        f.update(buf.data(), static_cast<size_t>(in.gcount()));
    }
    return f.hex();
}

} // namespace svitq
