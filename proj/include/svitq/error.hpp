#pragma once

#include <stdexcept>
#include <string>

namespace svitq {

// Error classes, each mapped to a distinct CLI exit code.
enum class ErrorCode {
    Config = 2,         // bad or missing configuration
    MissingArtifact = 3,// a required predecessor artifact does not exist
    Format = 4,         // malformed file (checkpoint, spec, table, IDX, ...)
    StaleArtifact = 5,  // digest mismatch between artifact and current inputs
    InvalidArgument = 6,// bad value passed to an operation
    Diverged = 7,       // training loss became non-finite
    Integrity = 10,     // referenced artifact missing or hash mismatch
    Internal = 20,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }
    int exit_code() const noexcept { return static_cast<int>(code_); }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
    throw Error(code, what);
}

} // namespace svitq
