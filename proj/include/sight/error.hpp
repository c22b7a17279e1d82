#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sight {

enum class ErrorKind {
    InvalidInput,      // non-finite or negative where forbidden
    Dimension,         // empty vector or size mismatch
    Parameter,         // hyperparameter outside its range
    DegenerateClass,   // all-zero classifier row
    StreamContract,    // record drifts from the stream's (d, K)
    Parse,             // malformed file content
    Format,            // well-formed but structurally wrong file
    Validation,        // value violates a declared invariant (e.g. probs off-simplex)
    Version,           // unsupported format_version
    Config,            // invalid simulator / run configuration
    InsufficientData,  // not enough structure to compute a statistic
    Invariant,         // internal invariant violated
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidInput: return "invalid input";
        case ErrorKind::Dimension: return "dimension error";
        case ErrorKind::Parameter: return "parameter error";
        case ErrorKind::DegenerateClass: return "degenerate class";
        case ErrorKind::StreamContract: return "stream contract violation";
        case ErrorKind::Parse: return "parse error";
        case ErrorKind::Format: return "format error";
        case ErrorKind::Validation: return "validation error";
        case ErrorKind::Version: return "version mismatch";
        case ErrorKind::Config: return "config error";
        case ErrorKind::InsufficientData: return "insufficient data";
        case ErrorKind::Invariant: return "invariant violation";
    }
    return "error";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

}  // namespace sight
