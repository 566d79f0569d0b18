#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace quopt {

enum class ErrorCode {
    ShapeOutOfBounds,
    GeometryMismatch,
    ConfigMismatch,
    DegenerateSeries,
    BinOutOfRange,
    BinMismatch,
    NoFringeDetected,
    MissingReference,
    InsufficientAngularRange,
    CorUndetermined,
    TooFewAngles,
    InvalidArgument,
    FormatError,
    IoError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::ShapeOutOfBounds: return "ShapeOutOfBounds";
        case ErrorCode::GeometryMismatch: return "GeometryMismatch";
        case ErrorCode::ConfigMismatch: return "ConfigMismatch";
        case ErrorCode::DegenerateSeries: return "DegenerateSeries";
        case ErrorCode::BinOutOfRange: return "BinOutOfRange";
        case ErrorCode::BinMismatch: return "BinMismatch";
        case ErrorCode::NoFringeDetected: return "NoFringeDetected";
        case ErrorCode::MissingReference: return "MissingReference";
        case ErrorCode::InsufficientAngularRange: return "InsufficientAngularRange";
        case ErrorCode::CorUndetermined: return "CorUndetermined";
        case ErrorCode::TooFewAngles: return "TooFewAngles";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::FormatError: return "FormatError";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

/// Numeric failures map to CLI exit code 4, everything else is a data/format
/// problem (exit code 3).
constexpr bool is_numeric_failure(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::DegenerateSeries:
        case ErrorCode::NoFringeDetected:
        case ErrorCode::CorUndetermined:
            return true;
        default:
            return false;
    }
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
    if (!cond) fail(code, what);
}

}  // namespace quopt
