#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dmrac {

enum class ErrorKind {
    DimensionMismatch,
    SingularMatrix,
    NotPositiveDefinite,
    NotSymmetric,
    NotHurwitz,
    UnbalancedTopology,
    FutureQuery,
    HistoryExpired,
    NonFiniteState,
    NoMatchingSolution,
    SingularWeight,
    DivergenceDetected,
    EmptyTrace,
    ParseError,
    ValidationError,
};

[[nodiscard]] constexpr std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::SingularMatrix: return "SingularMatrix";
        case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
        case ErrorKind::NotSymmetric: return "NotSymmetric";
        case ErrorKind::NotHurwitz: return "NotHurwitz";
        case ErrorKind::UnbalancedTopology: return "UnbalancedTopology";
        case ErrorKind::FutureQuery: return "FutureQuery";
        case ErrorKind::HistoryExpired: return "HistoryExpired";
        case ErrorKind::NonFiniteState: return "NonFiniteState";
        case ErrorKind::NoMatchingSolution: return "NoMatchingSolution";
        case ErrorKind::SingularWeight: return "SingularWeight";
        case ErrorKind::DivergenceDetected: return "DivergenceDetected";
        case ErrorKind::EmptyTrace: return "EmptyTrace";
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::ValidationError: return "ValidationError";
    }
    return "Unknown";
}

/// Single exception type for the library; `kind()` tells callers what failed.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), detail_(message) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }
    [[nodiscard]] const std::string& detail() const noexcept { return detail_; }

private:
    ErrorKind kind_;
    std::string detail_;
};

}  // namespace dmrac
