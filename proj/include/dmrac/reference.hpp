#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <string_view>

#include "dmrac/errors.hpp"

namespace dmrac {

enum class ReferenceKind { Constant, Sine, Square };

[[nodiscard]] inline std::string_view to_string(ReferenceKind k) noexcept {
    switch (k) {
        case ReferenceKind::Constant: return "constant";
        case ReferenceKind::Sine: return "sine";
        case ReferenceKind::Square: return "square";
    }
    return "constant";
}

[[nodiscard]] inline ReferenceKind parse_reference_kind(std::string_view s) {
    if (s == "constant") return ReferenceKind::Constant;
    if (s == "sine") return ReferenceKind::Sine;
    if (s == "square") return ReferenceKind::Square;
    throw Error(ErrorKind::ValidationError, "unknown reference kind '" + std::string(s) + "'");
}

/// Leader input r(t). Zero for t < 0; the same value drives every input channel.
struct ReferenceSignal {
    ReferenceKind kind = ReferenceKind::Constant;
    double amplitude = 1.0;
    double period = 40.0;
    double offset = 0.0;

    void validate() const {
        if (kind != ReferenceKind::Constant && !(period > 0.0)) {
            throw Error(ErrorKind::ValidationError, "reference period must be positive");
        }
    }

    [[nodiscard]] double value(double t) const {
        if (t < 0.0) return 0.0;
        switch (kind) {
            case ReferenceKind::Constant: return offset + amplitude;
            case ReferenceKind::Sine: return offset + amplitude * std::sin(2.0 * std::numbers::pi * t / period);
            case ReferenceKind::Square: {
                const double phase = std::fmod(t, period);
                return offset + (phase < 0.5 * period ? amplitude : -amplitude);
            }
        }
        return 0.0;
    }

    void fill(double t, std::span<double> out) const {
        const double v = value(t);
        for (double& o : out) o = v;
    }
};

}  // namespace dmrac
