#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string_view>

#include "treemon/errors.hpp"

namespace treemon {

// Raw per-core counters for one measurement window. Counter fields are
// real-valued so synthetic sources can realize drawn property targets
// exactly; a hardware reader would fill them with integers.
struct CounterSample {
    double cycles = 0.0;
    double instructions = 0.0;
    double branch_mispredictions = 0.0;
    double fp_scalar_ops = 0.0;
    double fp_avx_ops = 0.0;
    double window_s = 0.0;

    bool valid() const {
        return cycles >= 0.0 && instructions >= 0.0 && branch_mispredictions >= 0.0 &&
               fp_scalar_ops >= 0.0 && fp_avx_ops >= 0.0 && window_s > 0.0 &&
               branch_mispredictions <= instructions && std::isfinite(cycles) &&
               std::isfinite(instructions) && std::isfinite(branch_mispredictions) &&
               std::isfinite(fp_scalar_ops) && std::isfinite(fp_avx_ops) &&
               std::isfinite(window_s);
    }

    void validate() const {
        if (!valid())
            throw InvalidRecord("counter sample violates its invariants");
    }
};

enum class PropertyKind {
    Cpi,
    BranchMispredictRatio,
    Flops,
    AvxFlops,
    AvxFraction,
};

inline constexpr std::array<PropertyKind, 5> kPropertyKinds = {
    PropertyKind::Cpi,
    PropertyKind::BranchMispredictRatio,
    PropertyKind::Flops,
    PropertyKind::AvxFlops,
    PropertyKind::AvxFraction,
};

constexpr std::string_view property_token(PropertyKind kind) {
    switch (kind) {
    case PropertyKind::Cpi: return "CPI";
    case PropertyKind::BranchMispredictRatio: return "BR_MISP_RATIO";
    case PropertyKind::Flops: return "FLOPS";
    case PropertyKind::AvxFlops: return "AVX_FLOPS";
    case PropertyKind::AvxFraction: return "AVX_FRAC";
    }
    return "";
}

inline std::optional<PropertyKind> parse_property_token(std::string_view token) {
    for (PropertyKind kind : kPropertyKinds)
        if (property_token(kind) == token)
            return kind;
    return std::nullopt;
}

struct PropertyValue {
    PropertyKind kind;
    double value = 0.0;
    int core_id = 0;
    std::int64_t cycle_ts = 0;
};

/// Derives one performance property from a counter sample.
///
/// avx_width scales vectorized operations when counting floating-point work;
/// the default 1.0 counts one AVX operation as one op.
///
/// Throws ZeroDenominator when the property's denominator is zero (idle
/// window); the caller is expected to drop the sample.
inline double derive(PropertyKind kind, const CounterSample& s, double avx_width = 1.0) {
    const double avx_ops = avx_width * s.fp_avx_ops;
    switch (kind) {
    case PropertyKind::Cpi:
        if (s.instructions == 0.0)
            throw ZeroDenominator("CPI: zero instructions");
        return s.cycles / s.instructions;
    case PropertyKind::BranchMispredictRatio:
        if (s.instructions == 0.0)
            throw ZeroDenominator("branch misprediction ratio: zero instructions");
        return s.branch_mispredictions / s.instructions;
    case PropertyKind::Flops:
        return (s.fp_scalar_ops + avx_ops) / s.window_s;
    case PropertyKind::AvxFlops:
        return avx_ops / s.window_s;
    case PropertyKind::AvxFraction: {
        const double total = s.fp_scalar_ops + avx_ops;
        if (total == 0.0)
            throw ZeroDenominator("AVX fraction: zero floating point operations");
        return avx_ops / total;
    }
    }
    throw Error("unknown property kind");
}

inline PropertyValue derive_at(PropertyKind kind, const CounterSample& s, int core_id,
                               std::int64_t cycle_ts, double avx_width = 1.0) {
    return PropertyValue{kind, derive(kind, s, avx_width), core_id, cycle_ts};
}

} // namespace treemon
