#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "treemon/errors.hpp"

namespace treemon {

namespace detail {
// Probabilities of the 11 support points: min, nine deciles, max.
inline constexpr std::array<double, 11> kSupportLevels = {
    0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
} // namespace detail

/// Fixed-grid distribution record for one (job, metric, cycle): the number of
/// underlying per-core values, exact extrema, and the nine interior deciles.
/// This is the unit that travels up the agent tree and into the store.
struct QuantileSummary {
    std::uint64_t count = 0;
    double min = 0.0;
    double max = 0.0;
    std::array<double, 9> deciles{}; // probability levels 0.1 .. 0.9

    // Support point i in [0, 10]: min, deciles..., max.
    double support(std::size_t i) const {
        if (i == 0)
            return min;
        if (i == 10)
            return max;
        return deciles[i - 1];
    }

    bool valid() const {
        if (count < 1 || !std::isfinite(min) || !std::isfinite(max))
            return false;
        double prev = min;
        for (double d : deciles) {
            if (!std::isfinite(d) || d < prev)
                return false;
            prev = d;
        }
        return max >= prev;
    }

    void validate() const {
        if (!valid())
            throw InvalidRecord("quantile summary violates its invariants");
    }

    friend bool operator==(const QuantileSummary&, const QuantileSummary&) = default;
};

/// Quantile of a sorted sample by linear interpolation on h = (n-1)p:
/// result = x[i] + (h - i)(x[i+1] - x[i]) with i = floor(h); the second term
/// vanishes when h is integral. Shared by exact summaries and job runtime
/// statistics so every exact quantile in the system uses one convention.
inline double interpolated_quantile(std::span<const double> sorted, double p) {
    const std::size_t n = sorted.size();
    const double h = static_cast<double>(n - 1) * p;
    const auto i = static_cast<std::size_t>(h);
    if (i >= n - 1)
        return sorted[n - 1];
    const double frac = h - static_cast<double>(i);
    if (frac == 0.0)
        return sorted[i];
    return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
}

/// Exact summary of a value set: true extrema plus interpolated deciles.
inline QuantileSummary exact_summary(std::span<const double> values) {
    if (values.empty())
        throw EmptyInput("exact_summary: no values");
    for (double v : values)
        if (!std::isfinite(v))
            throw NonFiniteInput("exact_summary: non-finite value");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());

    QuantileSummary s;
    s.count = sorted.size();
    s.min = sorted.front();
    s.max = sorted.back();
    for (std::size_t i = 0; i < s.deciles.size(); ++i)
        s.deciles[i] = interpolated_quantile(sorted, detail::kSupportLevels[i + 1]);
    return s;
}

/// Piecewise-linear CDF through the summary's 11 support points. Returns 0
/// below min and 1 above max. Where consecutive support values coincide the
/// CDF jumps, taking the larger probability at that value (right-continuous).
inline double cdf_eval(const QuantileSummary& s, double v) {
    if (v < s.min)
        return 0.0;
    if (v > s.max)
        return 1.0;
    // Largest support index with coordinate <= v; exists because v >= min.
    std::size_t k = 10;
    while (s.support(k) > v)
        --k;
    if (s.support(k) == v)
        return detail::kSupportLevels[k];
    // Strictly inside the segment (support(k), support(k+1)).
    const double x0 = s.support(k);
    const double x1 = s.support(k + 1);
    const double p0 = detail::kSupportLevels[k];
    const double p1 = detail::kSupportLevels[k + 1];
    return p0 + (v - x0) / (x1 - x0) * (p1 - p0);
}

namespace detail {

// Left limit of the piecewise-linear CDF at v. Differs from cdf_eval only at
// jump coordinates, where it returns the probability below the jump.
inline double cdf_left_limit(const QuantileSummary& s, double v) {
    if (v <= s.min)
        return 0.0;
    if (v > s.max)
        return 1.0;
    std::size_t k = 0;
    while (k <= 10 && s.support(k) < v)
        ++k;
    if (k <= 10 && s.support(k) == v)
        return kSupportLevels[k];
    return cdf_eval(s, v);
}

// Canonical total order over summaries so mixture accumulation never depends
// on caller ordering (merge output is bit-identical under permutation).
inline bool summary_order(const QuantileSummary& a, const QuantileSummary& b) {
    if (a.min != b.min)
        return a.min < b.min;
    for (std::size_t i = 0; i < a.deciles.size(); ++i)
        if (a.deciles[i] != b.deciles[i])
            return a.deciles[i] < b.deciles[i];
    if (a.max != b.max)
        return a.max < b.max;
    return a.count < b.count;
}

} // namespace detail

/// Estimation-based merge: inverts the count-weighted mixture of the input
/// CDFs at each decile level. Count, min and max are exact; deciles are the
/// generalized inverse F^-1(p) = inf{v : F(v) >= p} of the mixture, evaluated
/// over the pooled support breakpoints, ties resolved to the smallest
/// breakpoint coordinate.
inline QuantileSummary merge_estimate(std::span<const QuantileSummary> parts) {
    if (parts.empty())
        throw EmptyInput("merge_estimate: no summaries");
    for (const QuantileSummary& s : parts)
        s.validate();

    std::vector<const QuantileSummary*> order;
    order.reserve(parts.size());
    for (const QuantileSummary& s : parts)
        order.push_back(&s);
    std::sort(order.begin(), order.end(),
              [](const QuantileSummary* a, const QuantileSummary* b) {
                  return detail::summary_order(*a, *b);
              });

    QuantileSummary merged;
    merged.count = 0;
    merged.min = order.front()->min;
    merged.max = order.front()->max;
    for (const QuantileSummary* s : order) {
        merged.count += s->count;
        merged.min = std::min(merged.min, s->min);
        merged.max = std::max(merged.max, s->max);
    }

    // Pooled breakpoints: every support coordinate of every input. The
    // mixture CDF is linear between consecutive breakpoints and can only
    // jump at them.
    std::vector<double> bp;
    bp.reserve(order.size() * 11);
    for (const QuantileSummary* s : order)
        for (std::size_t i = 0; i <= 10; ++i)
            bp.push_back(s->support(i));
    std::sort(bp.begin(), bp.end());
    bp.erase(std::unique(bp.begin(), bp.end()), bp.end());

    // Work with unnormalized mass W(v) = sum count_i * cdf_i(v) and compare
    // against p * total; this keeps the rounding of both sides identical, so
    // a mixture of one summary inverts to that summary bit-for-bit.
    auto mass = [&](double v, bool left_limit) {
        double acc = 0.0;
        for (const QuantileSummary* s : order) {
            const double c = static_cast<double>(s->count);
            acc += c * (left_limit ? detail::cdf_left_limit(*s, v) : cdf_eval(*s, v));
        }
        return acc;
    };

    std::vector<double> mass_at(bp.size());
    for (std::size_t i = 0; i < bp.size(); ++i)
        mass_at[i] = mass(bp[i], false);

    const double total = static_cast<double>(merged.count);
    for (std::size_t d = 0; d < merged.deciles.size(); ++d) {
        const double target = detail::kSupportLevels[d + 1] * total;
        const auto it = std::lower_bound(mass_at.begin(), mass_at.end(), target);
        const auto k = static_cast<std::size_t>(it - mass_at.begin());
        // mass_at.back() == total exactly, so k is always in range.
        double value;
        if (k == 0) {
            value = bp.front();
        } else {
            const double left = mass(bp[k], true);
            if (left > target) {
                // The mixture crosses the target strictly inside (bp[k-1], bp[k]).
                const double w0 = mass_at[k - 1];
                value = bp[k - 1] + (target - w0) / (left - w0) * (bp[k] - bp[k - 1]);
                value = std::clamp(value, bp[k - 1], bp[k]);
            } else {
                // Either the jump at bp[k] covers the target, or the segment
                // reaches it exactly at its right end; the infimum is the
                // breakpoint itself.
                value = bp[k];
            }
        }
        merged.deciles[d] = value;
    }
    return merged;
}

} // namespace treemon
