#pragma once

// Slow, obviously-correct reference computations. Nothing here calls into
// the library's numerical code, so agreement is evidence rather than echo.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

// Pair counting: wins + 0.5 * ties over all positive/negative pairs.
inline double pair_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
    double wins = 0.0;
    for (double p : pos) {
        for (double n : neg) {
            wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
        }
    }
    return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

// -log softmax(z)[y] evaluated directly, no max shift (inputs stay small).
inline double cross_entropy(const std::vector<double>& z, std::size_t y) {
    double denom = 0.0;
    for (double v : z) {
        denom += std::exp(v);
    }
    return -(z[y] - std::log(denom));
}

inline double clamp(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

// 1-D linear interpolation at fractional index u with border clamp.
inline double lerp_clamped(const std::vector<double>& v, double u) {
    const double hi = static_cast<double>(v.size() - 1);
    u = clamp(u, 0.0, hi);
    const auto i0 = static_cast<std::size_t>(std::floor(u));
    const auto i1 = std::min(i0 + 1, v.size() - 1);
    const double f = u - static_cast<double>(i0);
    return v[i0] * (1.0 - f) + v[i1] * f;
}

// Weighted mean that skips absent (NaN) entries.
inline double weighted_mean(const std::vector<double>& values, const std::vector<double>& weights) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isnan(values[i])) {
            num += weights[i] * values[i];
            den += weights[i];
        }
    }
    return num / den;
}

} // namespace oracle
