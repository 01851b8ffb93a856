#pragma once

#include <cmath>
#include <cstddef>

#include "sqreg/rng.hpp"

namespace sqreg {

/// Marsaglia polar method; the second variate of the pair is discarded.
inline double standard_normal(Rng& rng) noexcept {
    for (;;) {
        const double u = 2.0 * rng.uniform() - 1.0;
        const double v = 2.0 * rng.uniform() - 1.0;
        const double q = u * u + v * v;
        if (q > 0.0 && q < 1.0) return u * std::sqrt(-2.0 * std::log(q) / q);
    }
}

inline void fill_standard_normal(Rng& rng, double* out, std::size_t n) noexcept {
    std::size_t i = 0;
    while (i < n) {
        const double u = 2.0 * rng.uniform() - 1.0;
        const double v = 2.0 * rng.uniform() - 1.0;
        const double q = u * u + v * v;
        if (!(q > 0.0 && q < 1.0)) continue;
        const double f = std::sqrt(-2.0 * std::log(q) / q);
        out[i++] = u * f;
        if (i < n) out[i++] = v * f;
    }
}

/// Chi-squared variate with k degrees of freedom: a sum of squared normals for
/// small k, Marsaglia-Tsang gamma sampling otherwise.
inline double chi_squared(Rng& rng, int k) noexcept {
    if (k <= 0) return 0.0;
    if (k <= 8) {
        double acc = 0.0;
        for (int i = 0; i < k; ++i) {
            const double g = standard_normal(rng);
            acc += g * g;
        }
        return acc;
    }
    const double shape = 0.5 * k;
    const double dd = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * dd);
    for (;;) {
        double x, v;
        do {
            x = standard_normal(rng);
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = rng.uniform_open();
        if (std::log(u) < 0.5 * x * x + dd - dd * v + dd * std::log(v)) return 2.0 * dd * v;
    }
}

}  // namespace sqreg
