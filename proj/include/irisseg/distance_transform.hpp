#pragma once

// Exact Euclidean distance transform by separable lower envelopes of
// parabolas (Felzenszwalb & Huttenlocher). Squared distances between pixel
// centres are integers, so results are exact in double precision.

#include <cmath>
#include <cstdint>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "grid.hpp"

namespace irisseg {

inline constexpr double kNoFeature = 1e20;

namespace detail {

// One-dimensional squared distance transform of sampled function f.
inline void edt_1d(std::span<const double> f, std::span<double> d, std::vector<std::size_t>& v,
                   std::vector<double>& z) {
    const std::size_t n = f.size();
    v.resize(n);
    z.resize(n + 1);
    std::size_t k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (std::size_t q = 1; q < n; ++q) {
        const double fq = f[q] + double(q) * double(q);
        auto intersect = [&](std::size_t vk) {
            const double p = double(vk);
            return (fq - (f[vk] + p * p)) / (2.0 * double(q) - 2.0 * p);
        };
        double s = intersect(v[k]);
        // z[0] is -inf, so this stops at k == 0 at the latest
        while (s <= z[k]) {
            --k;
            s = intersect(v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (std::size_t q = 0; q < n; ++q) {
        while (z[k + 1] < double(q)) ++k;
        const double dq = double(q) - double(v[k]);
        d[q] = dq * dq + f[v[k]];
    }
}

}  // namespace detail

/// Squared Euclidean distance from every pixel to the nearest pixel where
/// `is_feature` holds. Pixels are kNoFeature (or larger) when there is no
/// feature at all.
template <class Pred>
Grid<double> squared_distance_transform(std::size_t height, std::size_t width, Pred&& is_feature) {
    Grid<double> dist(height, width);
    for (std::size_t r = 0; r < height; ++r)
        for (std::size_t c = 0; c < width; ++c) dist(r, c) = is_feature(r, c) ? 0.0 : kNoFeature;

    std::vector<double> f(std::max(height, width)), d(std::max(height, width)), z;
    std::vector<std::size_t> v;
    for (std::size_t c = 0; c < width; ++c) {
        for (std::size_t r = 0; r < height; ++r) f[r] = dist(r, c);
        detail::edt_1d(std::span(f).first(height), std::span(d).first(height), v, z);
        for (std::size_t r = 0; r < height; ++r) dist(r, c) = d[r];
    }
    for (std::size_t r = 0; r < height; ++r) {
        for (std::size_t c = 0; c < width; ++c) f[c] = dist(r, c);
        detail::edt_1d(std::span(f).first(width), std::span(d).first(width), v, z);
        for (std::size_t c = 0; c < width; ++c) dist(r, c) = d[c];
    }
    return dist;
}

/// Convenience overload: non-zero entries are feature pixels.
inline Grid<double> squared_distance_transform(const Grid<std::uint8_t>& features) {
    return squared_distance_transform(features.height(), features.width(),
                                      [&](std::size_t r, std::size_t c) { return features(r, c) != 0; });
}

}  // namespace irisseg
