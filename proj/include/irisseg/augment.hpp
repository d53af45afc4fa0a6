#pragma once

// Geometric data augmentation applied jointly to an image and its mask:
// scale about the centre, rotate about the centre, reflect, translate.
// Images are resampled bilinearly, masks by nearest neighbour; pixels that
// map from outside the frame become 0 / background.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>

#include "error.hpp"
#include "grid.hpp"
#include "mask.hpp"
#include "random.hpp"

namespace irisseg {

struct AugmentationRanges {
    double scale_min = 0.9;
    double scale_max = 1.1;
    double translate = 15.0;  // pixels, symmetric
    double rotate = 20.0;     // degrees, symmetric
    double reflect_probability = 0.5;

    void validate() const {
        detail::require_config(scale_min > 0.0 && scale_min <= scale_max, "augmentation scale range is invalid");
        detail::require_config(translate >= 0.0 && rotate >= 0.0, "augmentation ranges must be non-negative");
        detail::require_config(reflect_probability >= 0.0 && reflect_probability <= 1.0,
                               "reflection probability must lie in [0, 1]");
    }
};

struct AugmentationParams {
    double scale = 1.0;
    bool reflect_x = false;  // mirror columns
    bool reflect_y = false;  // mirror rows
    double translate_x = 0.0;
    double translate_y = 0.0;
    double rotation = 0.0;  // degrees
    std::uint64_t rng_seed = 0;

    static AugmentationParams identity() { return {}; }

    bool within(const AugmentationRanges& r) const {
        return scale >= r.scale_min && scale <= r.scale_max && std::abs(translate_x) <= r.translate &&
               std::abs(translate_y) <= r.translate && std::abs(rotation) <= r.rotate;
    }
    friend bool operator==(const AugmentationParams&, const AugmentationParams&) = default;
};

inline AugmentationParams sample_params(std::uint64_t seed, const AugmentationRanges& ranges = {}) {
    ranges.validate();
    Rng rng(seed, 0xA06);
    AugmentationParams p;
    p.rng_seed = seed;
    p.scale = rng.uniform(ranges.scale_min, ranges.scale_max);
    p.reflect_x = rng.bernoulli(ranges.reflect_probability);
    p.reflect_y = rng.bernoulli(ranges.reflect_probability);
    p.translate_x = rng.uniform(-ranges.translate, ranges.translate);
    p.translate_y = rng.uniform(-ranges.translate, ranges.translate);
    p.rotation = rng.uniform(-ranges.rotate, ranges.rotate);
    return p;
}

namespace detail {

// Maps an output pixel back to its source location (inverse of the forward
// transform q = c + reflect(rotate(scale * (p - c))) + t).
struct InverseAffine {
    double cx, cy, inv_scale, cos_t, sin_t, tx, ty;
    bool rx, ry;

    InverseAffine(std::size_t height, std::size_t width, const AugmentationParams& p)
        : cx((double(width) - 1.0) / 2.0),
          cy((double(height) - 1.0) / 2.0),
          inv_scale(1.0 / p.scale),
          cos_t(p.rotation == 0.0 ? 1.0 : std::cos(p.rotation * std::numbers::pi / 180.0)),
          sin_t(p.rotation == 0.0 ? 0.0 : std::sin(p.rotation * std::numbers::pi / 180.0)),
          tx(p.translate_x),
          ty(p.translate_y),
          rx(p.reflect_x),
          ry(p.reflect_y) {}

    std::pair<double, double> source(double row, double col) const {
        double x = col - cx - tx;
        double y = row - cy - ty;
        if (rx) x = -x;
        if (ry) y = -y;
        // inverse rotation
        const double xr = cos_t * x + sin_t * y;
        const double yr = -sin_t * x + cos_t * y;
        return {cy + yr * inv_scale, cx + xr * inv_scale};
    }
};

}  // namespace detail

template <class T>
std::pair<Image<T>, LabelMask> apply(const Image<T>& image, const LabelMask& mask, const AugmentationParams& p) {
    detail::require_data(image.same_shape(mask), "image and mask dimensions differ");
    detail::require_config(p.scale > 0.0, "augmentation scale must be positive");
    const std::size_t H = image.height(), W = image.width();
    const detail::InverseAffine inv(H, W, p);
    Image<T> out_img(H, W);
    LabelMask out_mask(H, W);
    auto pixel = [&](long r, long c) -> double {
        if (r < 0 || c < 0 || r >= long(H) || c >= long(W)) return 0.0;
        return static_cast<double>(image(std::size_t(r), std::size_t(c)));
    };
    for (std::size_t r = 0; r < H; ++r) {
        for (std::size_t c = 0; c < W; ++c) {
            const auto [sy, sx] = inv.source(double(r), double(c));
            const long nr = static_cast<long>(std::floor(sy + 0.5));
            const long nc = static_cast<long>(std::floor(sx + 0.5));
            if (nr >= 0 && nc >= 0 && nr < long(H) && nc < long(W)) out_mask(r, c) = mask(std::size_t(nr), std::size_t(nc));

            const double fy = std::floor(sy), fx = std::floor(sx);
            const double ay = sy - fy, ax = sx - fx;
            const long r0 = static_cast<long>(fy), c0 = static_cast<long>(fx);
            double v = (1 - ay) * (1 - ax) * pixel(r0, c0);
            if (ax != 0.0) v += (1 - ay) * ax * pixel(r0, c0 + 1);
            if (ay != 0.0) v += ay * (1 - ax) * pixel(r0 + 1, c0);
            if (ax != 0.0 && ay != 0.0) v += ay * ax * pixel(r0 + 1, c0 + 1);
            out_img(r, c) = static_cast<T>(v);
        }
    }
    return {std::move(out_img), std::move(out_mask)};
}

}  // namespace irisseg
