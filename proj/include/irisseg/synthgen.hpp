#pragma once

// Synthetic iris-like scenes: a textured annulus between a dark pupil and a
// bright surround, with eyelid chords and specular highlights as occluders.
// The mask marks iris pixels not covered by any occluder.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "error.hpp"
#include "grid.hpp"
#include "mask.hpp"
#include "random.hpp"

namespace irisseg {

/// Occludes every pixel on the far side of a line: pixels p with
/// (p - centre) . (cos angle, sin angle) > offset. Angles are radians in
/// image coordinates (x right, y down), so -pi/2 points at the top lid.
struct EyelidChord {
    double angle = -std::numbers::pi / 2;
    double offset = 0.0;
};

struct SpecularBlob {
    double row = 0.0;
    double col = 0.0;
    double radius = 1.0;
    double intensity = 1.0;
};

struct SceneParams {
    std::size_t height = 64;
    std::size_t width = 64;
    double center_row = 31.5;
    double center_col = 31.5;
    double inner_radius = 8.0;
    double outer_radius = 20.0;
    std::vector<EyelidChord> eyelids;
    std::vector<SpecularBlob> speculars;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;

    void validate() const {
        detail::require_config(height >= 4 && width >= 4, "scene must be at least 4x4");
        const double half = std::min(height, width) / 2.0;
        detail::require_config(inner_radius > 0.0 && inner_radius < outer_radius && outer_radius < half,
                               "scene needs 0 < inner radius < outer radius < min(H, W) / 2");
        detail::require_config(center_row - outer_radius >= 0.0 && center_col - outer_radius >= 0.0 &&
                                   center_row + outer_radius <= double(height) - 1.0 &&
                                   center_col + outer_radius <= double(width) - 1.0,
                               "iris annulus must lie within the frame");
        for (const auto& b : speculars)
            detail::require_config(b.radius > 0.0 && b.row - b.radius >= 0.0 && b.col - b.radius >= 0.0 &&
                                       b.row + b.radius <= double(height) - 1.0 &&
                                       b.col + b.radius <= double(width) - 1.0,
                                   "specular blob must lie within the frame");
        detail::require_config(noise_sigma >= 0.0, "noise sigma must be non-negative");
    }
};

struct Sample {
    Image<double> image;
    LabelMask mask;
    int subject = 0;
    std::uint64_t seed = 0;
};

/// Pixel centre lies in the annulus inner < r <= outer.
inline bool in_annulus(const SceneParams& p, std::size_t r, std::size_t c) {
    const double dy = double(r) - p.center_row, dx = double(c) - p.center_col;
    const double d2 = dx * dx + dy * dy;
    return d2 > p.inner_radius * p.inner_radius && d2 <= p.outer_radius * p.outer_radius;
}

inline bool under_eyelid(const SceneParams& p, std::size_t r, std::size_t c) {
    const double dy = double(r) - p.center_row, dx = double(c) - p.center_col;
    return std::any_of(p.eyelids.begin(), p.eyelids.end(), [&](const EyelidChord& e) {
        return dx * std::cos(e.angle) + dy * std::sin(e.angle) > e.offset;
    });
}

inline bool under_specular(const SceneParams& p, std::size_t r, std::size_t c) {
    return std::any_of(p.speculars.begin(), p.speculars.end(), [&](const SpecularBlob& b) {
        const double dy = double(r) - b.row, dx = double(c) - b.col;
        return dx * dx + dy * dy <= b.radius * b.radius;
    });
}

namespace detail {

// Bilinearly interpolated lattice of uniform random values in [-1, 1].
class ValueNoise {
public:
    ValueNoise(Rng& rng, std::size_t height, std::size_t width, double cell)
        : cell_(cell), rows_(std::size_t(height / cell) + 2), cols_(std::size_t(width / cell) + 2), v_(rows_ * cols_) {
        for (auto& x : v_) x = rng.uniform(-1.0, 1.0);
    }
    double operator()(double r, double c) const {
        const double y = r / cell_, x = c / cell_;
        const auto y0 = std::size_t(y), x0 = std::size_t(x);
        const double ay = y - double(y0), ax = x - double(x0);
        auto at = [&](std::size_t i, std::size_t j) { return v_[i * cols_ + j]; };
        return (1 - ay) * ((1 - ax) * at(y0, x0) + ax * at(y0, x0 + 1)) +
               ay * ((1 - ax) * at(y0 + 1, x0) + ax * at(y0 + 1, x0 + 1));
    }

private:
    double cell_;
    std::size_t rows_, cols_;
    std::vector<double> v_;
};

}  // namespace detail

/// Renders a scene. The mask is annulus minus eyelids minus speculars.
inline Sample generate(const SceneParams& p, int subject = 0) {
    p.validate();
    Rng rng(p.seed, 0x5CE);
    Sample s{Image<double>(p.height, p.width), LabelMask(p.height, p.width), subject, p.seed};

    const double scale = std::min(p.height, p.width) / 64.0;
    detail::ValueNoise texture(rng, p.height, p.width, 3.0 * scale);
    detail::ValueNoise shading(rng, p.height, p.width, 16.0 * scale);
    const double spokes = double(12 + rng.below(10));
    const double phase = rng.uniform(0.0, 2 * std::numbers::pi);
    const double iris_level = rng.uniform(0.33, 0.42);
    const double surround_level = rng.uniform(0.68, 0.78);
    const double lid_level = rng.uniform(0.55, 0.62);
    const double pupil_level = rng.uniform(0.04, 0.1);

    for (std::size_t r = 0; r < p.height; ++r) {
        for (std::size_t c = 0; c < p.width; ++c) {
            const double dy = double(r) - p.center_row, dx = double(c) - p.center_col;
            const double rad = std::sqrt(dx * dx + dy * dy);
            const bool annulus = in_annulus(p, r, c);
            const bool lid = under_eyelid(p, r, c);
            const bool spec = under_specular(p, r, c);
            double v;
            if (lid) {
                v = lid_level + 0.04 * shading(double(r), double(c));
            } else if (annulus) {
                const double theta = std::atan2(dy, dx);
                const double radial = (rad - p.inner_radius) / (p.outer_radius - p.inner_radius);
                v = iris_level + 0.06 * std::sin(spokes * theta + phase + 3.0 * radial) +
                    0.05 * texture(double(r), double(c)) - 0.04 * radial;
            } else if (rad <= p.inner_radius) {
                v = pupil_level;
            } else {
                v = surround_level + 0.05 * shading(double(r), double(c));
            }
            if (spec && !lid) {
                for (const auto& b : p.speculars) {
                    const double by = double(r) - b.row, bx = double(c) - b.col;
                    if (bx * bx + by * by <= b.radius * b.radius) v = std::max(v, b.intensity);
                }
            }
            if (p.noise_sigma > 0.0) v += p.noise_sigma * rng.normal();
            s.image(r, c) = std::clamp(v, 0.0, 1.0);
            s.mask(r, c) = annulus && !lid && !spec ? kIris : kBackground;
        }
    }
    return s;
}

/// Per-subject geometry; samples jitter around it.
struct SubjectGeometry {
    double outer_radius = 20.0;
    double pupil_ratio = 0.4;
    double center_row = 31.5;
    double center_col = 31.5;
};

namespace detail {

inline std::vector<SubjectGeometry> draw_subjects(Rng& rng, std::size_t count, std::size_t height, std::size_t width) {
    const double s = std::min(height, width) / 64.0;
    const double lo = 14.0 * s, hi = 24.0 * s, min_gap = 2.0 * s;
    std::vector<SubjectGeometry> out;
    for (std::size_t i = 0; i < count; ++i) {
        SubjectGeometry g;
        // Prefer radii at least min_gap from every earlier subject; once the
        // range is crowded only the previous subject is kept apart.
        bool placed = false;
        for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
            g.outer_radius = rng.uniform(lo, hi);
            placed = std::all_of(out.begin(), out.end(),
                                 [&](const SubjectGeometry& o) { return std::abs(o.outer_radius - g.outer_radius) >= min_gap; });
        }
        while (!placed) {
            g.outer_radius = rng.uniform(lo, hi);
            placed = out.empty() || std::abs(out.back().outer_radius - g.outer_radius) >= min_gap;
        }
        g.pupil_ratio = rng.uniform(0.3, 0.5);
        g.center_row = (double(height) - 1.0) / 2.0 + rng.uniform(-2.0, 2.0) * s;
        g.center_col = (double(width) - 1.0) / 2.0 + rng.uniform(-2.0, 2.0) * s;
        out.push_back(g);
    }
    return out;
}

}  // namespace detail

/// Samples one scene around a subject's geometry.
inline SceneParams sample_scene(const SubjectGeometry& g, std::uint64_t seed, std::size_t height = 64,
                                std::size_t width = 64) {
    Rng rng(seed, 0x5A);
    const double s = std::min(height, width) / 64.0;
    SceneParams p;
    p.height = height;
    p.width = width;
    p.seed = seed;
    p.outer_radius = g.outer_radius + rng.uniform(-1.0, 1.0) * s;
    // post-mortem pupils drift in size between sessions
    p.inner_radius = p.outer_radius * std::clamp(g.pupil_ratio + rng.uniform(-0.05, 0.05), 0.2, 0.6);
    p.center_row = g.center_row + rng.uniform(-1.5, 1.5) * s;
    p.center_col = g.center_col + rng.uniform(-1.5, 1.5) * s;
    if (rng.bernoulli(0.7))
        p.eyelids.push_back({-std::numbers::pi / 2 + rng.uniform(-0.25, 0.25), p.outer_radius * rng.uniform(0.45, 0.9)});
    if (rng.bernoulli(0.4))
        p.eyelids.push_back({std::numbers::pi / 2 + rng.uniform(-0.25, 0.25), p.outer_radius * rng.uniform(0.6, 0.95)});
    const auto blobs = rng.below(4);
    for (std::uint64_t i = 0; i < blobs; ++i) {
        SpecularBlob b;
        b.radius = rng.uniform(1.2, 3.0) * s;
        const double rad = rng.uniform(p.inner_radius * 0.6, p.outer_radius);
        const double theta = rng.uniform(0.0, 2 * std::numbers::pi);
        b.row = std::clamp(p.center_row + rad * std::sin(theta), b.radius, double(height) - 1.0 - b.radius);
        b.col = std::clamp(p.center_col + rad * std::cos(theta), b.radius, double(width) - 1.0 - b.radius);
        b.intensity = rng.uniform(0.9, 1.0);
        p.speculars.push_back(b);
    }
    p.noise_sigma = rng.uniform(0.01, 0.03);
    return p;
}

/// n samples spread evenly over `subjects` subjects (ids 0..subjects-1).
/// Scenes whose occluders hide the entire iris are resampled.
inline std::vector<Sample> generate_dataset(std::size_t n, std::size_t subjects, std::uint64_t seed,
                                            std::size_t height = 64, std::size_t width = 64) {
    detail::require_config(subjects >= 1, "dataset needs at least one subject");
    detail::require_config(n >= subjects, "dataset needs at least one sample per subject");
    Rng rng(seed, 0xDA7A);
    const auto geometry = detail::draw_subjects(rng, subjects, height, width);
    std::vector<Sample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t subject = i % subjects;
        for (;;) {
            const std::uint64_t sample_seed = rng.derive();
            Sample s = generate(sample_scene(geometry[subject], sample_seed, height, width), int(subject));
            if (std::count(s.mask.values().begin(), s.mask.values().end(), kIris) > 0) {
                out.push_back(std::move(s));
                break;
            }
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const Sample& a, const Sample& b) { return a.subject < b.subject; });
    return out;
}

/// Base outer radius per subject as generate_dataset would draw them.
inline std::vector<SubjectGeometry> subject_geometry(std::size_t subjects, std::uint64_t seed, std::size_t height = 64,
                                                     std::size_t width = 64) {
    Rng rng(seed, 0xDA7A);
    return detail::draw_subjects(rng, subjects, height, width);
}

}  // namespace irisseg
