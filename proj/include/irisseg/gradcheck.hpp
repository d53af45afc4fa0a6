#pragma once

// Central finite-difference verification of the analytic loss gradients on
// random small two-class problems.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "losses.hpp"
#include "random.hpp"

namespace irisseg {

struct GradCheckOptions {
    std::uint64_t seed = 0;
    std::size_t instances = 100;
    std::size_t height = 4;
    std::size_t width = 4;
    double step = 1e-5;
    double tolerance = 1e-4;
    double lovasz_tolerance = 1e-3;
    /// Minimum spacing between sorted Lovász errors; closer samples are
    /// rejected so that no perturbation can reorder them.
    double lovasz_min_gap = 1e-3;
    /// Added to every analytic gradient entry. Non-zero only to prove the
    /// check can fail.
    double perturb_gradient = 0.0;
};

struct GradCheckRow {
    LossKind kind = LossKind::dice;
    double max_rel_error = 0.0;
    double threshold = 0.0;
    std::size_t instances = 0;
    bool pass() const { return max_rel_error <= threshold; }
};

/// Entrywise relative error |a - n| / max(|a|, |n|, floor) where the floor is
/// 1e-3 of the largest gradient magnitude in the instance. Entries whose
/// gradient is negligible next to the rest are thereby judged against the
/// instance's gradient scale instead of their own near-zero value.
inline double max_relative_error(std::span<const double> analytic, std::span<const double> numeric) {
    double scale = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i)
        scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
    const double floor = std::max(1e-3 * scale, 1e-300);
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double den = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / den);
    }
    return worst;
}

/// Central differences of spec's loss with respect to every entry of y.
inline std::vector<double> numeric_loss_gradient(const LossSpec& spec, const ProbMap<double>& y, const LabelMask& target,
                                                 const SignedDistanceMap& sdm, double h) {
    ProbMap<double> probe = y;
    std::vector<double> out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double orig = probe.values()[i];
        probe.values()[i] = orig + h;
        const double up = evaluate_loss(spec, probe, target, &sdm).value;
        probe.values()[i] = orig - h;
        const double down = evaluate_loss(spec, probe, target, &sdm).value;
        probe.values()[i] = orig;
        out[i] = (up - down) / (2.0 * h);
    }
    return out;
}

namespace detail {

// Softmax of uniform logits in [-3, 3].
inline ProbMap<double> random_probs(Rng& rng, std::size_t h, std::size_t w, std::size_t classes) {
    ProbMap<double> y(h, w, classes);
    std::vector<double> z(classes);
    for (std::size_t m = 0; m < y.pixels(); ++m) {
        double mx = -1e300;
        for (auto& v : z) mx = std::max(mx, v = rng.uniform(-3.0, 3.0));
        double sum = 0.0;
        for (auto& v : z) sum += v = std::exp(v - mx);
        for (std::size_t n = 0; n < classes; ++n) y.at(n, m) = z[n] / sum;
    }
    return y;
}

// Random binary target containing both classes.
inline LabelMask random_target(Rng& rng, std::size_t h, std::size_t w) {
    for (;;) {
        LabelMask t(h, w);
        std::size_t fg = 0;
        for (auto& v : t.values()) fg += v = rng.bernoulli(0.5) ? 1 : 0;
        if (fg > 0 && fg < t.size()) return t;
    }
}

inline bool lovasz_tie_free(const ProbMap<double>& y, const LabelMask& target, double min_gap) {
    std::vector<double> e(y.pixels());
    for (std::size_t c = 0; c < y.classes(); ++c) {
        for (std::size_t m = 0; m < e.size(); ++m)
            e[m] = target[m] == c ? 1.0 - y.at(c, m) : y.at(c, m);
        std::sort(e.begin(), e.end());
        for (std::size_t k = 1; k < e.size(); ++k)
            if (e[k] - e[k - 1] < min_gap) return false;
    }
    return true;
}

}  // namespace detail

inline double loss_threshold(LossKind kind, const GradCheckOptions& opt) {
    return kind == LossKind::lovasz_softmax ? opt.lovasz_tolerance : opt.tolerance;
}

/// One row per loss variant: the worst relative error between analytic and
/// finite-difference gradients over `instances` random problems.
inline std::vector<GradCheckRow> run_loss_check(const GradCheckOptions& opt = {}) {
    std::vector<GradCheckRow> rows;
    for (auto kind : kAllLosses) {
        Rng rng(opt.seed, static_cast<std::uint64_t>(kind) + 1);
        LossSpec spec;
        spec.variant = kind;
        GradCheckRow row{kind, 0.0, loss_threshold(kind, opt), 0};
        for (std::size_t i = 0; i < opt.instances; ++i) {
            LabelMask target = detail::random_target(rng, opt.height, opt.width);
            ProbMap<double> y = detail::random_probs(rng, opt.height, opt.width, 2);
            while (kind == LossKind::lovasz_softmax && !detail::lovasz_tie_free(y, target, opt.lovasz_min_gap))
                y = detail::random_probs(rng, opt.height, opt.width, 2);
            const auto sdm = signed_distance_transform(target, spec.boundary_class);
            auto analytic = evaluate_loss(spec, y, target, &sdm).grad;
            for (auto& g : analytic.values()) g += opt.perturb_gradient;
            const auto numeric = numeric_loss_gradient(spec, y, target, sdm, opt.step);
            row.max_rel_error = std::max(row.max_rel_error, max_relative_error(analytic.values(), numeric));
            ++row.instances;
        }
        rows.push_back(row);
    }
    return rows;
}

inline bool all_pass(const std::vector<GradCheckRow>& rows) {
    return std::all_of(rows.begin(), rows.end(), [](const GradCheckRow& r) { return r.pass(); });
}

inline std::string render_loss_check(const std::vector<GradCheckRow>& rows) {
    std::ostringstream os;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-16s %9s %14s %10s %6s\n", "loss", "instances", "max_rel_error", "threshold",
                  "status");
    os << buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-16s %9zu %14.3e %10.1e %6s\n", std::string(loss_key(r.kind)).c_str(),
                      r.instances, r.max_rel_error, r.threshold, r.pass() ? "PASS" : "FAIL");
        os << buf;
    }
    return os.str();
}

}  // namespace irisseg
