#pragma once

// Segmentation accuracy metrics: global accuracy, mean accuracy, per-class /
// mean / frequency-weighted IoU over a confusion matrix, and the boundary F1
// score over mask contours.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "distance_transform.hpp"
#include "error.hpp"
#include "mask.hpp"

namespace irisseg {

/// Per-class value that is absent (nullopt) when its denominator is zero.
using ClassValues = std::vector<std::optional<double>>;

inline double global_accuracy(const ConfusionMatrix& cm) {
    const auto total = cm.total();
    detail::require_data(total > 0, "global accuracy of an empty confusion matrix");
    return static_cast<double>(cm.trace()) / static_cast<double>(total);
}

inline ClassValues per_class_accuracy(const ConfusionMatrix& cm) {
    ClassValues out(cm.num_classes());
    for (std::size_t g = 0; g < cm.num_classes(); ++g) {
        const auto row = cm.row_sum(g);
        if (row > 0) out[g] = static_cast<double>(cm(g, g)) / static_cast<double>(row);
    }
    return out;
}

inline ClassValues per_class_iou(const ConfusionMatrix& cm) {
    ClassValues out(cm.num_classes());
    for (std::size_t n = 0; n < cm.num_classes(); ++n) {
        const auto uni = cm.row_sum(n) + cm.col_sum(n) - cm(n, n);
        if (uni > 0) out[n] = static_cast<double>(cm(n, n)) / static_cast<double>(uni);
    }
    return out;
}

namespace detail {
inline std::optional<double> mean_defined(const ClassValues& values) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& v : values)
        if (v) {
            sum += *v;
            ++count;
        }
    if (count == 0) return std::nullopt;
    return sum / static_cast<double>(count);
}
}  // namespace detail

/// Mean over classes present in the ground truth of the per-class recall.
inline double mean_accuracy(const ConfusionMatrix& cm) {
    const auto m = detail::mean_defined(per_class_accuracy(cm));
    detail::require_data(m.has_value(), "mean accuracy: every class is empty");
    return *m;
}

inline double mean_iou(const ConfusionMatrix& cm) {
    const auto m = detail::mean_defined(per_class_iou(cm));
    detail::require_data(m.has_value(), "mean IoU: no class is defined");
    return *m;
}

/// IoU averaged with weights proportional to ground-truth class frequency.
inline double weighted_iou(const ConfusionMatrix& cm) {
    const auto total = cm.total();
    detail::require_data(total > 0, "weighted IoU of an empty confusion matrix");
    const auto iou = per_class_iou(cm);
    double sum = 0.0;
    for (std::size_t n = 0; n < cm.num_classes(); ++n)
        if (iou[n]) sum += static_cast<double>(cm.row_sum(n)) / static_cast<double>(total) * *iou[n];
    return sum;
}

struct Pixel {
    std::size_t row = 0;
    std::size_t col = 0;
    friend auto operator<=>(const Pixel&, const Pixel&) = default;
};

/// Row-major ordered pixels of one class that touch a different class.
using BoundarySet = std::vector<Pixel>;

inline bool is_boundary_pixel(const LabelMask& mask, std::size_t r, std::size_t c, std::uint8_t cls) {
    if (mask(r, c) != cls) return false;
    // The image border does not count as a class change.
    return (r > 0 && mask(r - 1, c) != cls) || (r + 1 < mask.height() && mask(r + 1, c) != cls) ||
           (c > 0 && mask(r, c - 1) != cls) || (c + 1 < mask.width() && mask(r, c + 1) != cls);
}

inline Grid<std::uint8_t> boundary_grid(const LabelMask& mask, std::uint8_t cls) {
    Grid<std::uint8_t> out(mask.height(), mask.width(), 0);
    for (std::size_t r = 0; r < mask.height(); ++r)
        for (std::size_t c = 0; c < mask.width(); ++c) out(r, c) = is_boundary_pixel(mask, r, c, cls);
    return out;
}

inline BoundarySet extract_boundary(const LabelMask& mask, std::uint8_t cls) {
    BoundarySet out;
    for (std::size_t r = 0; r < mask.height(); ++r)
        for (std::size_t c = 0; c < mask.width(); ++c)
            if (is_boundary_pixel(mask, r, c, cls)) out.push_back({r, c});
    return out;
}

/// ceil(0.75% of the image diagonal), in pixels.
inline double default_bf_tolerance(std::size_t height, std::size_t width) {
    return std::ceil(0.0075 * std::hypot(double(height), double(width)));
}

namespace detail {

// Fraction of `from` boundary pixels within `tolerance` of the `to` boundary.
inline double matched_fraction(const Grid<std::uint8_t>& from, const Grid<std::uint8_t>& to, double tolerance,
                               std::size_t& count) {
    count = 0;
    std::size_t hits = 0;
    const auto dist2 = squared_distance_transform(to);
    const double tol2 = tolerance * tolerance;
    for (std::size_t i = 0; i < from.size(); ++i) {
        if (!from[i]) continue;
        ++count;
        if (dist2[i] <= tol2) ++hits;
    }
    return count == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(count);
}

}  // namespace detail

/// Boundary F1 of one class. Both boundaries empty scores 1.
inline double boundary_f1_class(const LabelMask& truth, const LabelMask& pred, std::uint8_t cls, double tolerance) {
    const auto tb = boundary_grid(truth, cls);
    const auto pb = boundary_grid(pred, cls);
    std::size_t n_pred = 0, n_truth = 0;
    const double precision = detail::matched_fraction(pb, tb, tolerance, n_pred);
    const double recall = detail::matched_fraction(tb, pb, tolerance, n_truth);
    if (n_pred == 0 && n_truth == 0) return 1.0;
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

/// Mean over classes of the per-class boundary F1 score.
inline double boundary_f1(const LabelMask& truth, const LabelMask& pred, double tolerance,
                          std::size_t num_classes = 2) {
    detail::require_data(truth.same_shape(pred), "truth and prediction dimensions differ");
    detail::require_config(tolerance >= 0.0, "boundary F1 tolerance must be non-negative");
    double sum = 0.0;
    for (std::size_t n = 0; n < num_classes; ++n)
        sum += boundary_f1_class(truth, pred, static_cast<std::uint8_t>(n), tolerance);
    return sum / static_cast<double>(num_classes);
}

struct MetricReport {
    double global_accuracy = 0.0;
    double mean_accuracy = 0.0;
    double mean_iou = 0.0;
    double weighted_iou = 0.0;
    double boundary_f1 = 0.0;
    ClassValues per_class_iou;
    ClassValues per_class_accuracy;
};

/// Confusion-derived fields of a report; boundary_f1 is left to the caller.
inline MetricReport report_from_confusion(const ConfusionMatrix& cm) {
    MetricReport r;
    r.global_accuracy = global_accuracy(cm);
    r.mean_accuracy = mean_accuracy(cm);
    r.per_class_iou = per_class_iou(cm);
    r.per_class_accuracy = per_class_accuracy(cm);
    r.mean_iou = mean_iou(cm);
    r.weighted_iou = weighted_iou(cm);
    return r;
}

enum class Aggregation { pooled, per_image };

struct MaskPair {
    LabelMask truth;
    LabelMask pred;
};

struct EvaluationOptions {
    std::size_t num_classes = 2;
    /// Boundary match tolerance in pixels; negative selects the per-image default.
    double tolerance = -1.0;
    Aggregation aggregation = Aggregation::pooled;
};

struct DatasetEvaluation {
    MetricReport summary;
    std::vector<MetricReport> per_image;
    ConfusionMatrix pooled;
};

inline MetricReport image_report(const LabelMask& truth, const LabelMask& pred, const EvaluationOptions& opt = {}) {
    auto report = report_from_confusion(confusion_of(truth, pred, opt.num_classes));
    const double tol = opt.tolerance < 0.0 ? default_bf_tolerance(truth.height(), truth.width()) : opt.tolerance;
    report.boundary_f1 = boundary_f1(truth, pred, tol, opt.num_classes);
    return report;
}

/// Evaluates a dataset. In pooled mode the confusion metrics come from one
/// merged matrix; in per-image mode they are averaged over images. Boundary
/// F1 is always the per-image average.
inline DatasetEvaluation evaluate_dataset(std::span<const MaskPair> pairs, const EvaluationOptions& opt = {}) {
    detail::require_data(!pairs.empty(), "dataset report of an empty dataset");
    DatasetEvaluation out{{}, {}, ConfusionMatrix(opt.num_classes)};
    double bf_sum = 0.0;
    for (const auto& p : pairs) {
        detail::require_data(p.truth.same_shape(p.pred), "truth and prediction dimensions differ");
        out.per_image.push_back(image_report(p.truth, p.pred, opt));
        accumulate_confusion(out.pooled, p.truth, p.pred);
        bf_sum += out.per_image.back().boundary_f1;
    }
    const double n = static_cast<double>(pairs.size());
    if (opt.aggregation == Aggregation::pooled) {
        out.summary = report_from_confusion(out.pooled);
    } else {
        MetricReport& s = out.summary;
        s.per_class_iou = per_class_iou(out.pooled);
        s.per_class_accuracy = per_class_accuracy(out.pooled);
        for (const auto& r : out.per_image) {
            s.global_accuracy += r.global_accuracy / n;
            s.mean_accuracy += r.mean_accuracy / n;
            s.mean_iou += r.mean_iou / n;
            s.weighted_iou += r.weighted_iou / n;
        }
    }
    out.summary.boundary_f1 = bf_sum / n;
    return out;
}

inline MetricReport dataset_report(std::span<const MaskPair> pairs, const EvaluationOptions& opt = {}) {
    return evaluate_dataset(pairs, opt).summary;
}

}  // namespace irisseg
