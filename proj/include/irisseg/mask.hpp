#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "grid.hpp"

namespace irisseg {

/// Class inventory of a segmentation problem. The default is the binary
/// background/iris setup.
struct ClassSpec {
    std::size_t num_classes = 2;
    std::vector<std::string> names{"background", "iris"};

    static ClassSpec binary() { return {}; }

    void validate() const {
        detail::require_config(num_classes >= 2, "ClassSpec needs at least two classes");
        detail::require_config(num_classes <= 256, "ClassSpec supports at most 256 classes");
        detail::require_config(names.empty() || names.size() == num_classes,
                               "ClassSpec names must match num_classes");
    }
};

inline constexpr std::uint8_t kBackground = 0;
inline constexpr std::uint8_t kIris = 1;

/// Per-pixel class labels.
using LabelMask = Grid<std::uint8_t>;

inline void validate_mask(const LabelMask& mask, const ClassSpec& spec) {
    detail::require_data(mask.height() >= 1 && mask.width() >= 1, "mask has zero dimensions");
    for (std::uint8_t v : mask.values())
        detail::require_data(v < spec.num_classes,
                             "mask label " + std::to_string(v) + " out of range for " +
                                 std::to_string(spec.num_classes) + " classes");
}

/// Per-pixel class probabilities, stored planar: channel n occupies the
/// contiguous range [n*M, (n+1)*M) with M = height*width.
template <class T = double>
class ProbMap {
public:
    ProbMap() = default;
    ProbMap(std::size_t height, std::size_t width, std::size_t classes, T fill = T{})
        : height_(height), width_(width), classes_(classes), data_(height * width * classes, fill) {}

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t classes() const noexcept { return classes_; }
    std::size_t pixels() const noexcept { return height_ * width_; }
    std::size_t size() const noexcept { return data_.size(); }

    T& at(std::size_t n, std::size_t m) { return data_[n * pixels() + m]; }
    const T& at(std::size_t n, std::size_t m) const { return data_[n * pixels() + m]; }
    T& at(std::size_t n, std::size_t r, std::size_t c) { return at(n, r * width_ + c); }
    const T& at(std::size_t n, std::size_t r, std::size_t c) const { return at(n, r * width_ + c); }

    std::span<T> channel(std::size_t n) { return {data_.data() + n * pixels(), pixels()}; }
    std::span<const T> channel(std::size_t n) const { return {data_.data() + n * pixels(), pixels()}; }

    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }

    template <class U>
    bool same_shape(const ProbMap<U>& o) const noexcept {
        return height_ == o.height() && width_ == o.width() && classes_ == o.classes();
    }
    template <class U>
    bool matches(const Grid<U>& g) const noexcept {
        return height_ == g.height() && width_ == g.width();
    }

    /// True when every pixel's probabilities are in [0,1] and sum to 1 within tol.
    bool is_normalized(double tol = 1e-6) const {
        for (std::size_t m = 0; m < pixels(); ++m) {
            double sum = 0.0;
            for (std::size_t n = 0; n < classes_; ++n) {
                const double p = static_cast<double>(at(n, m));
                if (!(p >= -tol && p <= 1.0 + tol)) return false;
                sum += p;
            }
            if (std::abs(sum - 1.0) > tol) return false;
        }
        return true;
    }

    friend bool operator==(const ProbMap&, const ProbMap&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::size_t classes_ = 0;
    std::vector<T> data_;
};

template <class T = double>
ProbMap<T> one_hot(const LabelMask& mask, const ClassSpec& spec) {
    validate_mask(mask, spec);
    ProbMap<T> out(mask.height(), mask.width(), spec.num_classes);
    for (std::size_t m = 0; m < mask.size(); ++m) out.at(mask[m], m) = T(1);
    return out;
}

/// Per-pixel argmax; ties go to the lowest class index.
template <class T>
LabelMask argmax_decode(const ProbMap<T>& probs) {
    LabelMask out(probs.height(), probs.width());
    for (std::size_t m = 0; m < probs.pixels(); ++m) {
        std::size_t best = 0;
        for (std::size_t n = 1; n < probs.classes(); ++n)
            if (probs.at(n, m) > probs.at(best, m)) best = n;
        out[m] = static_cast<std::uint8_t>(best);
    }
    return out;
}

/// counts(g, p) = number of pixels with ground truth g predicted as p.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t num_classes = 2)
        : n_(num_classes), counts_(num_classes * num_classes, 0) {}

    std::size_t num_classes() const noexcept { return n_; }

    std::int64_t& operator()(std::size_t g, std::size_t p) { return counts_[g * n_ + p]; }
    std::int64_t operator()(std::size_t g, std::size_t p) const { return counts_[g * n_ + p]; }

    std::int64_t total() const noexcept {
        std::int64_t t = 0;
        for (auto c : counts_) t += c;
        return t;
    }
    std::int64_t trace() const noexcept {
        std::int64_t t = 0;
        for (std::size_t i = 0; i < n_; ++i) t += (*this)(i, i);
        return t;
    }
    /// Ground-truth pixel count of class g.
    std::int64_t row_sum(std::size_t g) const noexcept {
        std::int64_t t = 0;
        for (std::size_t p = 0; p < n_; ++p) t += (*this)(g, p);
        return t;
    }
    /// Predicted pixel count of class p.
    std::int64_t col_sum(std::size_t p) const noexcept {
        std::int64_t t = 0;
        for (std::size_t g = 0; g < n_; ++g) t += (*this)(g, p);
        return t;
    }

    ConfusionMatrix& merge(const ConfusionMatrix& other) {
        detail::require_data(other.n_ == n_, "cannot merge confusion matrices of different class counts");
        for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
        return *this;
    }

    friend ConfusionMatrix merge(ConfusionMatrix a, const ConfusionMatrix& b) { return a.merge(b); }
    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    std::size_t n_;
    std::vector<std::int64_t> counts_;
};

inline ConfusionMatrix& accumulate_confusion(ConfusionMatrix& cm, const LabelMask& truth, const LabelMask& pred) {
    detail::require_data(truth.same_shape(pred), "truth and prediction dimensions differ");
    const std::size_t n = cm.num_classes();
    for (std::size_t m = 0; m < truth.size(); ++m) {
        detail::require_data(truth[m] < n && pred[m] < n, "label out of range for confusion matrix");
        ++cm(truth[m], pred[m]);
    }
    return cm;
}

inline ConfusionMatrix confusion_of(const LabelMask& truth, const LabelMask& pred, std::size_t num_classes = 2) {
    ConfusionMatrix cm(num_classes);
    accumulate_confusion(cm, truth, pred);
    return cm;
}

}  // namespace irisseg
