#pragma once

// Segmentation losses over a class-probability map, each returning the loss
// value together with its analytic gradient with respect to every
// probability entry.
//
//   dice            generalized Dice with inverse-squared-area class weights
//                   and squared terms in the denominator
//   cross_entropy   mean negative log-likelihood of the true class
//   dice_ce         alpha * dice + (1 - alpha) * cross_entropy
//   lovasz_softmax  Lovász extension of the Jaccard loss on sorted errors
//   boundary        mean of signed distance times foreground probability
//   boundary_dice   alpha * dice + (1 - alpha) * boundary

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "distance_transform.hpp"
#include "error.hpp"
#include "mask.hpp"
#include "metrics.hpp"

namespace irisseg {

enum class LossKind { dice, cross_entropy, dice_ce, lovasz_softmax, boundary, boundary_dice };

inline constexpr std::array<LossKind, 6> kAllLosses = {LossKind::dice,           LossKind::cross_entropy,
                                                       LossKind::dice_ce,        LossKind::lovasz_softmax,
                                                       LossKind::boundary,       LossKind::boundary_dice};

inline std::string_view loss_key(LossKind k) {
    switch (k) {
        case LossKind::dice: return "dice";
        case LossKind::cross_entropy: return "cross_entropy";
        case LossKind::dice_ce: return "dice_ce";
        case LossKind::lovasz_softmax: return "lovasz_softmax";
        case LossKind::boundary: return "boundary";
        case LossKind::boundary_dice: return "boundary_dice";
    }
    return "?";
}

/// Human-readable row label used in result tables.
inline std::string_view loss_label(LossKind k) {
    switch (k) {
        case LossKind::dice: return "Dice";
        case LossKind::cross_entropy: return "Cross Entropy";
        case LossKind::dice_ce: return "Dice Cross Entropy";
        case LossKind::lovasz_softmax: return "Lovász-Softmax";
        case LossKind::boundary: return "Boundary";
        case LossKind::boundary_dice: return "Boundary Dice";
    }
    return "?";
}

inline LossKind parse_loss_kind(std::string_view key) {
    for (auto k : kAllLosses)
        if (loss_key(k) == key) return k;
    throw ConfigError("unknown loss variant '" + std::string(key) + "'");
}

struct LossSpec {
    LossKind variant = LossKind::dice;
    /// Mixing weight of the Dice term in composite losses.
    double alpha = 0.5;
    double epsilon = 1e-8;
    /// Class whose signed distance map drives the boundary term.
    std::uint8_t boundary_class = kIris;

    void validate() const {
        detail::require_config(alpha >= 0.0 && alpha <= 1.0, "loss alpha must lie in [0, 1]");
        detail::require_config(epsilon > 0.0, "loss epsilon must be positive");
    }
};

template <class T>
struct LossResult {
    T value{};
    ProbMap<T> grad;
    /// Set when a boundary term was requested but its distance map was
    /// degenerate and the loss fell back to its Dice component.
    bool boundary_fallback = false;
};

/// Per-class weights w_n.
using ClassWeights = std::vector<double>;

/// w_n = 1 / (target area of class n)^2; classes absent from the target get
/// weight 0 and drop out of the Dice sums.
inline ClassWeights dice_weights(const LabelMask& target, const ClassSpec& spec) {
    validate_mask(target, spec);
    std::vector<double> area(spec.num_classes, 0.0);
    for (auto v : target.values()) area[v] += 1.0;
    ClassWeights w(spec.num_classes, 0.0);
    for (std::size_t n = 0; n < spec.num_classes; ++n)
        if (area[n] > 0.0) w[n] = 1.0 / (area[n] * area[n]);
    return w;
}

namespace detail {
template <class T>
void require_match(const ProbMap<T>& y, const LabelMask& target) {
    require_data(y.matches(target), "probability map and target dimensions differ");
    for (auto v : target.values()) require_data(v < y.classes(), "target label exceeds probability channels");
}
}  // namespace detail

/// Generalized Dice loss
///
///   L = 1 - 2 sum_n w_n sum_m Y_nm T_nm / max(sum_n w_n sum_m (Y_nm^2 + T_nm^2), epsilon)
///
/// The epsilon floor only guards a vanishing denominator; at Y = T the loss
/// and its gradient are exactly zero.
template <class T>
LossResult<T> generalized_dice_loss(const ProbMap<T>& y, const LabelMask& target, const ClassWeights& weights,
                                    double epsilon = 1e-8) {
    detail::require_match(y, target);
    detail::require_data(weights.size() == y.classes(), "class weight count differs from probability channels");
    const std::size_t M = y.pixels();
    double overlap = 0.0;  // sum_n w_n sum_m Y T
    double squares = 0.0;  // sum_n w_n sum_m (Y^2 + T^2)
    for (std::size_t n = 0; n < y.classes(); ++n) {
        if (weights[n] == 0.0) continue;
        double i_n = 0.0, s_n = 0.0;
        const auto ch = y.channel(n);
        for (std::size_t m = 0; m < M; ++m) {
            const double p = ch[m];
            const double t = target[m] == n ? 1.0 : 0.0;
            i_n += p * t;
            s_n += p * p + t;
        }
        overlap += weights[n] * i_n;
        squares += weights[n] * s_n;
    }
    const double num = 2.0 * overlap;
    const double den = std::max(squares, epsilon);
    LossResult<T> out{static_cast<T>(1.0 - num / den), ProbMap<T>(y.height(), y.width(), y.classes())};
    // dL/dY = -(2 w T den - num * 2 w Y) / den^2
    const bool floored = squares < epsilon;
    for (std::size_t n = 0; n < y.classes(); ++n) {
        if (weights[n] == 0.0) continue;
        const auto ch = y.channel(n);
        auto g = out.grad.channel(n);
        const double w2 = 2.0 * weights[n];
        for (std::size_t m = 0; m < M; ++m) {
            const double t = target[m] == n ? 1.0 : 0.0;
            const double dden = floored ? 0.0 : w2 * ch[m];
            g[m] = static_cast<T>(-(w2 * t * den - num * dden) / (den * den));
        }
    }
    return out;
}

template <class T>
LossResult<T> generalized_dice_loss(const ProbMap<T>& y, const LabelMask& target, double epsilon = 1e-8) {
    ClassSpec spec;
    spec.num_classes = y.classes();
    spec.names.clear();
    return generalized_dice_loss(y, target, dice_weights(target, spec), epsilon);
}

/// L = -(1/M) sum_m log(Y_{t(m),m} + epsilon)
template <class T>
LossResult<T> cross_entropy_loss(const ProbMap<T>& y, const LabelMask& target, double epsilon = 1e-8) {
    detail::require_match(y, target);
    const std::size_t M = y.pixels();
    const double inv_m = 1.0 / static_cast<double>(M);
    LossResult<T> out{T{}, ProbMap<T>(y.height(), y.width(), y.classes())};
    double sum = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
        const double p = static_cast<double>(y.at(target[m], m)) + epsilon;
        sum -= std::log(p);
        out.grad.at(target[m], m) = static_cast<T>(-inv_m / p);
    }
    out.value = static_cast<T>(sum * inv_m);
    return out;
}

/// alpha * a + (1 - alpha) * b, entrywise on the gradients.
template <class T>
LossResult<T> combine_losses(const LossResult<T>& a, const LossResult<T>& b, double alpha) {
    detail::require_config(alpha >= 0.0 && alpha <= 1.0, "loss alpha must lie in [0, 1]");
    detail::require_data(a.grad.same_shape(b.grad), "combined loss gradients differ in shape");
    const T wa = static_cast<T>(alpha), wb = static_cast<T>(1.0 - alpha);
    LossResult<T> out{wa * a.value + wb * b.value, a.grad, a.boundary_fallback || b.boundary_fallback};
    auto g = out.grad.values();
    auto gb = b.grad.values();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = wa * g[i] + wb * gb[i];
    return out;
}

template <class T>
LossResult<T> dice_ce_loss(const ProbMap<T>& y, const LabelMask& target, double alpha = 0.5, double epsilon = 1e-8) {
    return combine_losses(generalized_dice_loss(y, target, epsilon), cross_entropy_loss(y, target, epsilon), alpha);
}

/// Gradient of the Lovász extension of the Jaccard loss for ground-truth
/// indicators sorted by decreasing error: the increments of the Jaccard
/// complement over successive prefixes. An all-zero input (class absent)
/// yields all zeros.
inline std::vector<double> lovasz_grad(std::span<const std::uint8_t> sorted_gt) {
    detail::require_data(!sorted_gt.empty(), "lovasz_grad of an empty sequence");
    const double positives = static_cast<double>(std::count(sorted_gt.begin(), sorted_gt.end(), std::uint8_t{1}));
    std::vector<double> g(sorted_gt.size(), 0.0);
    if (positives == 0.0) return g;
    double included_pos = 0.0, included_neg = 0.0, prev = 0.0;
    for (std::size_t k = 0; k < sorted_gt.size(); ++k) {
        (sorted_gt[k] ? included_pos : included_neg) += 1.0;
        const double intersection = positives - included_pos;
        const double uni = positives + included_neg;
        const double jaccard_loss = 1.0 - intersection / uni;
        g[k] = jaccard_loss - prev;
        prev = jaccard_loss;
    }
    return g;
}

/// Lovász-Softmax averaged over classes present in the target. The
/// gradient is the subgradient for the current sort order.
template <class T>
LossResult<T> lovasz_softmax_loss(const ProbMap<T>& y, const LabelMask& target) {
    detail::require_match(y, target);
    const std::size_t M = y.pixels();
    LossResult<T> out{T{}, ProbMap<T>(y.height(), y.width(), y.classes())};
    std::vector<double> errors(M);
    std::vector<std::size_t> order(M);
    std::vector<std::uint8_t> sorted_gt(M);
    double total = 0.0;
    std::size_t present = 0;
    std::vector<std::vector<double>> class_grads;
    std::vector<std::size_t> present_classes;
    for (std::size_t c = 0; c < y.classes(); ++c) {
        bool any = false;
        const auto ch = y.channel(c);
        for (std::size_t m = 0; m < M; ++m) {
            const bool fg = target[m] == c;
            any |= fg;
            errors[m] = fg ? 1.0 - static_cast<double>(ch[m]) : static_cast<double>(ch[m]);
        }
        if (!any) continue;
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return errors[a] > errors[b]; });
        for (std::size_t k = 0; k < M; ++k) sorted_gt[k] = target[order[k]] == c ? 1 : 0;
        const auto g = lovasz_grad(sorted_gt);
        double loss_c = 0.0;
        std::vector<double> dy(M);
        for (std::size_t k = 0; k < M; ++k) {
            const std::size_t m = order[k];
            loss_c += errors[m] * g[k];
            // d error / d Y is -1 on class pixels and +1 elsewhere
            dy[m] = sorted_gt[k] ? -g[k] : g[k];
        }
        total += loss_c;
        ++present;
        class_grads.push_back(std::move(dy));
        present_classes.push_back(c);
    }
    detail::require_data(present > 0, "lovasz loss: target has no classes");
    const double scale = 1.0 / static_cast<double>(present);
    out.value = static_cast<T>(total * scale);
    for (std::size_t i = 0; i < present_classes.size(); ++i) {
        auto g = out.grad.channel(present_classes[i]);
        for (std::size_t m = 0; m < M; ++m) g[m] = static_cast<T>(class_grads[i][m] * scale);
    }
    return out;
}

/// Signed Euclidean distance to the boundary pixels of one class: negative
/// inside the class, positive outside, zero on the boundary itself.
struct SignedDistanceMap {
    Grid<double> phi;
    std::uint8_t cls = kIris;
    /// Class absent or covering the whole image: there is no boundary.
    bool degenerate = false;
};

inline SignedDistanceMap signed_distance_transform(const LabelMask& target, std::uint8_t cls = kIris) {
    SignedDistanceMap sdm{Grid<double>(target.height(), target.width()), cls, false};
    const auto boundary = boundary_grid(target, cls);
    if (std::none_of(boundary.values().begin(), boundary.values().end(), [](std::uint8_t b) { return b != 0; })) {
        sdm.degenerate = true;
        return sdm;
    }
    const auto d2 = squared_distance_transform(boundary);
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double d = std::sqrt(d2[i]);
        sdm.phi[i] = target[i] == cls ? -d : d;
    }
    return sdm;
}

/// Lowest value the boundary loss can take for this map, attained by the
/// indicator of phi < 0.
inline double boundary_loss_minimum(const SignedDistanceMap& sdm) {
    double sum = 0.0;
    for (double v : sdm.phi.values())
        if (v < 0.0) sum += v;
    return sum / static_cast<double>(sdm.phi.size());
}

/// L = (1/M) sum_m phi_m Y_{cls,m}. Linear in Y and may be negative.
template <class T>
LossResult<T> boundary_loss(const ProbMap<T>& y, const SignedDistanceMap& sdm) {
    detail::require_data(!sdm.degenerate, "boundary loss needs a non-degenerate signed distance map");
    detail::require_data(y.matches(sdm.phi), "probability map and distance map dimensions differ");
    detail::require_data(sdm.cls < y.classes(), "boundary class exceeds probability channels");
    const std::size_t M = y.pixels();
    const double inv_m = 1.0 / static_cast<double>(M);
    LossResult<T> out{T{}, ProbMap<T>(y.height(), y.width(), y.classes())};
    const auto ch = y.channel(sdm.cls);
    auto g = out.grad.channel(sdm.cls);
    double sum = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
        sum += sdm.phi[m] * static_cast<double>(ch[m]);
        g[m] = static_cast<T>(sdm.phi[m] * inv_m);
    }
    out.value = static_cast<T>(sum * inv_m);
    return out;
}

/// alpha * dice + (1 - alpha) * boundary; pure Dice (flagged) when the
/// distance map is degenerate.
template <class T>
LossResult<T> boundary_dice_loss(const ProbMap<T>& y, const LabelMask& target, const SignedDistanceMap& sdm,
                                 double alpha = 0.5, double epsilon = 1e-8) {
    auto dice = generalized_dice_loss(y, target, epsilon);
    if (sdm.degenerate) {
        dice.boundary_fallback = true;
        return dice;
    }
    return combine_losses(dice, boundary_loss(y, sdm), alpha);
}

template <class T>
LossResult<T> boundary_dice_loss(const ProbMap<T>& y, const LabelMask& target, double alpha = 0.5,
                                 double epsilon = 1e-8, std::uint8_t cls = kIris) {
    return boundary_dice_loss(y, target, signed_distance_transform(target, cls), alpha, epsilon);
}

/// Dispatches on spec.variant. `sdm` may be supplied to avoid recomputing the
/// distance map; it is computed from the target otherwise. A pure boundary
/// loss on a degenerate map returns zero loss and gradient with the fallback
/// flag set.
template <class T>
LossResult<T> evaluate_loss(const LossSpec& spec, const ProbMap<T>& y, const LabelMask& target,
                            const SignedDistanceMap* sdm = nullptr) {
    std::optional<SignedDistanceMap> own;
    auto distance_map = [&]() -> const SignedDistanceMap& {
        if (sdm) return *sdm;
        if (!own) own = signed_distance_transform(target, spec.boundary_class);
        return *own;
    };
    switch (spec.variant) {
        case LossKind::dice: return generalized_dice_loss(y, target, spec.epsilon);
        case LossKind::cross_entropy: return cross_entropy_loss(y, target, spec.epsilon);
        case LossKind::dice_ce: return dice_ce_loss(y, target, spec.alpha, spec.epsilon);
        case LossKind::lovasz_softmax: return lovasz_softmax_loss(y, target);
        case LossKind::boundary: {
            const auto& d = distance_map();
            if (d.degenerate) {
                detail::require_match(y, target);
                return {T{}, ProbMap<T>(y.height(), y.width(), y.classes()), true};
            }
            return boundary_loss(y, d);
        }
        case LossKind::boundary_dice: return boundary_dice_loss(y, target, distance_map(), spec.alpha, spec.epsilon);
    }
    throw ConfigError("unhandled loss variant");
}

}  // namespace irisseg
