#pragma once

// Stochastic gradient descent with momentum and L2 weight decay:
//
//   v <- momentum * v - lr * (g + l2 * p)
//   p <- p + v

#include <span>
#include <vector>

#include "error.hpp"

namespace irisseg {

struct SgdConfig {
    double learning_rate = 0.001;
    double momentum = 0.9;
    double l2 = 0.0005;

    void validate() const {
        detail::require_config(learning_rate > 0.0, "learning rate must be positive");
        detail::require_config(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0, 1)");
        detail::require_config(l2 >= 0.0, "l2 must be non-negative");
    }
};

/// Velocity buffer; sized to the parameters on the first step.
template <class T>
struct SgdState {
    std::vector<T> velocity;
};

template <class T>
void sgd_step(std::span<T> params, std::span<const T> grads, SgdState<T>& state, const SgdConfig& cfg) {
    detail::require_data(params.size() == grads.size(), "parameter and gradient sizes differ");
    if (state.velocity.empty()) state.velocity.assign(params.size(), T(0));
    detail::require_data(state.velocity.size() == params.size(), "optimizer state belongs to a different model");
    const T lr = static_cast<T>(cfg.learning_rate), mu = static_cast<T>(cfg.momentum), l2 = static_cast<T>(cfg.l2);
    T* v = state.velocity.data();
#pragma omp simd
    for (std::size_t i = 0; i < params.size(); ++i) {
        v[i] = mu * v[i] - lr * (grads[i] + l2 * params[i]);
        params[i] += v[i];
    }
}

}  // namespace irisseg
