#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace volsmooth::train {

struct AdamWState {
    std::uint64_t step = 0;
    std::vector<double> m;
    std::vector<double> v;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One AdamW update with decoupled weight decay theta -= lr * wd * theta.
/// Throws NonFiniteGradient (leaving params and state untouched) if any gradient
/// entry is not finite, and Shape if the sizes disagree.
void adamw_step(std::span<double> params, std::span<const double> grads, AdamWState& state, double lr,
                double weight_decay);

}  // namespace volsmooth::train
