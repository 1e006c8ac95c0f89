#include "volsmooth/adamw.hpp"

#include "volsmooth/errors.hpp"

#include <cmath>

namespace volsmooth::train {

void adamw_step(std::span<double> params, std::span<const double> grads, AdamWState& state, double lr,
                double weight_decay) {
    if (grads.size() != params.size()) throw Error(ErrorCode::Shape, "gradient and parameter sizes differ");
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!std::isfinite(grads[i])) {
            throw Error(ErrorCode::NonFiniteGradient, "gradient entry " + std::to_string(i) + " is not finite");
        }
    }
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw Error(ErrorCode::Shape, "optimizer state does not match parameters");
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        params[i] -= lr * weight_decay * params[i];
        params[i] -= lr * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + state.eps);
    }
}

}  // namespace volsmooth::train
