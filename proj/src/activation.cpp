#include "volsmooth/ffn.hpp"

#include <cmath>

namespace volsmooth::gno {

void normal_cdf_array(const double* __restrict x, double* __restrict out, std::size_t n) {
#pragma omp simd
    for (std::size_t i = 0; i < n; ++i) out[i] = 0.5 * std::erfc(x[i] * -0.70710678118654752440);
}

void normal_cdf_array(const float* __restrict x, float* __restrict out, std::size_t n) {
#pragma omp simd
    for (std::size_t i = 0; i < n; ++i) out[i] = 0.5f * std::erfc(x[i] * -0.70710678f);
}

void gelu_grad_array(const double* __restrict x, const double* __restrict cdf, double* __restrict g, std::size_t n) {
#pragma omp simd
    for (std::size_t i = 0; i < n; ++i) {
        g[i] *= cdf[i] + x[i] * std::exp(-0.5 * x[i] * x[i]) * 0.39894228040143267794;
    }
}

}  // namespace volsmooth::gno
