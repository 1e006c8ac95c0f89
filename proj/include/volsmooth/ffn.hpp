#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

namespace volsmooth::gno {

template <class T>
using MatrixRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
inline T norm_cdf(T t) {
    return T(0.5) * std::erfc(-t * T(std::numbers::sqrt2 / 2.0));
}

/// GELU(t) = t Phi(t).
template <class T>
inline T gelu(T t) {
    return t * norm_cdf(t);
}

template <class T>
inline T gelu_grad(T t) {
    return norm_cdf(t) + t * std::exp(T(-0.5) * t * t) * T(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
}

template <class T>
inline T softplus(T t) {
    return t > T(0) ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

template <class T>
inline T sigmoid(T t) {
    return t >= T(0) ? T(1) / (T(1) + std::exp(-t)) : std::exp(t) / (T(1) + std::exp(t));
}

/// Phi(x) elementwise.
void normal_cdf_array(const double* x, double* out, std::size_t n);
void normal_cdf_array(const float* x, float* out, std::size_t n);

/// g *= GELU'(x), given cdf = Phi(x).
void gelu_grad_array(const double* x, const double* cdf, double* g, std::size_t n);

/// act = GELU(pre); cdf receives Phi(pre) and must not alias act.
template <class T>
inline void gelu_array(const T* pre, T* act, T* cdf, std::size_t n) {
    normal_cdf_array(pre, cdf, n);
    for (std::size_t i = 0; i < n; ++i) act[i] = pre[i] * cdf[i];
}

/// Layer widths of a dense network: GELU after every hidden layer, identity output.
/// Parameters are laid out layer by layer as a row-major (out x in) weight followed
/// by the out-dimensional bias.
struct FfnShape {
    std::vector<int> dims;

    int in_dim() const { return dims.front(); }
    int out_dim() const { return dims.back(); }
    std::size_t layer_count() const { return dims.size() - 1; }
    std::size_t param_count() const;
    std::size_t weight_offset(std::size_t layer) const;
    std::size_t bias_offset(std::size_t layer) const;
};

template <class T>
struct FfnCache {
    std::vector<MatrixRM<T>> act;  // act[0] is the input, act[l] the input of layer l
    std::vector<MatrixRM<T>> pre;  // pre-activations of hidden layers
    std::vector<MatrixRM<T>> cdf;  // Phi(pre)
};

/// Row-batched forward pass: each row of `x` is one sample.
template <class T>
void ffn_forward(const FfnShape& shape, const T* params, const MatrixRM<T>& x, MatrixRM<T>& y,
                 FfnCache<T>* cache = nullptr);

/// Accumulates parameter gradients into `grad` and, when `dx` is non-null, writes
/// the gradient with respect to the input rows.
void ffn_backward(const FfnShape& shape, const double* params, const FfnCache<double>& cache,
                  const MatrixRM<double>& dy, double* grad, MatrixRM<double>* dx);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
void ffn_init(const FfnShape& shape, std::span<double> params, std::mt19937_64& rng);

/// Owning single-sample network.
class FeedForwardNet {
public:
    explicit FeedForwardNet(std::vector<int> dims);

    const FfnShape& shape() const { return shape_; }
    std::span<double> params() { return params_; }
    std::span<const double> params() const { return params_; }

    void initialize(std::mt19937_64& rng) { ffn_init(shape_, params_, rng); }

private:
    FfnShape shape_;
    std::vector<double> params_;
};

/// Throws ShapeError when x has the wrong dimension.
Eigen::VectorXd ffn_eval(const FeedForwardNet& net, const Eigen::VectorXd& x);

nlohmann::json ffn_to_json(const FfnShape& shape, const double* params);

/// Reads weights into `params`; throws Schema if the stored dims differ from `shape`.
void ffn_from_json(const nlohmann::json& j, const FfnShape& shape, double* params);

}  // namespace volsmooth::gno
