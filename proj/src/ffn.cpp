#include "volsmooth/ffn.hpp"

#include "volsmooth/errors.hpp"

#include <string>

namespace volsmooth::gno {

std::size_t FfnShape::param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        n += static_cast<std::size_t>(dims[l + 1]) * static_cast<std::size_t>(dims[l] + 1);
    }
    return n;
}

std::size_t FfnShape::weight_offset(std::size_t layer) const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < layer; ++l) {
        n += static_cast<std::size_t>(dims[l + 1]) * static_cast<std::size_t>(dims[l] + 1);
    }
    return n;
}

std::size_t FfnShape::bias_offset(std::size_t layer) const {
    return weight_offset(layer) + static_cast<std::size_t>(dims[layer + 1]) * static_cast<std::size_t>(dims[layer]);
}

template <class T>
void ffn_forward(const FfnShape& shape, const T* params, const MatrixRM<T>& x, MatrixRM<T>& y,
                 FfnCache<T>* cache) {
    using Map = Eigen::Map<const MatrixRM<T>>;
    using VMap = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>;
    const std::size_t L = shape.layer_count();
    if (x.cols() != shape.in_dim()) throw Error(ErrorCode::Shape, "FFN input has wrong width");

    if (cache) {
        cache->act.resize(L);
        cache->pre.resize(L - 1);
        cache->cdf.resize(L - 1);
        cache->act[0] = x;
    }
    MatrixRM<T> current;
    const MatrixRM<T>* in = &x;
    for (std::size_t l = 0; l < L; ++l) {
        const int out_dim = shape.dims[l + 1];
        const int in_dim = shape.dims[l];
        Map w(params + shape.weight_offset(l), out_dim, in_dim);
        VMap b(params + shape.bias_offset(l), out_dim);
        MatrixRM<T> z(in->rows(), out_dim);
        z.noalias() = (*in) * w.transpose();
        z.rowwise() += b;
        if (l + 1 == L) {
            y = std::move(z);
            break;
        }
        MatrixRM<T> a(z.rows(), z.cols());
        MatrixRM<T> phi(z.rows(), z.cols());
        gelu_array(z.data(), a.data(), phi.data(), static_cast<std::size_t>(z.size()));
        if (cache) {
            cache->pre[l] = std::move(z);
            cache->cdf[l] = std::move(phi);
            cache->act[l + 1] = std::move(a);
            in = &cache->act[l + 1];
        } else {
            current = std::move(a);
            in = &current;
        }
    }
}

template void ffn_forward<double>(const FfnShape&, const double*, const MatrixRM<double>&, MatrixRM<double>&,
                                  FfnCache<double>*);
template void ffn_forward<float>(const FfnShape&, const float*, const MatrixRM<float>&, MatrixRM<float>&,
                                 FfnCache<float>*);

void ffn_backward(const FfnShape& shape, const double* params, const FfnCache<double>& cache,
                  const MatrixRM<double>& dy, double* grad, MatrixRM<double>* dx) {
    using Map = Eigen::Map<const MatrixRM<double>>;
    using GMap = Eigen::Map<MatrixRM<double>>;
    using GVMap = Eigen::Map<Eigen::Matrix<double, 1, Eigen::Dynamic>>;
    const std::size_t L = shape.layer_count();
    MatrixRM<double> dz = dy;
    for (std::size_t li = L; li-- > 0;) {
        const int out_dim = shape.dims[li + 1];
        const int in_dim = shape.dims[li];
        GMap gw(grad + shape.weight_offset(li), out_dim, in_dim);
        GVMap gb(grad + shape.bias_offset(li), out_dim);
        // Evaluated into aligned temporaries so the result does not depend on where `grad` lives.
        const MatrixRM<double> dw = dz.transpose() * cache.act[li];
        const Eigen::Matrix<double, 1, Eigen::Dynamic> db = dz.colwise().sum();
        gw += dw;
        gb += db;
        if (li == 0 && !dx) break;
        Map w(params + shape.weight_offset(li), out_dim, in_dim);
        MatrixRM<double> da(dz.rows(), in_dim);
        da.noalias() = dz * w;
        if (li == 0) {
            *dx = std::move(da);
            break;
        }
        gelu_grad_array(cache.pre[li - 1].data(), cache.cdf[li - 1].data(), da.data(), static_cast<std::size_t>(da.size()));
        dz = std::move(da);
    }
}

void ffn_init(const FfnShape& shape, std::span<double> params, std::mt19937_64& rng) {
    if (params.size() != shape.param_count()) throw Error(ErrorCode::Shape, "FFN parameter buffer size mismatch");
    for (std::size_t l = 0; l < shape.layer_count(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(shape.dims[l]));
        std::uniform_real_distribution<double> u(-bound, bound);
        const std::size_t begin = shape.weight_offset(l);
        const std::size_t end = shape.weight_offset(l + 1);
        for (std::size_t i = begin; i < end; ++i) params[i] = u(rng);
    }
}

FeedForwardNet::FeedForwardNet(std::vector<int> dims) : shape_{std::move(dims)} {
    if (shape_.dims.size() < 2) throw Error(ErrorCode::Shape, "FFN needs at least input and output dims");
    for (int d : shape_.dims) {
        if (d <= 0) throw Error(ErrorCode::Shape, "FFN dims must be positive");
    }
    params_.assign(shape_.param_count(), 0.0);
}

Eigen::VectorXd ffn_eval(const FeedForwardNet& net, const Eigen::VectorXd& x) {
    if (x.size() != net.shape().in_dim()) {
        throw Error(ErrorCode::Shape, "expected input of size " + std::to_string(net.shape().in_dim()) + ", got " +
                                          std::to_string(x.size()));
    }
    MatrixRM<double> in = x.transpose();
    MatrixRM<double> out;
    ffn_forward<double>(net.shape(), net.params().data(), in, out);
    return out.row(0).transpose();
}

nlohmann::json ffn_to_json(const FfnShape& shape, const double* params) {
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t l = 0; l < shape.layer_count(); ++l) {
        const int out_dim = shape.dims[l + 1];
        const int in_dim = shape.dims[l];
        const double* w = params + shape.weight_offset(l);
        nlohmann::json weight = nlohmann::json::array();
        for (int r = 0; r < out_dim; ++r) weight.push_back(std::vector<double>(w + r * in_dim, w + (r + 1) * in_dim));
        const double* b = params + shape.bias_offset(l);
        layers.push_back({{"weight", std::move(weight)}, {"bias", std::vector<double>(b, b + out_dim)}});
    }
    return {{"dims", shape.dims}, {"layers", std::move(layers)}};
}

void ffn_from_json(const nlohmann::json& j, const FfnShape& shape, double* params) {
    if (j.at("dims").get<std::vector<int>>() != shape.dims) throw Error(ErrorCode::Schema, "FFN dims mismatch");
    const auto& layers = j.at("layers");
    if (layers.size() != shape.layer_count()) throw Error(ErrorCode::Schema, "FFN layer count mismatch");
    for (std::size_t l = 0; l < shape.layer_count(); ++l) {
        const int out_dim = shape.dims[l + 1];
        const int in_dim = shape.dims[l];
        const auto& weight = layers[l].at("weight");
        const auto& bias = layers[l].at("bias");
        if (weight.size() != static_cast<std::size_t>(out_dim) || bias.size() != static_cast<std::size_t>(out_dim)) {
            throw Error(ErrorCode::Schema, "FFN weight shape mismatch");
        }
        double* w = params + shape.weight_offset(l);
        for (int r = 0; r < out_dim; ++r) {
            const auto& row = weight[static_cast<std::size_t>(r)];
            if (row.size() != static_cast<std::size_t>(in_dim)) throw Error(ErrorCode::Schema, "FFN row width mismatch");
            for (int c = 0; c < in_dim; ++c) w[r * in_dim + c] = row[static_cast<std::size_t>(c)].get<double>();
        }
        double* b = params + shape.bias_offset(l);
        for (int r = 0; r < out_dim; ++r) b[r] = bias[static_cast<std::size_t>(r)].get<double>();
    }
}

}  // namespace volsmooth::gno
