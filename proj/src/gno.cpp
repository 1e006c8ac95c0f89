#include "volsmooth/gno.hpp"

#include "volsmooth/errors.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <random>

namespace volsmooth::gno {

void GnoConfig::validate() const {
    if (layers < 2) throw Error(ErrorCode::Config, "GNO needs at least two layers");
    if (channels < 1 || lift_hidden < 1 || kernel_hidden < 1 || kernel_depth < 1) {
        throw Error(ErrorCode::Config, "GNO widths must be positive");
    }
    if (K < 1) throw Error(ErrorCode::Config, "K must be at least 1");
    if (!(rho_bar > 0.0)) throw Error(ErrorCode::Config, "rho_bar must be positive");
}

nlohmann::json to_json(const GnoConfig& c) {
    return {{"layers", c.layers},
            {"channels", c.channels},
            {"lift_hidden", c.lift_hidden},
            {"kernel_hidden", c.kernel_hidden},
            {"kernel_depth", c.kernel_depth},
            {"K", c.K},
            {"rho_bar", c.rho_bar},
            {"epsilon_arb", c.epsilon_arb},
            {"output_activation", "softplus"}};
}

GnoConfig config_from_json(const nlohmann::json& j) {
    GnoConfig c;
    for (const auto& [key, value] : j.items()) {
        if (key == "layers") c.layers = value.get<int>();
        else if (key == "channels") c.channels = value.get<int>();
        else if (key == "lift_hidden") c.lift_hidden = value.get<int>();
        else if (key == "kernel_hidden") c.kernel_hidden = value.get<int>();
        else if (key == "kernel_depth") c.kernel_depth = value.get<int>();
        else if (key == "K") c.K = value.get<std::size_t>();
        else if (key == "rho_bar") c.rho_bar = value.get<double>();
        else if (key == "epsilon_arb") c.epsilon_arb = value.get<double>();
        else if (key == "output_activation") {
            if (value.get<std::string>() != "softplus") throw Error(ErrorCode::Config, "only softplus output is supported");
        } else {
            throw Error(ErrorCode::Config, "unknown model config key '" + key + "'");
        }
    }
    c.validate();
    return c;
}

ParameterLayout ParameterLayout::make(const GnoConfig& cfg) {
    cfg.validate();
    ParameterLayout layout;
    std::size_t offset = 0;
    const int c = cfg.channels;
    for (int j = 0; j < cfg.layers; ++j) {
        LayerLayout l;
        l.lift.dims = {j == 0 ? 1 : c, cfg.lift_hidden, c};
        l.lift_offset = offset;
        offset += l.lift.param_count();
        l.kernel.dims.push_back(cfg.kernel_in());
        for (int d = 0; d < cfg.kernel_depth; ++d) l.kernel.dims.push_back(cfg.kernel_hidden);
        l.kernel.dims.push_back(cfg.kernel_out());
        l.kernel_offset = offset;
        offset += l.kernel.param_count();
        l.bias_offset = offset;
        offset += static_cast<std::size_t>(c);
        if (j > 0) {
            l.local_offset = offset;
            offset += static_cast<std::size_t>(c * c);
        }
        layout.layers.push_back(std::move(l));
    }
    layout.projection.dims = {c, cfg.lift_hidden, 1};
    layout.projection_offset = offset;
    offset += layout.projection.param_count();
    layout.total = offset;
    return layout;
}

GnoModel::GnoModel(GnoConfig config)
    : config_(config), layout_(ParameterLayout::make(config_)), params_(layout_.total, 0.0) {}

GnoModel GnoModel::initialized(GnoConfig config, std::uint64_t seed) {
    GnoModel m(config);
    std::mt19937_64 rng(seed);
    const int c = config.channels;
    auto span_of = [&](std::size_t offset, std::size_t n) { return m.params().subspan(offset, n); };
    for (const auto& l : m.layout_.layers) {
        ffn_init(l.lift, span_of(l.lift_offset, l.lift.param_count()), rng);
        ffn_init(l.kernel, span_of(l.kernel_offset, l.kernel.param_count()), rng);
        const double bound = 1.0 / std::sqrt(static_cast<double>(c));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (int i = 0; i < c; ++i) m.params_[l.bias_offset + static_cast<std::size_t>(i)] = u(rng);
        if (l.local_offset) {
            for (int i = 0; i < c * c; ++i) m.params_[*l.local_offset + static_cast<std::size_t>(i)] = u(rng);
        }
    }
    ffn_init(m.layout_.projection, span_of(m.layout_.projection_offset, m.layout_.projection.param_count()), rng);
    return m;
}

GradientRecord& GradientRecord::operator+=(const GradientRecord& other) {
    if (other.values.size() != values.size()) throw Error(ErrorCode::Shape, "gradient size mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) values[i] += other.values[i];
    return *this;
}

GradientRecord& GradientRecord::operator*=(double s) {
    for (double& v : values) v *= s;
    return *this;
}

bool GradientRecord::all_finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

OperatorInput OperatorInput::from_snapshot(const SurfaceSnapshot& snapshot) {
    OperatorInput in;
    in.coords.reserve(snapshot.size());
    in.values.reserve(snapshot.size());
    for (const auto& r : snapshot.records) {
        in.coords.push_back({r.rho, r.z});
        in.values.push_back(r.iv_mid);
    }
    return in;
}

OperatorInput OperatorInput::subset(const std::vector<std::size_t>& indices) const {
    OperatorInput out;
    out.coords.reserve(indices.size());
    out.values.reserve(indices.size());
    for (std::size_t i : indices) {
        out.coords.push_back(coords.at(i));
        out.values.push_back(values.at(i));
    }
    return out;
}

std::uint64_t fingerprint(std::span<const double> values) {
    std::uint64_t h = 1469598103934665603ULL;
    for (double v : values) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, &v, sizeof bits);
        h ^= bits;
        h *= 1099511628211ULL;
    }
    return h;
}

namespace {

constexpr std::size_t kChunkEdges = 2048;
constexpr std::size_t kKeepBudgetBytes = std::size_t{1} << 30;

/// Bytes needed to keep every kernel state of a forward pass.
std::size_t kernel_state_bytes(const GnoModel& model, const NeighborGraph& g) {
    std::size_t per_edge = 0;
    const auto& dims = model.layout().layers.front().kernel.dims;
    for (std::size_t l = 0; l < dims.size(); ++l) per_edge += (l == 0 || l + 1 == dims.size()) ? dims[l] : 3 * dims[l];
    return per_edge * sizeof(double) * g.edge_count() * static_cast<std::size_t>(model.config().layers);
}

void check_graph(const OperatorInput& input, const NeighborGraph& graph) {
    if (input.values.size() != input.coords.size()) throw Error(ErrorCode::Shape, "input values/coords mismatch");
    if (input.size() == 0) throw Error(ErrorCode::GraphMismatch, "empty input");
    if (graph.n_in != input.size() || graph.n_out() < input.size() || graph.offsets.size() != graph.n_out() + 1) {
        throw Error(ErrorCode::GraphMismatch, "graph was not built for this input");
    }
    for (std::size_t i = 0; i < input.size(); ++i) {
        if (graph.out_coords[i].rho != input.coords[i].rho || graph.out_coords[i].z != input.coords[i].z) {
            throw Error(ErrorCode::GraphMismatch, "graph outputs must start with the input coordinates");
        }
    }
    for (std::size_t y = 0; y < graph.n_out(); ++y) {
        if (graph.offsets[y + 1] <= graph.offsets[y]) throw Error(ErrorCode::GraphMismatch, "output without neighbours");
    }
}

/// Edge-chunk boundaries over output nodes.
std::vector<std::size_t> chunk_bounds(const NeighborGraph& g) {
    std::vector<std::size_t> bounds{0};
    std::size_t start_edge = 0;
    for (std::size_t y = 0; y < g.n_out(); ++y) {
        if (g.offsets[y + 1] - start_edge > kChunkEdges && y > bounds.back()) {
            bounds.push_back(y);
            start_edge = g.offsets[y];
        }
    }
    bounds.push_back(g.n_out());
    return bounds;
}

/// Observed vols enter the lift and kernel networks centred and scaled to unit order.
constexpr double kValueCenter = 0.2;
constexpr double kValueScale = 10.0;

double value_feature(double v) { return (v - kValueCenter) * kValueScale; }

template <class T>
void build_kernel_input(const NeighborGraph& g, std::size_t y0, std::size_t y1, const MatrixRM<T>& lifted_in,
                        const std::vector<T>& v_in, MatrixRM<T>& x) {
    const Eigen::Index c = lifted_in.cols();
    const std::size_t e0 = g.offsets[y0];
    const std::size_t e1 = g.offsets[y1];
    x.resize(static_cast<Eigen::Index>(e1 - e0), c + 5);
    Eigen::Index row = 0;
    for (std::size_t y = y0; y < y1; ++y) {
        const T ry = static_cast<T>(g.out_coords[y].rho);
        const T zy = static_cast<T>(g.out_coords[y].z);
        for (std::uint32_t xi : g.neighbors_of(y)) {
            const auto& cx = g.out_coords[xi];
            T* r = x.row(row).data();
            r[0] = ry;
            r[1] = zy;
            r[2] = static_cast<T>(cx.rho);
            r[3] = static_cast<T>(cx.z);
            const T* h = lifted_in.row(xi).data();
            for (Eigen::Index k = 0; k < c; ++k) r[4 + k] = h[k];
            r[4 + c] = v_in[xi];
            ++row;
        }
    }
}

/// S(y) = mean over N(y) of K_w(y, x) h~(x) + K_b(y, x).
template <class T>
void kernel_aggregate(const FfnShape& kshape, const T* kparams, const NeighborGraph& g, const MatrixRM<T>& lifted_in,
                      const std::vector<T>& v_in, MatrixRM<T>& s, std::size_t& evals,
                      std::vector<KernelChunk>* keep) {
    const Eigen::Index c = lifted_in.cols();
    s.setZero(static_cast<Eigen::Index>(g.n_out()), c);
    MatrixRM<T> x;
    MatrixRM<T> o;
    const auto bounds = chunk_bounds(g);
    for (std::size_t b = 0; b + 1 < bounds.size(); ++b) {
        const std::size_t y0 = bounds[b];
        const std::size_t y1 = bounds[b + 1];
        build_kernel_input(g, y0, y1, lifted_in, v_in, x);
        FfnCache<T>* cache = nullptr;
        if constexpr (std::is_same_v<T, double>) {
            if (keep) cache = &keep->emplace_back().cache;
        }
        ffn_forward<T>(kshape, kparams, x, o, cache);
        evals += static_cast<std::size_t>(x.rows());
        Eigen::Index e = 0;
        for (std::size_t y = y0; y < y1; ++y) {
            const auto nbrs = g.neighbors_of(y);
            T* sy = s.row(static_cast<Eigen::Index>(y)).data();
            for (std::uint32_t xi : nbrs) {
                const T* out = o.row(e).data();
                const T* h = lifted_in.row(xi).data();
                for (Eigen::Index a = 0; a < c; ++a) {
                    T acc = out[c * c + a];
                    const T* wrow = out + a * c;
                    for (Eigen::Index k = 0; k < c; ++k) acc += wrow[k] * h[k];
                    sy[a] += acc;
                }
                ++e;
            }
            const T inv = T(1) / static_cast<T>(nbrs.size());
            for (Eigen::Index a = 0; a < c; ++a) sy[a] *= inv;
        }
        if constexpr (std::is_same_v<T, double>) {
            if (keep) keep->back().out = std::move(o);
        }
    }
}

void kernel_backward(const FfnShape& kshape, const double* kparams, const NeighborGraph& g,
                     const MatrixRM<double>& lifted_in, const std::vector<double>& v_in, const MatrixRM<double>& ds,
                     double* kgrad, MatrixRM<double>& dlifted_in, const std::vector<KernelChunk>& kept) {
    const Eigen::Index c = lifted_in.cols();
    MatrixRM<double> x;
    MatrixRM<double> o;
    MatrixRM<double> dout;
    MatrixRM<double> dx;
    FfnCache<double> cache;
    const auto bounds = chunk_bounds(g);
    for (std::size_t b = 0; b + 1 < bounds.size(); ++b) {
        const std::size_t y0 = bounds[b];
        const std::size_t y1 = bounds[b + 1];
        const FfnCache<double>* cp = &cache;
        const MatrixRM<double>* op = &o;
        if (kept.empty()) {
            build_kernel_input(g, y0, y1, lifted_in, v_in, x);
            ffn_forward<double>(kshape, kparams, x, o, &cache);
        } else {
            cp = &kept.at(b).cache;
            op = &kept.at(b).out;
        }
        dout.resize(op->rows(), op->cols());
        Eigen::Index e = 0;
        for (std::size_t y = y0; y < y1; ++y) {
            const auto nbrs = g.neighbors_of(y);
            const double inv = 1.0 / static_cast<double>(nbrs.size());
            const double* dsy = ds.row(static_cast<Eigen::Index>(y)).data();
            for (std::uint32_t xi : nbrs) {
                const double* out = op->row(e).data();
                double* dO = dout.row(e).data();
                const double* h = lifted_in.row(xi).data();
                double* dh = dlifted_in.row(xi).data();
                for (Eigen::Index a = 0; a < c; ++a) {
                    const double dm = dsy[a] * inv;
                    double* dwrow = dO + a * c;
                    const double* wrow = out + a * c;
                    for (Eigen::Index k = 0; k < c; ++k) {
                        dwrow[k] = dm * h[k];
                        dh[k] += wrow[k] * dm;
                    }
                    dO[c * c + a] = dm;
                }
                ++e;
            }
        }
        ffn_backward(kshape, kparams, *cp, dout, kgrad, &dx);
        e = 0;
        for (std::size_t y = y0; y < y1; ++y) {
            for (std::uint32_t xi : g.neighbors_of(y)) {
                dlifted_in.row(xi) += dx.row(e).segment(4, c);
                ++e;
            }
        }
    }
}

template <class T>
std::vector<T> forward_impl(const GnoModel& model, const T* params, const OperatorInput& input,
                            const NeighborGraph& graph, ForwardTape* tape, ForwardStats* stats) {
    check_graph(input, graph);
    const auto& layout = model.layout();
    const int c = model.config().channels;
    const auto J = static_cast<std::size_t>(model.config().layers);
    const std::size_t n_in = input.size();
    const auto n_out = static_cast<Eigen::Index>(graph.n_out());

    std::vector<T> v_in;
    v_in.reserve(input.size());
    for (double v : input.values) v_in.push_back(static_cast<T>(value_feature(v)));
    const bool keep_kernels = tape && kernel_state_bytes(model, graph) <= kKeepBudgetBytes;
    if (stats) {
        stats->kernel_evals_per_layer.assign(J, 0);
        stats->node_ffn_evals = 0;
    }
    if constexpr (std::is_same_v<T, double>) {
        if (tape) {
            tape->valid = false;
            tape->lift_cache.assign(J, {});
            tape->lifted.assign(J, {});
            tape->pre.assign(J, {});
            tape->kernel_chunks.assign(J, {});
        }
    }
    auto cache_for = [&](std::size_t j) -> FfnCache<T>* {
        if constexpr (std::is_same_v<T, double>) {
            return tape ? &tape->lift_cache[j] : nullptr;
        } else {
            (void)j;
            return nullptr;
        }
    };

    MatrixRM<T> h;  // current hidden state at all outputs
    for (std::size_t j = 0; j < J; ++j) {
        const auto& l = layout.layers[j];
        MatrixRM<T> lifted;
        if (j == 0) {
            MatrixRM<T> v(static_cast<Eigen::Index>(n_in), 1);
            for (std::size_t i = 0; i < n_in; ++i) v(static_cast<Eigen::Index>(i), 0) = v_in[i];
            ffn_forward<T>(l.lift, params + l.lift_offset, v, lifted, cache_for(j));
            if (stats) stats->node_ffn_evals += n_in;
        } else {
            ffn_forward<T>(l.lift, params + l.lift_offset, h, lifted, cache_for(j));
            if (stats) stats->node_ffn_evals += static_cast<std::size_t>(n_out);
        }

        MatrixRM<T> pre;
        std::size_t evals = 0;
        std::vector<KernelChunk>* keep = nullptr;
        if constexpr (std::is_same_v<T, double>) {
            if (tape && keep_kernels) keep = &tape->kernel_chunks[j];
        }
        kernel_aggregate<T>(l.kernel, params + l.kernel_offset, graph, lifted, v_in, pre, evals, keep);
        if (stats) stats->kernel_evals_per_layer[j] = evals;
        pre.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(params + l.bias_offset, c);
        if (l.local_offset) {
            Eigen::Map<const MatrixRM<T>> w(params + *l.local_offset, c, c);
            pre.noalias() += lifted * w.transpose();
        }
        h.resize(pre.rows(), pre.cols());
        MatrixRM<T> phi(pre.rows(), pre.cols());
        gelu_array(pre.data(), h.data(), phi.data(), static_cast<std::size_t>(pre.size()));

        if constexpr (std::is_same_v<T, double>) {
            if (tape) {
                tape->lifted[j] = std::move(lifted);
                tape->pre[j] = std::move(pre);
            }
        }
    }

    MatrixRM<T> q;
    if constexpr (std::is_same_v<T, double>) {
        ffn_forward<T>(layout.projection, params + layout.projection_offset, h, q,
                       tape ? &tape->projection_cache : nullptr);
    } else {
        ffn_forward<T>(layout.projection, params + layout.projection_offset, h, q);
    }
    if (stats) stats->node_ffn_evals += static_cast<std::size_t>(n_out);

    std::vector<T> out(static_cast<std::size_t>(n_out));
    for (Eigen::Index y = 0; y < n_out; ++y) out[static_cast<std::size_t>(y)] = softplus(q(y, 0));

    if constexpr (std::is_same_v<T, double>) {
        if (tape) {
            tape->projection_out.assign(q.data(), q.data() + q.size());
            tape->fingerprint = fingerprint(model.params());
            tape->n_in = n_in;
            tape->n_out = static_cast<std::size_t>(n_out);
            tape->valid = true;
        }
    }
    return out;
}

}  // namespace

std::vector<double> gno_forward(const GnoModel& model, const OperatorInput& input, const NeighborGraph& graph,
                                ForwardTape* tape, ForwardStats* stats) {
    return forward_impl<double>(model, model.params().data(), input, graph, tape, stats);
}

std::vector<float> gno_forward_f32(const GnoModel& model, const OperatorInput& input, const NeighborGraph& graph,
                                   ForwardStats* stats) {
    const std::vector<float> params(model.params().begin(), model.params().end());
    return forward_impl<float>(model, params.data(), input, graph, nullptr, stats);
}

GradientRecord gno_backward(const GnoModel& model, const OperatorInput& input, const NeighborGraph& graph,
                            const ForwardTape& tape, std::span<const double> upstream) {
    if (!tape.valid || tape.n_in != input.size() || tape.n_out != graph.n_out() ||
        tape.fingerprint != fingerprint(model.params())) {
        throw Error(ErrorCode::StaleTape, "forward state does not match model, input or graph");
    }
    if (upstream.size() != graph.n_out()) throw Error(ErrorCode::Shape, "upstream gradient has wrong length");

    const auto& layout = model.layout();
    const double* params = model.params().data();
    const int c = model.config().channels;
    const auto J = static_cast<std::size_t>(model.config().layers);
    const auto n_out = static_cast<Eigen::Index>(graph.n_out());
    const auto n_in = static_cast<Eigen::Index>(input.size());
    std::vector<double> v_in;
    v_in.reserve(input.size());
    for (double v : input.values) v_in.push_back(value_feature(v));

    GradientRecord grad = GradientRecord::zeros_like(model);
    double* g = grad.values.data();

    MatrixRM<double> dq(n_out, 1);
    for (Eigen::Index y = 0; y < n_out; ++y) {
        dq(y, 0) = upstream[static_cast<std::size_t>(y)] * sigmoid(tape.projection_out[static_cast<std::size_t>(y)]);
    }
    MatrixRM<double> dh;
    ffn_backward(layout.projection, params + layout.projection_offset, tape.projection_cache, dq,
                 g + layout.projection_offset, &dh);

    for (std::size_t j = J; j-- > 0;) {
        const auto& l = layout.layers[j];
        const MatrixRM<double>& pre = tape.pre[j];
        MatrixRM<double> phi(pre.rows(), pre.cols());
        normal_cdf_array(pre.data(), phi.data(), static_cast<std::size_t>(pre.size()));
        MatrixRM<double> dpre = dh;
        gelu_grad_array(pre.data(), phi.data(), dpre.data(), static_cast<std::size_t>(pre.size()));

        const Eigen::Matrix<double, 1, Eigen::Dynamic> db = dpre.colwise().sum();
        Eigen::Map<Eigen::Matrix<double, 1, Eigen::Dynamic>>(g + l.bias_offset, c) += db;

        const MatrixRM<double>& lifted = tape.lifted[j];
        MatrixRM<double> dlifted;
        if (l.local_offset) {
            Eigen::Map<MatrixRM<double>> gw(g + *l.local_offset, c, c);
            Eigen::Map<const MatrixRM<double>> w(params + *l.local_offset, c, c);
            const MatrixRM<double> dw = dpre.transpose() * lifted;
            gw += dw;
            dlifted.noalias() = dpre * w;
        } else {
            dlifted.setZero(n_in, c);
        }
        kernel_backward(l.kernel, params + l.kernel_offset, graph, lifted, v_in, dpre, g + l.kernel_offset, dlifted,
                        tape.kernel_chunks[j]);

        if (j == 0) {
            ffn_backward(l.lift, params + l.lift_offset, tape.lift_cache[j], dlifted, g + l.lift_offset, nullptr);
        } else {
            MatrixRM<double> dprev;
            ffn_backward(l.lift, params + l.lift_offset, tape.lift_cache[j], dlifted, g + l.lift_offset, &dprev);
            dh = std::move(dprev);
        }
    }
    return grad;
}

std::vector<double> smooth(const GnoModel& model, const OperatorInput& input, const std::vector<Coord>& extra) {
    const auto graph = build_operator_graph(input.coords, extra, model.config().rho_bar, model.config().K);
    return gno_forward(model, input, graph);
}

nlohmann::json checkpoint_to_json(const GnoModel& model) {
    const auto& layout = model.layout();
    const double* p = model.params().data();
    const int c = model.config().channels;
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : layout.layers) {
        nlohmann::json local = nullptr;
        if (l.local_offset) {
            local = nlohmann::json::array();
            for (int r = 0; r < c; ++r) {
                const double* row = p + *l.local_offset + static_cast<std::size_t>(r * c);
                local.push_back(std::vector<double>(row, row + c));
            }
        }
        layers.push_back({{"lift", ffn_to_json(l.lift, p + l.lift_offset)},
                          {"kernel", ffn_to_json(l.kernel, p + l.kernel_offset)},
                          {"bias", std::vector<double>(p + l.bias_offset, p + l.bias_offset + c)},
                          {"local_w", std::move(local)}});
    }
    return {{"format_version", 1},
            {"config", to_json(model.config())},
            {"parameter_count", model.parameter_count()},
            {"layers", std::move(layers)},
            {"projection", ffn_to_json(layout.projection, p + layout.projection_offset)}};
}

GnoModel checkpoint_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format_version").get<int>() != 1) throw Error(ErrorCode::Schema, "unsupported checkpoint version");
        GnoModel model(config_from_json(j.at("config")));
        const auto& layout = model.layout();
        double* p = model.params().data();
        const int c = model.config().channels;
        const auto& layers = j.at("layers");
        if (layers.size() != layout.layers.size()) throw Error(ErrorCode::Schema, "checkpoint layer count mismatch");
        for (std::size_t i = 0; i < layout.layers.size(); ++i) {
            const auto& l = layout.layers[i];
            const auto& lj = layers[i];
            ffn_from_json(lj.at("lift"), l.lift, p + l.lift_offset);
            ffn_from_json(lj.at("kernel"), l.kernel, p + l.kernel_offset);
            const auto bias = lj.at("bias").get<std::vector<double>>();
            if (bias.size() != static_cast<std::size_t>(c)) throw Error(ErrorCode::Schema, "bias shape mismatch");
            std::copy(bias.begin(), bias.end(), p + l.bias_offset);
            const auto& local = lj.at("local_w");
            if (l.local_offset.has_value() == local.is_null()) throw Error(ErrorCode::Schema, "local_w presence mismatch");
            if (l.local_offset) {
                if (local.size() != static_cast<std::size_t>(c)) throw Error(ErrorCode::Schema, "local_w shape mismatch");
                for (int r = 0; r < c; ++r) {
                    const auto row = local[static_cast<std::size_t>(r)].get<std::vector<double>>();
                    if (row.size() != static_cast<std::size_t>(c)) throw Error(ErrorCode::Schema, "local_w shape mismatch");
                    std::copy(row.begin(), row.end(), p + *l.local_offset + static_cast<std::size_t>(r * c));
                }
            }
        }
        ffn_from_json(j.at("projection"), layout.projection, p + layout.projection_offset);
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Schema, std::string("checkpoint: ") + e.what());
    }
}

void save_checkpoint(const std::filesystem::path& path, const GnoModel& model) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out << checkpoint_to_json(model).dump() << '\n';
}

GnoModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    try {
        return checkpoint_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
    }
}

}  // namespace volsmooth::gno
