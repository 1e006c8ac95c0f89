#pragma once

#include "volsmooth/ffn.hpp"
#include "volsmooth/graph.hpp"
#include "volsmooth/surface.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace volsmooth::gno {

struct GnoConfig {
    int layers = 4;          // J
    int channels = 16;       // hidden width c
    int lift_hidden = 64;    // hidden width of liftings and the projection
    int kernel_hidden = 64;  // hidden width of the kernel networks
    int kernel_depth = 2;    // hidden layers of the kernel networks
    std::size_t K = 50;      // neighbour cap
    double rho_bar = 0.3;    // truncation radius along rho
    double epsilon_arb = 1e-3;

    /// Kernel input: (rho_y, z_y, rho_x, z_x, lifted state at x, u(x)) with u = 10 (v - 0.2),
    /// the same rescaled vol that feeds the first lift.
    int kernel_in() const { return 5 + channels; }
    /// Kernel output: a c x c weight matrix followed by a c-vector bias.
    int kernel_out() const { return channels * channels + channels; }
    void validate() const;
};

nlohmann::json to_json(const GnoConfig& config);
GnoConfig config_from_json(const nlohmann::json& j);

struct LayerLayout {
    FfnShape lift;
    std::size_t lift_offset = 0;
    FfnShape kernel;
    std::size_t kernel_offset = 0;
    std::size_t bias_offset = 0;
    std::optional<std::size_t> local_offset;  // absent in the first layer
};

struct ParameterLayout {
    std::vector<LayerLayout> layers;
    FfnShape projection;
    std::size_t projection_offset = 0;
    std::size_t total = 0;

    static ParameterLayout make(const GnoConfig& config);
};

/// All trainable parameters, stored contiguously in the order given by layout().
class GnoModel {
public:
    /// Zero-initialized model.
    explicit GnoModel(GnoConfig config = {});

    /// Weights and biases drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    static GnoModel initialized(GnoConfig config, std::uint64_t seed);

    const GnoConfig& config() const { return config_; }
    const ParameterLayout& layout() const { return layout_; }
    std::span<double> params() { return params_; }
    std::span<const double> params() const { return params_; }
    std::size_t parameter_count() const { return params_.size(); }

private:
    GnoConfig config_;
    ParameterLayout layout_;
    std::vector<double> params_;
};

/// Gradient of a scalar with respect to every model parameter, laid out like GnoModel::params().
struct GradientRecord {
    std::vector<double> values;

    static GradientRecord zeros_like(const GnoModel& model) { return {std::vector<double>(model.parameter_count())}; }
    GradientRecord& operator+=(const GradientRecord& other);
    GradientRecord& operator*=(double s);
    bool all_finite() const;
};

/// The discretized input function: coordinates and observed vols.
struct OperatorInput {
    std::vector<Coord> coords;
    std::vector<double> values;

    std::size_t size() const { return coords.size(); }
    static OperatorInput from_snapshot(const SurfaceSnapshot& snapshot);
    OperatorInput subset(const std::vector<std::size_t>& indices) const;
};

struct ForwardStats {
    std::vector<std::size_t> kernel_evals_per_layer;
    std::size_t node_ffn_evals = 0;
};

/// Kernel-network states of one chunk of edges.
struct KernelChunk {
    FfnCache<double> cache;
    MatrixRM<double> out;
};

/// Intermediate states of a double-precision forward pass, consumed by gno_backward.
/// Kernel states are kept when they fit a fixed memory budget and recomputed otherwise.
struct ForwardTape {
    std::uint64_t fingerprint = 0;
    std::size_t n_in = 0;
    std::size_t n_out = 0;
    bool valid = false;
    std::vector<FfnCache<double>> lift_cache;  // per layer; layer 0 over inputs only
    std::vector<MatrixRM<double>> lifted;      // per layer h~_j
    std::vector<MatrixRM<double>> pre;         // per layer, pre-activation of h_{j+1}
    FfnCache<double> projection_cache;
    std::vector<double> projection_out;        // before Softplus
    std::vector<std::vector<KernelChunk>> kernel_chunks;  // per layer; empty when recomputed
};

/// Smoothed vols at every output coordinate of `graph`. The graph's first
/// input.size() outputs must be the input coordinates (build_operator_graph).
/// Throws GraphMismatch otherwise.
std::vector<double> gno_forward(const GnoModel& model, const OperatorInput& input, const NeighborGraph& graph,
                                ForwardTape* tape = nullptr, ForwardStats* stats = nullptr);

/// Single-precision inference path.
std::vector<float> gno_forward_f32(const GnoModel& model, const OperatorInput& input, const NeighborGraph& graph,
                                   ForwardStats* stats = nullptr);

/// Reverse-mode gradient of sum_y upstream[y] * vhat(y). Throws StaleTape if `tape`
/// does not belong to this model and graph.
GradientRecord gno_backward(const GnoModel& model, const OperatorInput& input, const NeighborGraph& graph,
                            const ForwardTape& tape, std::span<const double> upstream);

/// Convenience: build the operator graph for input + extra points and evaluate.
std::vector<double> smooth(const GnoModel& model, const OperatorInput& input, const std::vector<Coord>& extra);

std::uint64_t fingerprint(std::span<const double> values);

nlohmann::json checkpoint_to_json(const GnoModel& model);
GnoModel checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const std::filesystem::path& path, const GnoModel& model);
GnoModel load_checkpoint(const std::filesystem::path& path);

}  // namespace volsmooth::gno
