#pragma once

#include "volsmooth/gno.hpp"
#include "volsmooth/grid.hpp"
#include "volsmooth/surface.hpp"

#include <vector>

namespace volsmooth::train {

struct LossWeights {
    double fit = 1.0;
    double cal = 10.0;
    double but = 10.0;
    double reg_rho = 0.01;
    double reg_z = 0.01;

    void validate() const;
};

/// A scalar and its gradient with respect to the surface values it was computed from.
struct LossValue {
    double value = 0.0;
    std::vector<double> grad;
};

/// w = max(vega / mean vega, 1), vega at the market vol.
std::vector<double> vega_weights(const SurfaceSnapshot& snapshot);

/// sqrt(mean(w ((vhat - v) / v)^2)). Throws Shape on length mismatch.
LossValue fit_loss(const std::vector<double>& predicted, const std::vector<double>& market,
                   const std::vector<double>& weights);
LossValue fit_loss(const std::vector<double>& predicted, const SurfaceSnapshot& snapshot);

/// Mean of (But - eps)^- over the grid. `values` are in RectGrid::index order.
LossValue butterfly_loss(const RectGrid& grid, const std::vector<double>& values, double epsilon = 1e-3);
double butterfly_loss(const BatchSurfaceFn& surface, const RectGrid& grid, double epsilon = 1e-3);

/// Mean over consecutive rho pairs and all z of
/// (v(rho_{i+1}, z) / v(rho_i, z') - rho_i / rho_{i+1} - eps)^-, with z' the clamped
/// cross point. `cross` holds v at arb::calendar_cross_points(grid, domain).
/// The gradient is laid out as values followed by cross.
LossValue calendar_loss(const RectGrid& grid, const std::vector<double>& values, const std::vector<double>& cross,
                        double epsilon = 1e-3);
double calendar_loss(const BatchSurfaceFn& surface, const RectGrid& grid, const Domain& domain,
                     double epsilon = 1e-3);

/// RMS of the second derivatives along rho and along z over interior grid nodes.
struct RegLosses {
    LossValue rho;
    LossValue z;
};
RegLosses reg_losses(const RectGrid& grid, const std::vector<double>& values);

struct LossBreakdown {
    double total = 0.0;
    double fit = 0.0;
    double but = 0.0;
    double cal = 0.0;
    double reg_rho = 0.0;
    double reg_z = 0.0;
};

struct TotalLoss {
    LossBreakdown parts;
    gno::GradientRecord grad;
};

/// Everything one loss evaluation needs. The operator sees `snapshot` restricted to
/// `input_indices`; the fit term covers every snapshot record.
struct LossProblem {
    const SurfaceSnapshot* snapshot = nullptr;
    std::vector<std::size_t> input_indices;  // empty means all records
    RectGrid arb_grid;
    Domain domain;
};

/// Weighted loss sum and, if requested, its gradient with respect to every model parameter.
TotalLoss total_loss(const gno::GnoModel& model, const LossProblem& problem, const LossWeights& weights,
                     bool with_gradient = true);

}  // namespace volsmooth::train
