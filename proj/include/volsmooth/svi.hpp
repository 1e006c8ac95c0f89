#pragma once

#include "volsmooth/arbitrage.hpp"
#include "volsmooth/grid.hpp"
#include "volsmooth/surface.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <vector>

namespace volsmooth::svi {

/// Raw SVI slice: total variance w(k) = a + b (rho (k - m) + sqrt((k - m)^2 + sigma^2)).
struct SviSlice {
    double tau = 1.0;
    double a = 0.04;
    double b = 0.1;
    double rho = 0.0;
    double m = 0.0;
    double sigma = 0.1;

    double total_variance(double k) const;
    double dw(double k) const;
    double d2w(double k) const;
};

struct SviBounds {
    double a_min = -2.0, a_max = 2.0;
    double b_min = 0.0, b_max = 1.0;
    double rho_min = -1.0, rho_max = 1.0;
    double m_min = -1.5, m_max = 0.5;
    double sigma_min = 1e-8, sigma_max = 2.0;
};

/// Throws NegativeVariance if w(k) <= 0.
double svi_vol(const SviSlice& slice, double k);

/// Value and analytic k-derivatives of the volatility slice.
arb::SliceJet svi_jet(const SviSlice& slice, double k);

struct CalibrationPoint {
    double k;
    double vol;
    double weight = 1.0;
};

struct SviFit {
    SviSlice slice;
    double mape = 0.0;
    double rmse = 0.0;
    double min_butterfly = 0.0;  // over the constraint grid
};

/// Weighted least squares in vol subject to the bounds, w > 0 and a nonnegative
/// butterfly term on 101 uniform k-points spanning [min k - 0.1, max k + 0.1].
/// Multi-started from 8 deterministic initial points. Throws Underdetermined for
/// fewer than 5 points and Infeasible if no start reaches a feasible point.
SviFit svi_calibrate(const std::vector<CalibrationPoint>& points, double tau, const SviBounds& bounds = {});

/// The k-grid on which the butterfly constraint is imposed.
std::vector<double> constraint_grid(const std::vector<CalibrationPoint>& points);

// ---------------------------------------------------------------------------
// SSVI

struct SsviParams {
    double V = 0.04;
    double V_prime = 0.04;
    double theta = 0.11;
    double rho = -0.5;
    double p = 0.01;  // carried for completeness; unused by the formulas
    double eta = 1.19;
    double gamma = 0.49;
    double kappa1 = 5.5;
    double kappa2 = 0.1;
};

/// Term structure of ATM total variance theta_tau.
double ssvi_theta(const SsviParams& params, double tau);

/// Throws DegenerateTheta when theta_tau <= 0.
double ssvi_vol(const SsviParams& params, double tau, double k);

/// Surface in (rho, z) coordinates.
SurfaceFn ssvi_surface(const SsviParams& params);

struct PerturbationSpec {
    double multiplicative = 0.3;  // V, V', theta, eta scaled by U(1 - x, 1 + x)
    double rho_additive = 0.2;    // rho shifted by U(-x, x), clamped to (-0.99, 0.99)
};

/// Input grid: rho nodes crossed with z nodes.
struct GridSpec {
    std::vector<double> rho = {0.16, 0.28, 0.4, 0.52, 0.64, 0.76, 0.88, 1.0};
    std::vector<double> z;  // empty means {-1.5, -1.46, ..., 0.5}

    RectGrid grid() const;
};

struct GeneratedSurface {
    SsviParams params;
    SurfaceSnapshot snapshot;
};

/// Deterministic in `seed`. Each surface is validated on a 50x50 grid and redrawn
/// (up to 100 times) on violation; throws GenerationFailed past the cap.
std::vector<GeneratedSurface> gen_ssvi_dataset(const SsviParams& base, std::size_t n_surfaces,
                                               const PerturbationSpec& perturbation, const GridSpec& grid,
                                               std::uint64_t seed, const Domain& domain = {});

SurfaceSnapshot snapshot_from_surface(const SurfaceFn& surface, const RectGrid& grid, const std::string& timestamp);

nlohmann::json to_json(const SviSlice& s);
SviSlice slice_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SsviParams& p);
SsviParams ssvi_from_json(const nlohmann::json& j);

}  // namespace volsmooth::svi
