#pragma once

#include "volsmooth/grid.hpp"
#include "volsmooth/surface.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace volsmooth::arb {

/// A slice and its first two log-moneyness derivatives at one point.
struct SliceJet {
    double tau;
    double k;
    double v0;
    double v1;  // dv/dk
    double v2;  // d2v/dk2
};

/// (1 + d1 v1 sqrt(tau)) (1 + d2 v1 sqrt(tau)) + v0 v2 tau, with d1, d2 at (tau, k, v0).
/// Nonnegative on a slice iff its call prices are convex in strike.
double butterfly_term(const SliceJet& jet);

/// Risk-neutral density of the log-moneyness implied by the slice:
/// phi(-d2) / (v0 sqrt(tau)) * butterfly_term.
double implied_density(const SliceJet& jet);

/// Converts derivatives taken along z at fixed rho into a SliceJet (k = z rho).
SliceJet jet_from_z_derivatives(double rho, double z, double v, double dv_dz, double d2v_dz2);

enum class ViolationKind { Butterfly, Calendar };

struct Violation {
    double rho;
    double z;
    ViolationKind kind;
    double value;
};

struct ArbitrageReport {
    double min_butterfly = 0.0;
    double min_calendar_increment = 0.0;
    std::vector<Violation> violation_points;
    RectGrid butterfly_grid;
    RectGrid calendar_grid;
    std::vector<double> butterfly_values;  // RectGrid::index order
    std::vector<double> calendar_values;   // pairs (i, i+1), row-major in (i, j)

    bool arbitrage_free() const { return violation_points.empty(); }
};

/// Evaluates the butterfly term on the grid (z-derivatives by three-point finite
/// differences, chain-ruled to k) and the calendar increments
/// v(rho_{i+1}, z) rho_{i+1} - v(rho_i, z') rho_i at fixed k, where
/// z' = rho_{i+1} z / rho_i is clamped into the domain. Points below `threshold`
/// are reported as violations. Throws Evaluation on non-finite surface values.
ArbitrageReport validate_surface(const BatchSurfaceFn& surface, const Domain& domain, const RectGrid& grid,
                                 double threshold = 0.0);

ArbitrageReport validate_surface(const BatchSurfaceFn& surface, const Domain& domain, std::size_t m = 50,
                                 std::size_t n = 50, double threshold = 0.0);

/// Cross-evaluation points (rho_i, clamp(rho_{i+1} z_j / rho_i)) for i < m-1, row-major in (i, j).
std::vector<Coord> calendar_cross_points(const RectGrid& grid, const Domain& domain);

nlohmann::json report_to_json(const ArbitrageReport& report);

}  // namespace volsmooth::arb
