#include "volsmooth/arbitrage.hpp"

#include "volsmooth/black_scholes.hpp"
#include "volsmooth/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace volsmooth::arb {

double butterfly_term(const SliceJet& jet) {
    const double sqrt_tau = std::sqrt(jet.tau);
    const double a = 1.0 + bs::d1(jet.tau, jet.k, jet.v0) * jet.v1 * sqrt_tau;
    const double b = 1.0 + bs::d2(jet.tau, jet.k, jet.v0) * jet.v1 * sqrt_tau;
    return a * b + jet.v0 * jet.v2 * jet.tau;
}

double implied_density(const SliceJet& jet) {
    const double s = jet.v0 * std::sqrt(jet.tau);
    return bs::norm_pdf(-bs::d2(jet.tau, jet.k, jet.v0)) / s * butterfly_term(jet);
}

SliceJet jet_from_z_derivatives(double rho, double z, double v, double dv_dz, double d2v_dz2) {
    return {rho * rho, z * rho, v, dv_dz / rho, d2v_dz2 / (rho * rho)};
}

std::vector<Coord> calendar_cross_points(const RectGrid& grid, const Domain& domain) {
    std::vector<Coord> pts;
    if (grid.m() < 2) return pts;
    pts.reserve((grid.m() - 1) * grid.n());
    for (std::size_t i = 0; i + 1 < grid.m(); ++i) {
        for (std::size_t j = 0; j < grid.n(); ++j) {
            pts.push_back({grid.rho[i], domain.clamp_z(grid.rho[i + 1] * grid.z[j] / grid.rho[i])});
        }
    }
    return pts;
}

ArbitrageReport validate_surface(const BatchSurfaceFn& surface, const Domain& domain, const RectGrid& input_grid,
                                 double threshold) {
    RectGrid grid = input_grid;
    std::sort(grid.rho.begin(), grid.rho.end());
    std::sort(grid.z.begin(), grid.z.end());
    if (grid.m() < 3 || grid.n() < 3) throw Error(ErrorCode::Shape, "validation grid must be at least 3x3");

    auto pts = grid.points();
    const auto cross = calendar_cross_points(grid, domain);
    pts.insert(pts.end(), cross.begin(), cross.end());
    const auto values = surface(pts);
    if (values.size() != pts.size()) throw Error(ErrorCode::Shape, "surface returned wrong number of values");
    for (std::size_t p = 0; p < pts.size(); ++p) {
        if (!std::isfinite(values[p]) || values[p] <= 0.0) {
            std::ostringstream msg;
            msg << "surface value " << values[p] << " at rho=" << pts[p].rho << " z=" << pts[p].z;
            throw Error(ErrorCode::Evaluation, msg.str());
        }
    }

    ArbitrageReport report;
    report.butterfly_grid = grid;
    report.calendar_grid = grid;
    report.min_butterfly = std::numeric_limits<double>::infinity();
    report.min_calendar_increment = std::numeric_limits<double>::infinity();

    for (std::size_t i = 0; i < grid.m(); ++i) {
        for (std::size_t j = 0; j < grid.n(); ++j) {
            const auto st = stencil3(grid.z, j);
            double dz = 0.0;
            double dzz = 0.0;
            for (int t = 0; t < 3; ++t) {
                const double v = values[grid.index(i, st.idx[t])];
                dz += st.d1[t] * v;
                dzz += st.d2[t] * v;
            }
            const double but = butterfly_term(
                jet_from_z_derivatives(grid.rho[i], grid.z[j], values[grid.index(i, j)], dz, dzz));
            report.butterfly_values.push_back(but);
            report.min_butterfly = std::min(report.min_butterfly, but);
            if (but < threshold) report.violation_points.push_back({grid.rho[i], grid.z[j], ViolationKind::Butterfly, but});
        }
    }

    const std::size_t base = grid.size();
    for (std::size_t i = 0; i + 1 < grid.m(); ++i) {
        for (std::size_t j = 0; j < grid.n(); ++j) {
            const double later = values[grid.index(i + 1, j)] * grid.rho[i + 1];
            const double earlier = values[base + i * grid.n() + j] * grid.rho[i];
            const double inc = later - earlier;
            report.calendar_values.push_back(inc);
            report.min_calendar_increment = std::min(report.min_calendar_increment, inc);
            if (inc < threshold) {
                report.violation_points.push_back({grid.rho[i + 1], grid.z[j], ViolationKind::Calendar, inc});
            }
        }
    }
    return report;
}

ArbitrageReport validate_surface(const BatchSurfaceFn& surface, const Domain& domain, std::size_t m, std::size_t n,
                                 double threshold) {
    return validate_surface(surface, domain, RectGrid::uniform(domain, m, n), threshold);
}

nlohmann::json report_to_json(const ArbitrageReport& report) {
    nlohmann::json violations = nlohmann::json::array();
    for (const auto& v : report.violation_points) {
        violations.push_back({{"rho", v.rho},
                              {"z", v.z},
                              {"kind", v.kind == ViolationKind::Butterfly ? "butterfly" : "calendar"},
                              {"value", v.value}});
    }
    auto grid_json = [](const RectGrid& g) {
        return nlohmann::json{{"m", g.m()},
                              {"n", g.n()},
                              {"rho", {g.rho.front(), g.rho.back()}},
                              {"z", {g.z.front(), g.z.back()}}};
    };
    return {{"arbitrage_free", report.arbitrage_free()},
            {"min_butterfly", report.min_butterfly},
            {"min_calendar_increment", report.min_calendar_increment},
            {"violation_count", report.violation_points.size()},
            {"violation_points", std::move(violations)},
            {"butterfly_grid", grid_json(report.butterfly_grid)},
            {"calendar_grid", grid_json(report.calendar_grid)}};
}

}  // namespace volsmooth::arb
