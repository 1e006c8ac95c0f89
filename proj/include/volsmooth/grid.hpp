#pragma once

#include "volsmooth/surface.hpp"

#include <array>
#include <cstddef>
#include <random>
#include <vector>

namespace volsmooth {

/// Rectilinear grid pi_rho x pi_z. Axes are strictly increasing; point (i, j) has
/// flat index i * z.size() + j.
struct RectGrid {
    std::vector<double> rho;
    std::vector<double> z;

    std::size_t m() const { return rho.size(); }
    std::size_t n() const { return z.size(); }
    std::size_t size() const { return rho.size() * z.size(); }
    std::size_t index(std::size_t i, std::size_t j) const { return i * z.size() + j; }

    std::vector<Coord> points() const;

    /// Uniform m x n grid over the closed domain.
    static RectGrid uniform(const Domain& domain, std::size_t m, std::size_t n);

    /// Uniform grid with every interior node displaced by U(-h/4, h/4), i.e. kept
    /// inside the half-cell centred on its uniform position. Endpoints stay fixed.
    static RectGrid jittered(const Domain& domain, std::size_t m, std::size_t n, std::mt19937_64& rng);
};

/// Weights of the three-point Lagrange stencil at node `at` of an increasing axis.
/// Interior nodes use (at-1, at, at+1); the end nodes use the nearest three nodes.
struct Stencil3 {
    std::array<std::size_t, 3> idx;
    std::array<double, 3> d1;
    std::array<double, 3> d2;
};

Stencil3 stencil3(const std::vector<double>& axis, std::size_t at);

/// Interior-only second-difference weights (at-1, at, at+1) for 0 < at < size-1.
Stencil3 central3(const std::vector<double>& axis, std::size_t at);

}  // namespace volsmooth
