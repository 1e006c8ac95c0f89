#include "volsmooth/grid.hpp"

#include "volsmooth/errors.hpp"

namespace volsmooth {

namespace {

std::vector<double> linspace(double a, double b, std::size_t n) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = n == 1 ? a : a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
    }
    if (n > 1) out.back() = b;
    return out;
}

void jitter_axis(std::vector<double>& axis, std::mt19937_64& rng) {
    if (axis.size() < 3) return;
    const double h = (axis.back() - axis.front()) / static_cast<double>(axis.size() - 1);
    std::uniform_real_distribution<double> u(-0.25 * h, 0.25 * h);
    for (std::size_t i = 1; i + 1 < axis.size(); ++i) axis[i] += u(rng);
}

Stencil3 lagrange(const std::vector<double>& x, std::size_t i0, std::size_t at) {
    Stencil3 s{};
    s.idx = {i0, i0 + 1, i0 + 2};
    const double x0 = x[i0];
    const double x1 = x[i0 + 1];
    const double x2 = x[i0 + 2];
    const double t = x[at];
    const double q0 = (x0 - x1) * (x0 - x2);
    const double q1 = (x1 - x0) * (x1 - x2);
    const double q2 = (x2 - x0) * (x2 - x1);
    s.d1 = {(2 * t - x1 - x2) / q0, (2 * t - x0 - x2) / q1, (2 * t - x0 - x1) / q2};
    s.d2 = {2.0 / q0, 2.0 / q1, 2.0 / q2};
    return s;
}

}  // namespace

std::vector<Coord> RectGrid::points() const {
    std::vector<Coord> pts;
    pts.reserve(size());
    for (double r : rho) {
        for (double zz : z) pts.push_back({r, zz});
    }
    return pts;
}

RectGrid RectGrid::uniform(const Domain& domain, std::size_t m, std::size_t n) {
    return {linspace(domain.rho_min, domain.rho_max, m), linspace(domain.z_min, domain.z_max, n)};
}

RectGrid RectGrid::jittered(const Domain& domain, std::size_t m, std::size_t n, std::mt19937_64& rng) {
    auto g = uniform(domain, m, n);
    jitter_axis(g.rho, rng);
    jitter_axis(g.z, rng);
    return g;
}

Stencil3 stencil3(const std::vector<double>& axis, std::size_t at) {
    if (axis.size() < 3) throw Error(ErrorCode::Shape, "finite differences need at least three nodes");
    std::size_t i0 = at == 0 ? 0 : at - 1;
    if (i0 + 2 >= axis.size()) i0 = axis.size() - 3;
    return lagrange(axis, i0, at);
}

Stencil3 central3(const std::vector<double>& axis, std::size_t at) {
    if (at == 0 || at + 1 >= axis.size()) throw Error(ErrorCode::Shape, "central stencil needs an interior node");
    return lagrange(axis, at - 1, at);
}

}  // namespace volsmooth
