#include "volsmooth/graph.hpp"

#include "volsmooth/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace volsmooth::gno {

std::vector<std::size_t> stride_selection(std::size_t count, std::size_t K) {
    if (K == 0) throw Error(ErrorCode::Config, "neighbour cap K must be positive");
    const std::size_t stride = count <= K ? 1 : (count + K - 1) / K;
    std::vector<std::size_t> picks;
    for (std::size_t p = 0; p < count; p += stride) picks.push_back(p);
    return picks;
}

NeighborGraph build_graph(const std::vector<Coord>& pi_in, const std::vector<Coord>& pi_out, double rho_bar,
                          std::size_t K) {
    if (pi_in.empty()) throw Error(ErrorCode::NoNeighbors, "empty input discretization");
    if (!(rho_bar > 0.0)) throw Error(ErrorCode::Config, "rho_bar must be positive");

    NeighborGraph g;
    g.out_coords = pi_out;
    g.n_in = pi_in.size();
    g.offsets.reserve(pi_out.size() + 1);
    g.offsets.push_back(0);
    g.neighbors.reserve(pi_out.size() * std::min(K, pi_in.size()));

    std::vector<std::pair<double, std::uint32_t>> cand;
    cand.reserve(pi_in.size());
    for (const auto& y : pi_out) {
        cand.clear();
        for (std::size_t x = 0; x < pi_in.size(); ++x) {
            const double dr = pi_in[x].rho - y.rho;
            if (std::abs(dr) > rho_bar) continue;
            const double dz = pi_in[x].z - y.z;
            cand.emplace_back(dr * dr + dz * dz, static_cast<std::uint32_t>(x));
        }
        if (cand.empty()) {
            std::ostringstream msg;
            msg << "no input within rho_bar of (" << y.rho << ", " << y.z << ")";
            throw Error(ErrorCode::NoNeighbors, msg.str());
        }
        std::sort(cand.begin(), cand.end());
        for (std::size_t p : stride_selection(cand.size(), K)) g.neighbors.push_back(cand[p].second);
        g.offsets.push_back(g.neighbors.size());
    }
    return g;
}

NeighborGraph build_operator_graph(const std::vector<Coord>& pi_in, const std::vector<Coord>& extra, double rho_bar,
                                   std::size_t K) {
    std::vector<Coord> out = pi_in;
    out.insert(out.end(), extra.begin(), extra.end());
    return build_graph(pi_in, out, rho_bar, K);
}

}  // namespace volsmooth::gno
