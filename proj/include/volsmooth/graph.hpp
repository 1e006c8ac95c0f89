#pragma once

#include "volsmooth/surface.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace volsmooth::gno {

/// In-neighbour lists of every output point, stored CSR-style. Neighbour indices
/// refer to the input discretization.
struct NeighborGraph {
    std::vector<Coord> out_coords;
    std::size_t n_in = 0;
    std::vector<std::size_t> offsets;     // size out_coords.size() + 1
    std::vector<std::uint32_t> neighbors;  // indices into the inputs

    std::size_t n_out() const { return out_coords.size(); }
    std::size_t edge_count() const { return neighbors.size(); }
    std::span<const std::uint32_t> neighbors_of(std::size_t y) const {
        return {neighbors.data() + offsets[y], offsets[y + 1] - offsets[y]};
    }
};

/// Candidates are inputs with |rho_x - rho_y| <= rho_bar, sorted by Euclidean
/// distance in (rho, z) (ties by index). Keeps every s-th candidate starting with the
/// nearest, where s = ceil(candidates / K) is the smallest stride yielding at most K.
/// Throws NoNeighbors if an output point has no candidate.
NeighborGraph build_graph(const std::vector<Coord>& pi_in, const std::vector<Coord>& pi_out, double rho_bar,
                          std::size_t K);

/// Graph whose outputs are the inputs followed by `extra` points, as required by
/// the operator's forward pass.
NeighborGraph build_operator_graph(const std::vector<Coord>& pi_in, const std::vector<Coord>& extra, double rho_bar,
                                   std::size_t K);

/// Candidate positions kept by the stride rule for `count` sorted candidates.
std::vector<std::size_t> stride_selection(std::size_t count, std::size_t K);

}  // namespace volsmooth::gno
