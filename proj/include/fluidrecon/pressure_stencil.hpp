#pragma once

#include <cstddef>
#include <vector>

#include "fluidrecon/grid.hpp"

namespace fluidrecon::detail {

enum class NeighborKind : std::uint8_t { Self, Zero, Cell };

/// How a pressure stencil reads p at x + offset: the cell itself
/// (zero-gradient at SOLID, INLET or outside the domain), a fixed zero
/// (EMPTY, OUTLET), or another liquid cell.
struct NeighborRef {
    NeighborKind kind = NeighborKind::Zero;
    std::size_t index = 0;
};

NeighborRef resolve_pressure_neighbor(const SimGrid& geometry, std::size_t x, Index3 offset);

/// 6 entries per cell in kFaceOffsets order (only meaningful for liquid cells).
std::vector<NeighborRef> face_neighbor_table(const SimGrid& geometry);

/// 27 entries per cell in PressureKernel::offset_index order.
std::vector<NeighborRef> cube_neighbor_table(const SimGrid& geometry);

}  // namespace fluidrecon::detail
