#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

namespace fluidrecon {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

enum class CellType : std::uint8_t { Empty, Fluid, Surface, Solid, Inlet, Outlet };

/// FLUID or SURFACE: the cells that carry a pressure unknown.
inline bool is_liquid(CellType c) { return c == CellType::Fluid || c == CellType::Surface; }

/// Cells whose velocity is prescribed rather than evolved.
inline bool is_boundary_condition(CellType c)
{
    return c == CellType::Solid || c == CellType::Inlet || c == CellType::Outlet;
}

struct Index3 {
    int i = 0, j = 0, k = 0;
};

/// An axis-aligned boundary plane of the grid: `axis` in {0,1,2}, `positive`
/// selects the max face (index dims[axis]-1) instead of index 0.
struct PlaneSpec {
    int axis = 0;
    bool positive = false;

    /// Unit normal pointing into the domain.
    Vec3 inward_normal() const;
    bool contains(const std::array<int, 3>& dims, Index3 c) const;
    bool operator==(const PlaneSpec&) const = default;
};

struct BoundaryCoefficients {
    double bounce = 0.0;
    double damp = 0.0;
};

/// Uniform collocated grid. Cell (i,j,k) has its center at
/// origin + (i+0.5, j+0.5, k+0.5) * dx; storage is x-fastest.
///
/// Velocity component `a` stored at cell c also serves as the flux through the
/// face shared with c - e_a. Divergence (forward) and pressure gradient
/// (backward) use that convention so their composition is exactly the
/// 7-point Laplacian used by the pressure solvers.
class SimGrid {
public:
    SimGrid() = default;
    SimGrid(std::array<int, 3> dims, double dx, Vec3 origin = Vec3::Zero());

    const std::array<int, 3>& dims() const { return dims_; }
    double dx() const { return dx_; }
    const Vec3& origin() const { return origin_; }
    std::size_t size() const { return cells.size(); }

    std::size_t index(int i, int j, int k) const
    {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(dims_[0]) *
                   (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims_[1]) * static_cast<std::size_t>(k));
    }
    std::size_t index(Index3 c) const { return index(c.i, c.j, c.k); }
    Index3 coord(std::size_t idx) const;
    bool in_bounds(int i, int j, int k) const
    {
        return i >= 0 && j >= 0 && k >= 0 && i < dims_[0] && j < dims_[1] && k < dims_[2];
    }
    bool in_bounds(Index3 c) const { return in_bounds(c.i, c.j, c.k); }

    Vec3 cell_center(Index3 c) const;
    Vec3 cell_center(std::size_t idx) const { return cell_center(coord(idx)); }

    /// Neighbor index of `idx` shifted by `offset`, or nullopt outside the grid.
    std::optional<std::size_t> neighbor(std::size_t idx, Index3 offset) const;

    /// Checks the extents of every field against dims.
    void validate() const;

    std::vector<Vec3> velocity;
    std::vector<double> pressure;
    std::vector<double> divergence;
    std::vector<CellType> cells;

private:
    std::array<int, 3> dims_{0, 0, 0};
    double dx_ = 1.0;
    Vec3 origin_ = Vec3::Zero();
};

inline const std::array<Index3, 6> kFaceOffsets{{{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}}};

inline Index3 axis_offset(int axis, int sign)
{
    Index3 o;
    (axis == 0 ? o.i : axis == 1 ? o.j : o.k) = sign;
    return o;
}

std::vector<CellType> classify_cells(const SimGrid& grid, const std::vector<std::uint8_t>& fluid_occupancy,
                                     const std::vector<std::uint8_t>& solid_occupancy,
                                     std::optional<PlaneSpec> inlet, std::optional<PlaneSpec> outlet);

/// Flux through the lower face of `idx` along `axis` (the face shared with
/// idx - e_axis). Zero at SOLID or out-of-domain faces; the inlet cell's
/// velocity at faces touching an INLET.
double face_flux(const SimGrid& grid, const std::vector<Vec3>& velocity, const Index3& c, int axis);

/// Cell whose `axis` velocity component is the flux through that face, or
/// nullopt when the flux is identically zero.
std::optional<std::size_t> face_flux_source(const SimGrid& grid, const Index3& c, int axis);

/// True if the lower face of `c` along `axis` is corrected by the pressure
/// gradient: both sides in the domain, neither SOLID nor INLET, one side liquid.
bool face_is_free(const SimGrid& grid, const Index3& c, int axis);

/// Divergence on liquid cells, zero on every other cell.
std::vector<double> divergence(const SimGrid& grid);
std::vector<double> divergence(const SimGrid& grid, const std::vector<Vec3>& velocity);

/// Max |div| over liquid cells.
double max_abs_divergence(const SimGrid& grid, const std::vector<double>& div);

struct InletOutletValues {
    Vec3 v_in = Vec3::Zero();
    double v_tilde_in = 0.0;
    Vec3 v_out = Vec3::Zero();
    double fluctuation_omega = 1.0;
    /// Unit direction of the inlet fluctuation, normally the inlet plane's inward normal.
    Vec3 fluctuation_direction = Vec3::UnitX();
};

double inlet_fluctuation(double v_tilde_in, double omega, int step_index);

/// Wall reflection at liquid cells touching SOLID (normal scaled by -bounce,
/// tangential by 1-damp, only when moving into the wall), prescribed inlet
/// and outlet velocities, and zero velocity in SOLID cells. Liquid cells
/// then drop their closed-face components (no flow through walls).
SimGrid apply_boundary_conditions(SimGrid grid, const BoundaryCoefficients& coeffs, const InletOutletValues& io,
                                  int step_index);

/// Reflection of one liquid cell's velocity against each SOLID face neighbor,
/// in kFaceOffsets order. Shared with the reverse pass.
Vec3 reflect_at_walls(const SimGrid& grid, std::size_t idx, Vec3 v, const BoundaryCoefficients& coeffs);

/// Zeroes the components of `v` that are fluxes through closed faces: the
/// lower face along an axis whose neighbor is SOLID or outside the grid.
Vec3 zero_closed_face_components(const SimGrid& grid, std::size_t idx, Vec3 v);

}  // namespace fluidrecon
