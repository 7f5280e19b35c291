#include "fluidrecon/grid.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fluidrecon {

Vec3 PlaneSpec::inward_normal() const
{
    Vec3 n = Vec3::Zero();
    n[axis] = positive ? -1.0 : 1.0;
    return n;
}

bool PlaneSpec::contains(const std::array<int, 3>& dims, Index3 c) const
{
    const int v = axis == 0 ? c.i : axis == 1 ? c.j : c.k;
    return v == (positive ? dims[axis] - 1 : 0);
}

SimGrid::SimGrid(std::array<int, 3> dims, double dx, Vec3 origin) : dims_(dims), dx_(dx), origin_(origin)
{
    for (int d : dims) {
        if (d <= 0) throw std::invalid_argument("grid dims must be positive");
    }
    if (!(dx > 0.0)) throw std::invalid_argument("grid dx must be positive");
    const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    velocity.assign(n, Vec3::Zero());
    pressure.assign(n, 0.0);
    divergence.assign(n, 0.0);
    cells.assign(n, CellType::Empty);
}

Index3 SimGrid::coord(std::size_t idx) const
{
    const auto nx = static_cast<std::size_t>(dims_[0]);
    const auto ny = static_cast<std::size_t>(dims_[1]);
    return {static_cast<int>(idx % nx), static_cast<int>((idx / nx) % ny), static_cast<int>(idx / (nx * ny))};
}

Vec3 SimGrid::cell_center(Index3 c) const
{
    return origin_ + dx_ * Vec3(c.i + 0.5, c.j + 0.5, c.k + 0.5);
}

std::optional<std::size_t> SimGrid::neighbor(std::size_t idx, Index3 offset) const
{
    const Index3 c = coord(idx);
    const Index3 n{c.i + offset.i, c.j + offset.j, c.k + offset.k};
    if (!in_bounds(n)) return std::nullopt;
    return index(n);
}

void SimGrid::validate() const
{
    const std::size_t n = static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
    if (velocity.size() != n || pressure.size() != n || divergence.size() != n || cells.size() != n) {
        throw std::invalid_argument("grid field extents do not match dims");
    }
    if (!(dx_ > 0.0)) throw std::invalid_argument("grid dx must be positive");
}

std::vector<CellType> classify_cells(const SimGrid& grid, const std::vector<std::uint8_t>& fluid_occupancy,
                                     const std::vector<std::uint8_t>& solid_occupancy,
                                     std::optional<PlaneSpec> inlet, std::optional<PlaneSpec> outlet)
{
    const std::size_t n = grid.size();
    if (fluid_occupancy.size() != n || solid_occupancy.size() != n) {
        throw std::invalid_argument("occupancy size " + std::to_string(fluid_occupancy.size()) + "/" +
                                    std::to_string(solid_occupancy.size()) + " does not match grid size " +
                                    std::to_string(n));
    }
    if (inlet && outlet && *inlet == *outlet) throw std::invalid_argument("inlet and outlet planes overlap");

    const auto& dims = grid.dims();
    std::vector<CellType> cells(n, CellType::Empty);
    for (std::size_t idx = 0; idx < n; ++idx) {
        if (solid_occupancy[idx]) {
            cells[idx] = CellType::Solid;
        } else if (fluid_occupancy[idx]) {
            const Index3 c = grid.coord(idx);
            if (inlet && inlet->contains(dims, c)) {
                cells[idx] = CellType::Inlet;
            } else if (outlet && outlet->contains(dims, c)) {
                cells[idx] = CellType::Outlet;
            } else {
                cells[idx] = CellType::Fluid;
            }
        }
    }
    std::vector<CellType> out = cells;
    for (std::size_t idx = 0; idx < n; ++idx) {
        if (cells[idx] != CellType::Fluid) continue;
        for (const auto& o : kFaceOffsets) {
            auto nb = grid.neighbor(idx, o);
            if (nb && cells[*nb] == CellType::Empty) {
                out[idx] = CellType::Surface;
                break;
            }
        }
    }
    return out;
}

namespace {

bool blocks_flux(CellType c) { return c == CellType::Solid; }

}  // namespace

std::optional<std::size_t> face_flux_source(const SimGrid& grid, const Index3& c, int axis)
{
    const Index3 o = axis_offset(axis, -1);
    const Index3 lo{c.i + o.i, c.j + o.j, c.k + o.k};
    if (!grid.in_bounds(lo) || !grid.in_bounds(c)) return std::nullopt;
    const std::size_t a = grid.index(lo);
    const std::size_t b = grid.index(c);
    if (blocks_flux(grid.cells[a]) || blocks_flux(grid.cells[b])) return std::nullopt;
    return grid.cells[a] == CellType::Inlet ? a : b;
}

double face_flux(const SimGrid& grid, const std::vector<Vec3>& velocity, const Index3& c, int axis)
{
    const auto src = face_flux_source(grid, c, axis);
    return src ? velocity[*src][axis] : 0.0;
}

bool face_is_free(const SimGrid& grid, const Index3& c, int axis)
{
    const Index3 o = axis_offset(axis, -1);
    const Index3 lo{c.i + o.i, c.j + o.j, c.k + o.k};
    if (!grid.in_bounds(lo) || !grid.in_bounds(c)) return false;
    const CellType ta = grid.cells[grid.index(lo)];
    const CellType tb = grid.cells[grid.index(c)];
    if (ta == CellType::Solid || tb == CellType::Solid || ta == CellType::Inlet || tb == CellType::Inlet) return false;
    return is_liquid(ta) || is_liquid(tb);
}

std::vector<double> divergence(const SimGrid& grid) { return divergence(grid, grid.velocity); }

std::vector<double> divergence(const SimGrid& grid, const std::vector<Vec3>& velocity)
{
    std::vector<double> div(grid.size(), 0.0);
    const double inv_dx = 1.0 / grid.dx();
    for (std::size_t idx = 0; idx < grid.size(); ++idx) {
        if (!is_liquid(grid.cells[idx])) continue;
        const Index3 c = grid.coord(idx);
        double sum = 0.0;
        for (int axis = 0; axis < 3; ++axis) {
            const Index3 up{c.i + (axis == 0), c.j + (axis == 1), c.k + (axis == 2)};
            sum += face_flux(grid, velocity, up, axis) - face_flux(grid, velocity, c, axis);
        }
        div[idx] = sum * inv_dx;
    }
    return div;
}

double max_abs_divergence(const SimGrid& grid, const std::vector<double>& div)
{
    double m = 0.0;
    for (std::size_t idx = 0; idx < grid.size(); ++idx) {
        if (is_liquid(grid.cells[idx])) m = std::max(m, std::abs(div[idx]));
    }
    return m;
}

double inlet_fluctuation(double v_tilde_in, double omega, int step_index)
{
    return v_tilde_in * std::sin(omega * static_cast<double>(step_index));
}

Vec3 reflect_at_walls(const SimGrid& grid, std::size_t idx, Vec3 v, const BoundaryCoefficients& coeffs)
{
    for (const auto& o : kFaceOffsets) {
        auto nb = grid.neighbor(idx, o);
        if (!nb || grid.cells[*nb] != CellType::Solid) continue;
        const Vec3 n(o.i, o.j, o.k);
        const double vn = v.dot(n);
        if (vn <= 0.0) continue;
        const Vec3 vt = v - vn * n;
        v = (1.0 - coeffs.damp) * vt - coeffs.bounce * vn * n;
    }
    return v;
}

Vec3 zero_closed_face_components(const SimGrid& grid, std::size_t idx, Vec3 v)
{
    for (int a = 0; a < 3; ++a) {
        auto nb = grid.neighbor(idx, axis_offset(a, -1));
        if (!nb || grid.cells[*nb] == CellType::Solid) v[a] = 0.0;
    }
    return v;
}

SimGrid apply_boundary_conditions(SimGrid grid, const BoundaryCoefficients& coeffs, const InletOutletValues& io,
                                  int step_index)
{
    const Vec3 inlet_v =
        io.v_in + inlet_fluctuation(io.v_tilde_in, io.fluctuation_omega, step_index) * io.fluctuation_direction;
    for (std::size_t idx = 0; idx < grid.size(); ++idx) {
        switch (grid.cells[idx]) {
            case CellType::Solid: grid.velocity[idx].setZero(); break;
            case CellType::Inlet: grid.velocity[idx] = inlet_v; break;
            case CellType::Outlet: grid.velocity[idx] = io.v_out; break;
            case CellType::Fluid:
            case CellType::Surface:
                grid.velocity[idx] = zero_closed_face_components(grid, idx, reflect_at_walls(grid, idx, grid.velocity[idx], coeffs));
                break;
            case CellType::Empty: break;
        }
    }
    return grid;
}

}  // namespace fluidrecon
