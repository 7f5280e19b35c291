#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>

#include "fluidrecon/surface_recon.hpp"

namespace fluidrecon {

namespace {

/// Distance from point x to the axis-aligned box of cell c.
double distance_to_cell(const SimGrid& grid, const Vec3& x, Index3 c)
{
    const Vec3 lo = grid.origin() + grid.dx() * Vec3(c.i, c.j, c.k);
    const Vec3 hi = lo + Vec3::Constant(grid.dx());
    const Vec3 d = (lo - x).cwiseMax(x - hi).cwiseMax(Vec3::Zero());
    return d.norm();
}

}  // namespace

std::vector<double> wall_distance(const SimGrid& grid)
{
    // Dijkstra-style propagation of the nearest SOLID cell through face
    // neighbors; exact for the convex wall layouts used in practice.
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(grid.size(), inf);
    std::vector<std::size_t> site(grid.size(), grid.size());
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    for (std::size_t idx = 0; idx < grid.size(); ++idx) {
        if (grid.cells[idx] != CellType::Solid) continue;
        dist[idx] = 0.0;
        site[idx] = idx;
        queue.emplace(0.0, idx);
    }
    while (!queue.empty()) {
        const auto [d, idx] = queue.top();
        queue.pop();
        if (d > dist[idx]) continue;
        for (const auto& o : kFaceOffsets) {
            auto nb = grid.neighbor(idx, o);
            if (!nb) continue;
            const double nd = distance_to_cell(grid, grid.cell_center(*nb), grid.coord(site[idx]));
            if (nd < dist[*nb]) {
                dist[*nb] = nd;
                site[*nb] = site[idx];
                queue.emplace(nd, *nb);
            }
        }
    }
    return dist;
}

void apply_wall_function(SimGrid& grid, const Vec3& mainstream_dir, double free_stream, double delta,
                         const std::vector<std::uint8_t>& fixed)
{
    if (fixed.size() != grid.size()) throw std::invalid_argument("apply_wall_function: fixed mask size mismatch");
    const double n = mainstream_dir.norm();
    if (!(n > 0.0)) throw std::invalid_argument("apply_wall_function: mainstream direction is zero");
    const Vec3 dir = mainstream_dir / n;
    const auto dist = wall_distance(grid);
    for (std::size_t idx = 0; idx < grid.size(); ++idx) {
        if (!is_liquid(grid.cells[idx]) || fixed[idx]) continue;
        const double speed = std::isfinite(dist[idx]) ? wall_profile(dist[idx], delta, free_stream) : free_stream;
        grid.velocity[idx] = speed * dir;
    }
}

VolumetricProjectionResult volumetric_projection(const SimGrid& input, const std::vector<std::uint8_t>& fixed, int iters,
                                                 double epsilon, double tol)
{
    input.validate();
    if (fixed.size() != input.size()) throw std::invalid_argument("volumetric_projection: fixed mask size mismatch");
    const double inv_dx = 1.0 / input.dx();
    if (epsilon < 0.0) epsilon = 1e-6 * 6.0 * inv_dx * inv_dx;

    VolumetricProjectionResult out;
    out.grid = input;
    SimGrid& grid = out.grid;
    auto is_free = [&](std::size_t idx) { return is_liquid(grid.cells[idx]) && !fixed[idx]; };

    // Gradient entries of each constraint: (cell, axis, coefficient).
    struct Entry {
        std::size_t cell;
        int axis;
        double coeff;
    };
    std::array<std::vector<std::size_t>, 8> colors;
    std::vector<std::vector<Entry>> grads(grid.size());
    for (std::size_t idx = 0; idx < grid.size(); ++idx) {
        if (!is_free(idx)) continue;
        const Index3 c = grid.coord(idx);
        colors[(c.i & 1) + 2 * (c.j & 1) + 4 * (c.k & 1)].push_back(idx);
        for (int a = 0; a < 3; ++a) {
            const Index3 up{c.i + (a == 0), c.j + (a == 1), c.k + (a == 2)};
            if (auto s = face_flux_source(grid, up, a); s && is_free(*s)) grads[idx].push_back({*s, a, inv_dx});
            if (auto s = face_flux_source(grid, c, a); s && is_free(*s)) grads[idx].push_back({*s, a, -inv_dx});
        }
    }

    auto constraint = [&](std::size_t idx) {
        const Index3 c = grid.coord(idx);
        double sum = 0.0;
        for (int a = 0; a < 3; ++a) {
            const Index3 up{c.i + (a == 0), c.j + (a == 1), c.k + (a == 2)};
            sum += face_flux(grid, grid.velocity, up, a) - face_flux(grid, grid.velocity, c, a);
        }
        return sum * inv_dx;
    };
    auto max_constraint = [&] {
        double m = 0.0;
        for (const auto& color : colors) {
            for (std::size_t idx : color) m = std::max(m, std::abs(constraint(idx)));
        }
        return m;
    };

    out.initial_max = out.final_max = max_constraint();
    out.max_history.push_back(out.initial_max);
    int it = 0;
    while (it < iters && out.final_max > tol) {
        // Cells of one color share no gradient entries, so each color's
        // updates are independent of their order.
        for (const auto& color : colors) {
            for (std::size_t idx : color) {
                const double C = constraint(idx);
                if (C == 0.0) continue;
                double s = 0.0;
                for (const auto& e : grads[idx]) s += e.coeff * e.coeff;
                const double lambda = -C / (s + epsilon);
                for (const auto& e : grads[idx]) grid.velocity[e.cell][e.axis] += lambda * e.coeff;
            }
        }
        ++it;
        out.final_max = max_constraint();
        out.max_history.push_back(out.final_max);
    }
    out.iterations = it;
    out.converged = out.final_max <= tol;
    grid.divergence = divergence(grid);
    return out;
}

}  // namespace fluidrecon
