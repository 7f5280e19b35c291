#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "fluidrecon/diff_opt.hpp"
#include "fluidrecon/grid.hpp"

namespace fixtures {

using namespace fluidrecon;

/// Every cell liquid; the grid border is closed by the out-of-domain rule.
inline SimGrid fluid_box(int n, double dx = 0.1)
{
    SimGrid g({n, n, n}, dx);
    std::vector<std::uint8_t> fluid(g.size(), 1), solid(g.size(), 0);
    g.cells = classify_cells(g, fluid, solid, std::nullopt, std::nullopt);
    return g;
}

inline std::vector<Vec3> random_velocity(std::size_t n, std::uint64_t seed, double scale = 1.0)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    std::vector<Vec3> v(n);
    for (auto& x : v) x = Vec3(u(rng), u(rng), u(rng));
    return v;
}

struct Channel {
    SimGrid grid;
    PlaneSpec inlet{0, false};
    PlaneSpec outlet{0, true};
};

/// Open channel along +x: SOLID floor (j = 0) and side walls (k = 0, n-1),
/// liquid for 1 <= j <= depth, EMPTY above, inlet at x-, outlet at x+.
inline Channel channel(int n, int depth, double dx)
{
    Channel c;
    c.grid = SimGrid({n, n, n}, dx);
    std::vector<std::uint8_t> fluid(c.grid.size(), 0), solid(c.grid.size(), 0);
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const auto idx = c.grid.index(i, j, k);
                if (j == 0 || k == 0 || k == n - 1) solid[idx] = 1;
                else if (j <= depth) fluid[idx] = 1;
            }
    c.grid.cells = classify_cells(c.grid, fluid, solid, c.inlet, c.outlet);
    return c;
}

inline double rel_err(double a, double b, double floor = 1e-12)
{
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace fixtures
