#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>

#include "acceptance.hpp"
#include "fixtures.hpp"
#include "fluidrecon/apic.hpp"
#include "fluidrecon/fluid_step.hpp"
#include "fluidrecon/surface_recon.hpp"

namespace acceptance {

using namespace fluidrecon;

namespace {

std::string format(const char* fmt, double a, double b = 0.0, double c = 0.0)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, fmt, a, b, c);
    return buf;
}

double max_speed(const std::vector<Vec3>& v)
{
    double m = 0.0;
    for (const auto& x : v) m = std::max(m, x.norm());
    return m;
}

}  // namespace

Outcome divergence_projection()
{
    const auto t0 = std::chrono::steady_clock::now();
    SimGrid g = fixtures::fluid_box(16, 0.1);
    g.velocity = fixtures::random_velocity(g.size(), 2024);
    const double rho = 1000.0, dt = 0.01;
    const auto div0 = divergence(g);
    const auto p = solve_pressure_jacobi(div0, g, rho, dt, 200);
    const SimGrid out = subtract_pressure_gradient(g, p, rho, dt);
    const double before = max_abs_divergence(g, div0);
    const double after = max_abs_divergence(out, divergence(out));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double factor = before / after;
    return {factor >= 20.0 && secs < 2.0,
            format("max|div| %.4g -> %.4g, reduction x%.1f", before, after, factor) + format(", %.3f s", secs)};
}

Outcome apic_affine_exactness()
{
    const double dx = 0.1;
    SimGrid grid({16, 16, 16}, dx);
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> coef(-2.0, 2.0), pos(0.3, 1.3);
    double worst_v = 0.0, worst_c = 0.0;
    for (int trial = 0; trial < 3; ++trial) {
        Mat3 A;
        for (int i = 0; i < 9; ++i) A(i / 3, i % 3) = coef(rng);
        const Vec3 c(coef(rng), coef(rng), coef(rng));
        ParticleSet ps;
        for (int p = 0; p < 400; ++p) {
            const Vec3 x(pos(rng), pos(rng), pos(rng));
            ps.push_default(x, A * x + c, 1.0 + 0.5 * coef(rng) * coef(rng) / 4.0, dx / 4.0);
            ps.affine.back() = A;
        }
        const SimGrid g = p2g(ps, grid, true);
        const ParticleSet back = g2p(g, ps, 0.01);
        for (std::size_t p = 0; p < ps.size(); ++p) {
            worst_v = std::max(worst_v, (back.velocity[p] - ps.velocity[p]).norm() / ps.velocity[p].norm());
            worst_c = std::max(worst_c, (back.affine[p] - A).norm() / A.norm());
        }
    }
    return {worst_v <= 1e-6 && worst_c <= 1e-6, format("max relative error v %.3g, C %.3g", worst_v, worst_c)};
}

Outcome wall_profile()
{
    const double delta = 0.37, V = 2.3;
    const double at0 = fluidrecon::wall_profile(0.0, delta, V);
    const double atd = fluidrecon::wall_profile(delta, delta, V);
    const double half = fluidrecon::wall_profile(delta / 2.0, delta, V);
    bool monotone = true;
    double prev = at0;
    for (int i = 1; i <= 1000; ++i) {
        const double y = delta * i / 1000.0;
        const double v = fluidrecon::wall_profile(y, delta, V);
        monotone = monotone && v >= prev;
        prev = v;
    }
    const double half_err = std::abs(half - 0.6875 * V);
    const bool ok = at0 == 0.0 && atd == V && half_err <= 1e-12 && monotone;
    return {ok, format("profile(0)=%.17g profile(delta)/V=%.17g |profile(delta/2)-0.6875V|=%.3g", at0, atd / V, half_err) +
                    (monotone ? ", monotone" : ", NOT monotone")};
}

Outcome stability()
{
    // Pure advection of a random field at CFL ~ 2.
    SimGrid g = fixtures::fluid_box(16, 0.1);
    g.velocity = fixtures::random_velocity(g.size(), 99);
    double prev = max_speed(g.velocity);
    const double initial = prev;
    bool never_grew = true;
    for (int s = 0; s < 100; ++s) {
        g = advect_velocity(g, 0.2);
        const double m = max_speed(g.velocity);
        never_grew = never_grew && m <= prev;
        prev = m;
    }

    // Closed tank at rest under gravity, starting from the discrete hydrostatic pressure.
    const int n = 16, depth = 8;
    SimGrid tank({n, n, n}, 0.1);
    std::vector<std::uint8_t> fluid(tank.size(), 0), solid(tank.size(), 0);
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const auto idx = tank.index(i, j, k);
                if (j == 0 || i == 0 || i == n - 1 || k == 0 || k == n - 1) solid[idx] = 1;
                else if (j <= depth) fluid[idx] = 1;
            }
    tank.cells = classify_cells(tank, fluid, solid, std::nullopt, std::nullopt);
    SimParams params;
    for (std::size_t idx = 0; idx < tank.size(); ++idx) {
        if (!is_liquid(tank.cells[idx])) continue;
        const int j = tank.coord(idx).j;
        tank.pressure[idx] = -params.rho * params.g.y() * tank.dx() * (depth + 1 - j);
    }
    double drift = 0.0;
    for (int s = 0; s < 100; ++s) {
        tank = step(tank, params, StepConfig{}, s);
        for (std::size_t idx = 0; idx < tank.size(); ++idx) {
            if (is_liquid(tank.cells[idx])) drift = std::max(drift, tank.velocity[idx].norm());
        }
    }
    return {never_grew && drift < 1e-3,
            format("advection max|v| %.4g -> %.4g over 100 steps", initial, prev) +
                (never_grew ? " (never increased)" : " (INCREASED)") + format(", hydrostatic drift %.3g m/s", drift)};
}

}  // namespace acceptance
