#include "fluidrecon/fluid_step.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

#include "fluidrecon/pressure_stencil.hpp"

namespace fluidrecon {

void StepConfig::validate() const
{
    if (pressure_iters < 1) throw std::invalid_argument("step.pressure_iters must be >= 1");
    if (solver == PressureSolver::StencilRecurrent && !kernel) {
        throw std::invalid_argument("step.solver = stencil_recurrent requires a pressure kernel");
    }
    if (kernel) {
        for (double w : kernel->stencil) {
            if (!std::isfinite(w)) throw std::invalid_argument("pressure kernel has non-finite weights");
        }
    }
}

InletOutletValues inlet_outlet_values(const SimParams& params, const StepConfig& cfg)
{
    InletOutletValues io;
    io.v_in = params.v_in;
    io.v_tilde_in = params.v_tilde_in;
    io.v_out = params.v_out;
    io.fluctuation_omega = cfg.fluctuation_omega;
    io.fluctuation_direction = cfg.fluctuation_direction;
    return io;
}

std::vector<std::uint8_t> body_force_mask(const SimGrid& grid)
{
    std::vector<std::uint8_t> mask(grid.size(), 0);
    for (std::size_t idx = 0; idx < grid.size(); ++idx) {
        const CellType t = grid.cells[idx];
        if (is_liquid(t)) {
            mask[idx] = 1;
        } else if (t == CellType::Empty) {
            for (const auto& o : kFaceOffsets) {
                auto nb = grid.neighbor(idx, o);
                if (nb && is_liquid(grid.cells[*nb])) {
                    mask[idx] = 1;
                    break;
                }
            }
        }
    }
    return mask;
}

SimGrid add_body_force(SimGrid grid, const Vec3& g, double dt)
{
    const auto mask = body_force_mask(grid);
    const Vec3 dv = g * dt;
    for (std::size_t idx = 0; idx < grid.size(); ++idx) {
        if (mask[idx]) grid.velocity[idx] += dv;
    }
    return grid;
}

std::vector<double> solve_pressure_jacobi(const std::vector<double>& div, const SimGrid& geometry, double rho,
                                          double dt, int iters, const std::vector<double>* initial)
{
    if (!(rho > 0.0)) throw std::invalid_argument("pressure solve: rho must be > 0");
    if (!(dt > 0.0)) throw std::invalid_argument("pressure solve: dt must be > 0");
    const std::size_t n = geometry.size();
    const double dx = geometry.dx();
    const double source = dx * dx * rho / dt;

    std::vector<double> p(n, 0.0);
    if (initial) {
        for (std::size_t i = 0; i < n; ++i) p[i] = is_liquid(geometry.cells[i]) ? (*initial)[i] : 0.0;
    }
    const auto neighbors = detail::face_neighbor_table(geometry);
    std::vector<double> next(n, 0.0);
    for (int it = 0; it < iters; ++it) {
        for (std::size_t x = 0; x < n; ++x) {
            if (!is_liquid(geometry.cells[x])) continue;
            double sum = 0.0;
            for (int f = 0; f < 6; ++f) {
                const auto& r = neighbors[6 * x + f];
                if (r.kind == detail::NeighborKind::Self) {
                    sum += p[x];
                } else if (r.kind == detail::NeighborKind::Cell) {
                    sum += p[r.index];
                }
            }
            next[x] = (sum - source * div[x]) / 6.0;
        }
        std::swap(p, next);
    }
    return p;
}

std::vector<double> poisson_residual(const SimGrid& geometry, const std::vector<double>& p,
                                     const std::vector<double>& div, double rho, double dt)
{
    const std::size_t n = geometry.size();
    const double dx2 = geometry.dx() * geometry.dx();
    const auto neighbors = detail::face_neighbor_table(geometry);
    std::vector<double> r(n, 0.0);
    for (std::size_t x = 0; x < n; ++x) {
        if (!is_liquid(geometry.cells[x])) continue;
        double sum = 0.0;
        for (int f = 0; f < 6; ++f) {
            const auto& nb = neighbors[6 * x + f];
            if (nb.kind == detail::NeighborKind::Self) {
                sum += p[x];
            } else if (nb.kind == detail::NeighborKind::Cell) {
                sum += p[nb.index];
            }
        }
        r[x] = (sum - 6.0 * p[x]) / dx2 - rho * div[x] / dt;
    }
    return r;
}

std::vector<Vec3> pressure_gradient(const SimGrid& geometry, const std::vector<double>& p)
{
    std::vector<Vec3> grad(geometry.size(), Vec3::Zero());
    const double inv_dx = 1.0 / geometry.dx();
    auto pv = [&](std::size_t i) { return is_liquid(geometry.cells[i]) ? p[i] : 0.0; };
    for (std::size_t b = 0; b < geometry.size(); ++b) {
        const Index3 c = geometry.coord(b);
        for (int axis = 0; axis < 3; ++axis) {
            if (!face_is_free(geometry, c, axis)) continue;
            const std::size_t a = *geometry.neighbor(b, axis_offset(axis, -1));
            grad[b][axis] = (pv(b) - pv(a)) * inv_dx;
        }
    }
    return grad;
}

std::vector<double> pressure_gradient_transpose(const SimGrid& geometry, const std::vector<Vec3>& lambda)
{
    std::vector<double> out(geometry.size(), 0.0);
    const double inv_dx = 1.0 / geometry.dx();
    for (std::size_t b = 0; b < geometry.size(); ++b) {
        const Index3 c = geometry.coord(b);
        for (int axis = 0; axis < 3; ++axis) {
            if (!face_is_free(geometry, c, axis)) continue;
            const std::size_t a = *geometry.neighbor(b, axis_offset(axis, -1));
            const double l = lambda[b][axis] * inv_dx;
            if (is_liquid(geometry.cells[b])) out[b] += l;
            if (is_liquid(geometry.cells[a])) out[a] -= l;
        }
    }
    return out;
}

SimGrid subtract_pressure_gradient(SimGrid grid, const std::vector<double>& p, double rho, double dt)
{
    if (!(rho > 0.0)) throw std::invalid_argument("pressure gradient: rho must be > 0");
    const auto grad = pressure_gradient(grid, p);
    const double scale = dt / rho;
    for (std::size_t i = 0; i < grid.size(); ++i) grid.velocity[i] -= scale * grad[i];
    return grid;
}

namespace {

/// Visits every (row, row component, source cell, source component, weight)
/// entry of the viscous operator.
template <typename Fn>
void for_each_viscous_entry(const SimGrid& geometry, Fn&& fn)
{
    const double inv_dx2 = 1.0 / (geometry.dx() * geometry.dx());
    auto resolve = [&](std::size_t x, Index3 o) {
        auto nb = geometry.neighbor(x, o);
        if (nb && is_liquid(geometry.cells[*nb])) return *nb;
        return x;
    };
    for (std::size_t x = 0; x < geometry.size(); ++x) {
        if (!is_liquid(geometry.cells[x])) continue;
        for (int a = 0; a < 3; ++a) {
            const std::size_t lo = resolve(x, axis_offset(a, -1));
            const std::size_t hi = resolve(x, axis_offset(a, 1));
            // Laplacian along axis a, applied to every component.
            for (int comp = 0; comp < 3; ++comp) {
                fn(x, comp, lo, comp, inv_dx2);
                fn(x, comp, hi, comp, inv_dx2);
                fn(x, comp, x, comp, -2.0 * inv_dx2);
            }
            // grad(div v), diagonal part: d2 v_a / dx_a^2.
            fn(x, a, lo, a, inv_dx2);
            fn(x, a, hi, a, inv_dx2);
            fn(x, a, x, a, -2.0 * inv_dx2);
            // Mixed part: d2 v_b / dx_a dx_b.
            for (int b = 0; b < 3; ++b) {
                if (b == a) continue;
                const double w = 0.25 * inv_dx2;
                for (int sa : {-1, 1}) {
                    for (int sb : {-1, 1}) {
                        Index3 o = axis_offset(a, sa);
                        const Index3 ob = axis_offset(b, sb);
                        o.i += ob.i;
                        o.j += ob.j;
                        o.k += ob.k;
                        fn(x, a, resolve(x, o), b, w * sa * sb);
                    }
                }
            }
        }
    }
}

}  // namespace

std::vector<Vec3> viscous_operator(const SimGrid& geometry, const std::vector<Vec3>& v)
{
    std::vector<Vec3> out(geometry.size(), Vec3::Zero());
    for_each_viscous_entry(geometry, [&](std::size_t row, int rc, std::size_t src, int sc, double w) {
        out[row][rc] += w * v[src][sc];
    });
    return out;
}

std::vector<Vec3> viscous_operator_transpose(const SimGrid& geometry, const std::vector<Vec3>& lambda)
{
    std::vector<Vec3> out(geometry.size(), Vec3::Zero());
    for_each_viscous_entry(geometry, [&](std::size_t row, int rc, std::size_t src, int sc, double w) {
        out[src][sc] += w * lambda[row][rc];
    });
    return out;
}

SimGrid apply_viscosity(SimGrid grid, double nu, double dt, bool* stable)
{
    const bool ok = nu <= 0.0 || dt <= grid.dx() * grid.dx() / (6.0 * nu);
    if (stable) *stable = ok;
    if (!ok) {
        std::clog << "warning: explicit viscosity unstable (dt=" << dt << " > dx^2/(6 nu)="
                  << grid.dx() * grid.dx() / (6.0 * nu) << ")\n";
    }
    if (nu == 0.0) return grid;
    const auto lv = viscous_operator(grid, grid.velocity);
    const double s = dt * nu;
    for (std::size_t i = 0; i < grid.size(); ++i) grid.velocity[i] += s * lv[i];
    return grid;
}

Vec3 sample_velocity(const SimGrid& geometry, const std::vector<Vec3>& field, const Vec3& x)
{
    const auto& dims = geometry.dims();
    int base[3];
    double frac[3];
    for (int a = 0; a < 3; ++a) {
        const double s = std::clamp((x[a] - geometry.origin()[a]) / geometry.dx() - 0.5, 0.0, dims[a] - 1.0);
        if (dims[a] == 1) {
            base[a] = 0;
            frac[a] = 0.0;
            continue;
        }
        base[a] = std::min(static_cast<int>(std::floor(s)), dims[a] - 2);
        frac[a] = s - base[a];
    }
    Vec3 out = Vec3::Zero();
    for (int dk = 0; dk < 2; ++dk) {
        const double wk = dk ? frac[2] : 1.0 - frac[2];
        if (wk == 0.0) continue;
        for (int dj = 0; dj < 2; ++dj) {
            const double wj = dj ? frac[1] : 1.0 - frac[1];
            if (wj == 0.0) continue;
            for (int di = 0; di < 2; ++di) {
                const double wi = di ? frac[0] : 1.0 - frac[0];
                if (wi == 0.0) continue;
                out += wi * wj * wk * field[geometry.index(base[0] + di, base[1] + dj, base[2] + dk)];
            }
        }
    }
    return out;
}

SimGrid advect_velocity(SimGrid grid, double dt)
{
    if (!(dt > 0.0)) throw std::invalid_argument("advection: dt must be > 0");
    const std::vector<Vec3> src = grid.velocity;
    for (std::size_t x = 0; x < grid.size(); ++x) {
        if (!is_liquid(grid.cells[x])) continue;
        const Vec3 departure = grid.cell_center(x) - src[x] * dt;
        grid.velocity[x] = sample_velocity(grid, src, departure);
    }
    return grid;
}

PressureKernel effective_kernel(const SimGrid& geometry, const SimParams& params, const StepConfig& cfg)
{
    const double scale = geometry.dx() * geometry.dx() * params.rho / params.dt;
    if (cfg.solver == PressureSolver::Jacobi || !cfg.kernel) {
        return PressureKernel::jacobi(geometry.dx(), params.rho, params.dt);
    }
    if (cfg.kernel->source_scale > 0.0) return cfg.kernel->rescaled(scale);
    return *cfg.kernel;
}

SimGrid step(const SimGrid& grid, const SimParams& params, const StepConfig& cfg, int step_index, StepTrace* trace)
{
    params.validate();
    cfg.validate();
    grid.validate();
    const auto io = inlet_outlet_values(params, cfg);
    const auto coeffs = params.boundary();

    SimGrid g = apply_boundary_conditions(grid, coeffs, io, step_index);
    if (trace) {
        trace->step_index = step_index;
        trace->v_in = grid.velocity;
        trace->v_bc = g.velocity;
    }
    g = add_body_force(std::move(g), params.g, params.dt);
    const auto div = divergence(g);
    const PressureKernel kernel = effective_kernel(g, params, cfg);
    std::vector<double> p;
    if (cfg.solver == PressureSolver::Jacobi) {
        p = solve_pressure_jacobi(div, g, params.rho, params.dt, cfg.pressure_iters, &grid.pressure);
    } else {
        p = stencil_recurrent_pressure_solve(div, g, kernel, cfg.pressure_iters, &grid.pressure);
    }
    if (trace) {
        trace->v_force = g.velocity;
        trace->div = div;
        trace->p_initial = grid.pressure;
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!is_liquid(g.cells[i])) trace->p_initial[i] = 0.0;
        }
        trace->pressure = p;
        trace->kernel = kernel;
    }
    g = subtract_pressure_gradient(std::move(g), p, params.rho, params.dt);
    if (trace) trace->v_projected = g.velocity;
    g.divergence = divergence(g);
    g = apply_viscosity(std::move(g), params.nu, params.dt);
    if (trace) trace->v_viscous = g.velocity;
    g = advect_velocity(std::move(g), params.dt);
    if (trace) trace->v_advected = g.velocity;
    g = apply_boundary_conditions(std::move(g), coeffs, io, step_index + 1);
    if (trace) trace->v_out = g.velocity;
    g.pressure = std::move(p);
    return g;
}

}  // namespace fluidrecon
