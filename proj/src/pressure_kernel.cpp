#include <cmath>
#include <stdexcept>

#include "fluidrecon/fluid_step.hpp"
#include "fluidrecon/pressure_stencil.hpp"

namespace fluidrecon {

namespace detail {

NeighborRef resolve_pressure_neighbor(const SimGrid& geometry, std::size_t x, Index3 offset)
{
    if (offset.i == 0 && offset.j == 0 && offset.k == 0) return {NeighborKind::Self, x};
    auto nb = geometry.neighbor(x, offset);
    if (!nb) return {NeighborKind::Self, x};
    switch (geometry.cells[*nb]) {
        case CellType::Solid:
        case CellType::Inlet: return {NeighborKind::Self, x};
        case CellType::Empty:
        case CellType::Outlet: return {NeighborKind::Zero, 0};
        case CellType::Fluid:
        case CellType::Surface: return {NeighborKind::Cell, *nb};
    }
    return {NeighborKind::Zero, 0};
}

std::vector<NeighborRef> face_neighbor_table(const SimGrid& geometry)
{
    std::vector<NeighborRef> table(6 * geometry.size());
    for (std::size_t x = 0; x < geometry.size(); ++x) {
        if (!is_liquid(geometry.cells[x])) continue;
        for (int f = 0; f < 6; ++f) table[6 * x + f] = resolve_pressure_neighbor(geometry, x, kFaceOffsets[f]);
    }
    return table;
}

std::vector<NeighborRef> cube_neighbor_table(const SimGrid& geometry)
{
    std::vector<NeighborRef> table(27 * geometry.size());
    for (std::size_t x = 0; x < geometry.size(); ++x) {
        if (!is_liquid(geometry.cells[x])) continue;
        for (int dk = -1; dk <= 1; ++dk) {
            for (int dj = -1; dj <= 1; ++dj) {
                for (int di = -1; di <= 1; ++di) {
                    table[27 * x + PressureKernel::offset_index(di, dj, dk)] =
                        resolve_pressure_neighbor(geometry, x, {di, dj, dk});
                }
            }
        }
    }
    return table;
}

}  // namespace detail

using detail::NeighborKind;
using detail::NeighborRef;

PressureKernel PressureKernel::jacobi(double dx, double rho, double dt)
{
    PressureKernel k;
    for (const auto& o : kFaceOffsets) k.stencil[offset_index(o.i, o.j, o.k)] = 1.0 / 6.0;
    k.source_scale = dx * dx * rho / dt;
    k.source_coeff = -k.source_scale / 6.0;
    return k;
}

PressureKernel PressureKernel::rescaled(double scale) const
{
    PressureKernel k = *this;
    if (source_scale > 0.0) {
        k.source_coeff = source_coeff * (scale / source_scale);
        k.source_scale = scale;
    }
    return k;
}

namespace {

inline double read(const NeighborRef& r, const std::vector<double>& p)
{
    switch (r.kind) {
        case NeighborKind::Self:
        case NeighborKind::Cell: return p[r.index];
        case NeighborKind::Zero: return 0.0;
    }
    return 0.0;
}

void stencil_step(const SimGrid& geometry, const std::vector<NeighborRef>& table, const PressureKernel& kernel,
                  const std::vector<double>& p, const std::vector<double>& div, std::vector<double>& out)
{
    for (std::size_t x = 0; x < geometry.size(); ++x) {
        if (!is_liquid(geometry.cells[x])) {
            out[x] = 0.0;
            continue;
        }
        double sum = 0.0;
        for (int o = 0; o < 27; ++o) {
            const double w = kernel.stencil[o];
            if (w != 0.0) sum += w * read(table[27 * x + o], p);
        }
        out[x] = sum + kernel.source_coeff * div[x];
    }
}

void stencil_transpose(const SimGrid& geometry, const std::vector<NeighborRef>& table, const PressureKernel& kernel,
                       const std::vector<double>& lambda, std::vector<double>& out)
{
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t x = 0; x < geometry.size(); ++x) {
        if (!is_liquid(geometry.cells[x]) || lambda[x] == 0.0) continue;
        for (int o = 0; o < 27; ++o) {
            const auto& r = table[27 * x + o];
            if (r.kind != NeighborKind::Zero) out[r.index] += kernel.stencil[o] * lambda[x];
        }
    }
}

}  // namespace

std::vector<double> apply_pressure_stencil(const SimGrid& geometry, const PressureKernel& kernel,
                                           const std::vector<double>& p, const std::vector<double>& div)
{
    const auto table = detail::cube_neighbor_table(geometry);
    std::vector<double> out(geometry.size(), 0.0);
    stencil_step(geometry, table, kernel, p, div, out);
    return out;
}

std::vector<double> apply_pressure_stencil_transpose(const SimGrid& geometry, const PressureKernel& kernel,
                                                     const std::vector<double>& lambda)
{
    const auto table = detail::cube_neighbor_table(geometry);
    std::vector<double> out(geometry.size(), 0.0);
    stencil_transpose(geometry, table, kernel, lambda, out);
    return out;
}

std::vector<double> stencil_recurrent_pressure_solve(const std::vector<double>& div, const SimGrid& geometry,
                                                     const PressureKernel& kernel, int iters,
                                                     const std::vector<double>* initial)
{
    for (double w : kernel.stencil) {
        if (!std::isfinite(w)) throw std::invalid_argument("pressure kernel has non-finite weights");
    }
    if (!std::isfinite(kernel.source_coeff)) throw std::invalid_argument("pressure kernel has non-finite source");
    if (div.size() != geometry.size()) throw std::invalid_argument("divergence field does not match grid");
    const std::size_t n = geometry.size();
    std::vector<double> p(n, 0.0);
    if (initial) {
        for (std::size_t i = 0; i < n; ++i) p[i] = is_liquid(geometry.cells[i]) ? (*initial)[i] : 0.0;
    }
    const auto table = detail::cube_neighbor_table(geometry);
    std::vector<double> next(n, 0.0);
    for (int it = 0; it < iters; ++it) {
        stencil_step(geometry, table, kernel, p, div, next);
        std::swap(p, next);
    }
    return p;
}

namespace {

struct FitState {
    const std::vector<PressureSample>& samples;
    const SimGrid& geometry;
    std::vector<NeighborRef> table;
    int iters;
    double target_energy;
};

/// Relative squared error and its gradient with respect to the 27 weights and
/// the source coefficient.
double fit_loss_and_grad(const FitState& s, const PressureKernel& kernel, std::array<double, 28>* grad)
{
    const std::size_t n = s.geometry.size();
    double loss = 0.0;
    if (grad) grad->fill(0.0);
    std::vector<std::vector<double>> iterates(s.iters + 1, std::vector<double>(n, 0.0));
    std::vector<double> mu(n), mu_next(n);
    for (const auto& sample : s.samples) {
        for (int k = 0; k < s.iters; ++k) {
            stencil_step(s.geometry, s.table, kernel, iterates[k], sample.div, iterates[k + 1]);
        }
        const auto& p = iterates[s.iters];
        for (std::size_t x = 0; x < n; ++x) {
            if (!is_liquid(s.geometry.cells[x])) {
                mu[x] = 0.0;
                continue;
            }
            const double r = p[x] - sample.pressure[x];
            loss += r * r / s.target_energy;
            mu[x] = 2.0 * r / s.target_energy;
        }
        if (!grad) continue;
        for (int k = s.iters - 1; k >= 0; --k) {
            const auto& pk = iterates[k];
            for (std::size_t x = 0; x < n; ++x) {
                if (mu[x] == 0.0) continue;
                for (int o = 0; o < 27; ++o) (*grad)[o] += mu[x] * read(s.table[27 * x + o], pk);
                (*grad)[27] += mu[x] * sample.div[x];
            }
            if (k > 0) {
                stencil_transpose(s.geometry, s.table, kernel, mu, mu_next);
                for (std::size_t x = 0; x < n; ++x) mu[x] = is_liquid(s.geometry.cells[x]) ? mu_next[x] : 0.0;
            }
        }
    }
    return loss;
}

}  // namespace

double pressure_kernel_loss(const std::vector<PressureSample>& samples, const SimGrid& geometry,
                            const PressureKernel& kernel, int iters)
{
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& sample : samples) {
        const auto p = stencil_recurrent_pressure_solve(sample.div, geometry, kernel, iters);
        for (std::size_t x = 0; x < geometry.size(); ++x) {
            if (!is_liquid(geometry.cells[x])) continue;
            const double r = p[x] - sample.pressure[x];
            total += r * r;
            ++count;
        }
    }
    return count ? total / static_cast<double>(count) : 0.0;
}

PressureKernel fit_pressure_kernel(const std::vector<PressureSample>& samples, const SimGrid& geometry,
                                   const KernelFitOptions& opts)
{
    if (samples.empty()) throw std::invalid_argument("fit_pressure_kernel: no samples");
    if (opts.iters < 1) throw std::invalid_argument("fit_pressure_kernel: iters must be >= 1");
    for (const auto& s : samples) {
        if (s.div.size() != geometry.size() || s.pressure.size() != geometry.size()) {
            throw std::invalid_argument("fit_pressure_kernel: sample does not match grid geometry");
        }
    }

    double energy = 0.0, div_p = 0.0, div_div = 0.0;
    for (const auto& s : samples) {
        for (std::size_t x = 0; x < geometry.size(); ++x) {
            if (!is_liquid(geometry.cells[x])) continue;
            energy += s.pressure[x] * s.pressure[x];
            div_p += s.div[x] * s.pressure[x];
            div_div += s.div[x] * s.div[x];
        }
    }

    PressureKernel kernel;
    if (opts.init) {
        kernel = *opts.init;
    } else {
        kernel.stencil.fill(1.0 / 27.0);
        kernel.source_coeff = div_div > 0.0 ? div_p / div_div : 0.0;
    }
    if (energy == 0.0) {
        kernel.final_loss = 0.0;
        return kernel;
    }

    FitState state{samples, geometry, detail::cube_neighbor_table(geometry), opts.iters, energy};
    // The source coefficient is optimized relative to its starting magnitude
    // so that all 28 unknowns are O(1) for Adam.
    const double source_unit = kernel.source_coeff != 0.0 ? std::abs(kernel.source_coeff) : 1.0;

    std::array<double, 28> m{}, v{}, grad{};
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-12;
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        fit_loss_and_grad(state, kernel, &grad);
        grad[27] *= source_unit;
        const double lr = opts.lr * std::pow(0.01, static_cast<double>(epoch) / std::max(1, opts.epochs));
        const double c1 = 1.0 - std::pow(beta1, epoch + 1);
        const double c2 = 1.0 - std::pow(beta2, epoch + 1);
        for (int i = 0; i < 28; ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            const double step = lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
            if (i < 27) {
                kernel.stencil[i] -= step;
            } else {
                kernel.source_coeff -= step * source_unit;
            }
        }
    }
    kernel.final_loss = pressure_kernel_loss(samples, geometry, kernel, opts.iters);
    return kernel;
}

}  // namespace fluidrecon
