#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fluidrecon/diff_opt.hpp"
#include "fluidrecon/pressure_stencil.hpp"

namespace fluidrecon {

void LossWeights::validate() const
{
    if (!(alpha >= 0.0) || !(beta >= 0.0)) throw std::invalid_argument("loss weights alpha and beta must be >= 0");
    if (alpha == 0.0 && beta == 0.0) throw std::invalid_argument("loss weights alpha and beta cannot both be 0");
    for (double m : mask_weights) {
        if (!(m >= 0.0)) throw std::invalid_argument("loss mask weights must be >= 0");
    }
}

LossResult compute_loss(const std::vector<Vec3>& v_sim, const std::vector<Vec3>& v_gt, const LossWeights& w,
                        const std::vector<CellType>& cells)
{
    if (v_sim.size() != v_gt.size() || v_sim.size() != cells.size()) {
        throw std::invalid_argument("compute_loss: fields are not aligned");
    }
    LossResult out{0.0, std::vector<Vec3>(v_sim.size(), Vec3::Zero())};
    for (std::size_t i = 0; i < v_sim.size(); ++i) {
        const double m = w.mask(cells[i]);
        if (m == 0.0) continue;
        const Vec3 diff = v_sim[i] - v_gt[i];
        out.loss += m * w.beta * diff.squaredNorm();
        out.grad[i] += 2.0 * m * w.beta * diff;
        const double ns = v_sim[i].norm(), ng = v_gt[i].norm();
        if (w.alpha == 0.0 || ns < w.speed_floor || ng < w.speed_floor) continue;
        const Vec3 hs = v_sim[i] / ns, hg = v_gt[i] / ng;
        const double cosine = hs.dot(hg);
        out.loss += m * w.alpha * (1.0 - cosine);
        out.grad[i] -= m * w.alpha * (hg - cosine * hs) / ns;
    }
    return out;
}

namespace {

void check_finite(const std::vector<Vec3>& v, int step, const char* stage)
{
    for (const auto& x : v) {
        if (!x.allFinite()) {
            throw RolloutDiverged(step, "non-finite velocity after " + std::string(stage) + " at step " + std::to_string(step));
        }
    }
}

}  // namespace

RolloutResult rollout(const SimGrid& start, const SimParams& params, int n_steps, const StepConfig& cfg, int start_step)
{
    if (n_steps < 0 || n_steps > kMaxRolloutSteps) {
        throw std::invalid_argument("rollout: n_steps must be in [0, " + std::to_string(kMaxRolloutSteps) + "]");
    }
    RolloutResult out;
    out.tape.initial = start;
    out.tape.params = params;
    out.tape.cfg = cfg;
    out.tape.start_step = start_step;
    out.velocities.push_back(start.velocity);
    SimGrid g = start;
    for (int k = 0; k < n_steps; ++k) {
        StepTrace trace;
        g = step(g, params, cfg, start_step + k, &trace);
        check_finite(g.velocity, start_step + k, "step");
        for (double p : g.pressure) {
            if (!std::isfinite(p)) throw RolloutDiverged(start_step + k, "non-finite pressure at step " + std::to_string(start_step + k));
        }
        out.velocities.push_back(g.velocity);
        out.tape.steps.push_back(std::move(trace));
    }
    out.final_grid = std::move(g);
    return out;
}

std::vector<std::vector<Vec3>> replay(const GradientTape& tape)
{
    std::vector<std::vector<Vec3>> v{tape.initial.velocity};
    SimGrid g = tape.initial;
    for (std::size_t k = 0; k < tape.steps.size(); ++k) {
        g = step(g, tape.params, tape.cfg, tape.start_step + static_cast<int>(k));
        v.push_back(g.velocity);
    }
    return v;
}

namespace {

using detail::NeighborKind;
using detail::NeighborRef;

/// Adjoint of apply_boundary_conditions: maps d/d(output) to d/d(input) and
/// accumulates parameter gradients.
std::vector<Vec3> boundary_adjoint(const SimGrid& geo, const std::vector<Vec3>& v_before, const std::vector<Vec3>& lambda,
                                   const SimParams& params, const StepConfig& cfg, int step_index, SimParams& grad)
{
    std::vector<Vec3> out(geo.size(), Vec3::Zero());
    const double fluct = std::sin(cfg.fluctuation_omega * static_cast<double>(step_index));
    for (std::size_t x = 0; x < geo.size(); ++x) {
        const Vec3& l = lambda[x];
        switch (geo.cells[x]) {
            case CellType::Solid: break;
            case CellType::Inlet:
                grad.v_in += l;
                grad.v_tilde_in += fluct * cfg.fluctuation_direction.dot(l);
                break;
            case CellType::Outlet: grad.v_out += l; break;
            case CellType::Empty: out[x] = l; break;
            case CellType::Fluid:
            case CellType::Surface: {
                // Replay the sequential wall reflections, then run them backwards.
                struct Op {
                    Vec3 n;
                    Vec3 v;
                };
                Op ops[6];
                int count = 0;
                Vec3 v = v_before[x];
                for (const auto& o : kFaceOffsets) {
                    auto nb = geo.neighbor(x, o);
                    if (!nb || geo.cells[*nb] != CellType::Solid) continue;
                    const Vec3 n(o.i, o.j, o.k);
                    const double vn = v.dot(n);
                    if (vn <= 0.0) continue;
                    ops[count++] = {n, v};
                    v = (1.0 - params.damp) * (v - vn * n) - params.bounce * vn * n;
                }
                Vec3 lv = zero_closed_face_components(geo, x, l);
                for (int i = count - 1; i >= 0; --i) {
                    const Vec3& n = ops[i].n;
                    const double vn = ops[i].v.dot(n);
                    const Vec3 vt = ops[i].v - vn * n;
                    grad.damp -= lv.dot(vt);
                    grad.bounce -= vn * lv.dot(n);
                    const double ln = lv.dot(n);
                    lv = (1.0 - params.damp) * (lv - ln * n) - params.bounce * ln * n;
                }
                out[x] = lv;
                break;
            }
        }
    }
    return out;
}

/// Trilinear weights and their position derivatives at the 8 corners.
struct TrilinearStencil {
    std::size_t index[8];
    double w[8];
    Vec3 dw[8];
};

TrilinearStencil trilinear(const SimGrid& geo, const Vec3& x)
{
    const auto& dims = geo.dims();
    int base[3];
    double frac[3], dfrac[3];
    for (int a = 0; a < 3; ++a) {
        const double raw = (x[a] - geo.origin()[a]) / geo.dx() - 0.5;
        const double s = std::clamp(raw, 0.0, dims[a] - 1.0);
        if (dims[a] == 1) {
            base[a] = 0;
            frac[a] = 0.0;
            dfrac[a] = 0.0;
            continue;
        }
        base[a] = std::min(static_cast<int>(std::floor(s)), dims[a] - 2);
        frac[a] = s - base[a];
        dfrac[a] = (raw > 0.0 && raw < dims[a] - 1.0) ? 1.0 / geo.dx() : 0.0;
    }
    TrilinearStencil st;
    int n = 0;
    for (int dk = 0; dk < 2; ++dk) {
        for (int dj = 0; dj < 2; ++dj) {
            for (int di = 0; di < 2; ++di) {
                const int d[3] = {di, dj, dk};
                double f[3], df[3];
                for (int a = 0; a < 3; ++a) {
                    f[a] = d[a] ? frac[a] : 1.0 - frac[a];
                    df[a] = d[a] ? dfrac[a] : -dfrac[a];
                }
                const int ii = std::min(base[0] + di, dims[0] - 1);
                const int jj = std::min(base[1] + dj, dims[1] - 1);
                const int kk = std::min(base[2] + dk, dims[2] - 1);
                st.index[n] = geo.index(ii, jj, kk);
                st.w[n] = f[0] * f[1] * f[2];
                st.dw[n] = Vec3(df[0] * f[1] * f[2], f[0] * df[1] * f[2], f[0] * f[1] * df[2]);
                ++n;
            }
        }
    }
    return st;
}

std::vector<Vec3> advection_adjoint_exact(const SimGrid& geo, const std::vector<Vec3>& src, const std::vector<Vec3>& lambda,
                                          double dt, double& grad_dt)
{
    std::vector<Vec3> out(geo.size(), Vec3::Zero());
    for (std::size_t x = 0; x < geo.size(); ++x) {
        if (!is_liquid(geo.cells[x])) {
            out[x] += lambda[x];
            continue;
        }
        const Vec3 departure = geo.cell_center(x) - src[x] * dt;
        const TrilinearStencil st = trilinear(geo, departure);
        Mat3 J = Mat3::Zero();  // d sample / d position
        for (int c = 0; c < 8; ++c) {
            out[st.index[c]] += st.w[c] * lambda[x];
            J += src[st.index[c]] * st.dw[c].transpose();
        }
        const Vec3 jt = J.transpose() * lambda[x];
        out[x] -= dt * jt;
        grad_dt -= jt.dot(src[x]);
    }
    return out;
}

/// Upwind one-sided derivative of `field` along `axis` at x, biased against
/// velocity component `vel`.
Vec3 upwind_derivative(const SimGrid& geo, const std::vector<Vec3>& field, std::size_t x, int axis, double vel,
                       std::optional<std::size_t>* used)
{
    const int sign = vel > 0.0 ? -1 : 1;
    auto nb = geo.neighbor(x, axis_offset(axis, sign));
    *used = nb;
    if (!nb) return Vec3::Zero();
    return sign < 0 ? Vec3((field[x] - field[*nb]) / geo.dx()) : Vec3((field[*nb] - field[x]) / geo.dx());
}

std::vector<Vec3> advection_adjoint_upwind(const SimGrid& geo, const std::vector<Vec3>& v, const std::vector<Vec3>& lambda,
                                           double dt, double& grad_dt)
{
    std::vector<Vec3> out(geo.size(), Vec3::Zero());
    const double inv_dx = 1.0 / geo.dx();
    for (std::size_t x = 0; x < geo.size(); ++x) {
        out[x] += lambda[x];
        if (!is_liquid(geo.cells[x])) continue;
        const Vec3& l = lambda[x];
        Vec3 convective = Vec3::Zero();
        for (int a = 0; a < 3; ++a) {
            std::optional<std::size_t> nb;
            const Vec3 dv = upwind_derivative(geo, v, x, a, v[x][a], &nb);
            convective += v[x][a] * dv;
            // (delta v . grad) v
            out[x][a] -= dt * l.dot(dv);
            // (v . grad_upwind) delta v
            if (nb) {
                const double c = dt * v[x][a] * inv_dx;
                if (v[x][a] > 0.0) {
                    out[x] -= c * l;
                    out[*nb] += c * l;
                } else {
                    out[x] += c * l;
                    out[*nb] -= c * l;
                }
            }
        }
        grad_dt -= l.dot(convective);
    }
    return out;
}

/// Applies the transpose of the p -> p' part of `kernel`.
void stencil_transpose(const SimGrid& geo, const std::vector<NeighborRef>& table, const PressureKernel& kernel,
                       const std::vector<double>& mu, std::vector<double>& out)
{
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t x = 0; x < geo.size(); ++x) {
        if (!is_liquid(geo.cells[x]) || mu[x] == 0.0) continue;
        for (int o = 0; o < 27; ++o) {
            const double w = kernel.stencil[o];
            if (w == 0.0) continue;
            const auto& r = table[27 * x + o];
            if (r.kind != NeighborKind::Zero) out[r.index] += w * mu[x];
        }
    }
}

void divergence_transpose(const SimGrid& geo, const std::vector<double>& lambda_div, std::vector<Vec3>& out)
{
    const double inv_dx = 1.0 / geo.dx();
    for (std::size_t x = 0; x < geo.size(); ++x) {
        if (!is_liquid(geo.cells[x]) || lambda_div[x] == 0.0) continue;
        const Index3 c = geo.coord(x);
        for (int a = 0; a < 3; ++a) {
            const Index3 up{c.i + (a == 0), c.j + (a == 1), c.k + (a == 2)};
            if (auto s = face_flux_source(geo, up, a)) out[*s][a] += lambda_div[x] * inv_dx;
            if (auto s = face_flux_source(geo, c, a)) out[*s][a] -= lambda_div[x] * inv_dx;
        }
    }
}

}  // namespace

BackwardResult backward(const GradientTape& tape, const std::vector<std::vector<Vec3>>& loss_grads,
                        const BackwardOptions& opts, const std::vector<double>* grad_p_final)
{
    const std::size_t n = tape.steps.size();
    if (loss_grads.size() != n) throw std::invalid_argument("backward: need one loss gradient per recorded step");
    const SimGrid& geo = tape.initial;
    const std::size_t N = geo.size();
    for (const auto& lg : loss_grads) {
        if (lg.size() != N) throw std::invalid_argument("backward: loss gradient does not match the grid");
    }
    for (const auto& t : tape.steps) {
        if (t.v_in.size() != N || t.v_out.size() != N || t.pressure.size() != N || t.v_viscous.size() != N) {
            throw std::invalid_argument("backward: incomplete tape");
        }
    }
    const SimParams& P = tape.params;
    const double dt = P.dt, rho = P.rho, nu = P.nu;

    BackwardResult res;
    std::vector<Vec3> lambda(N, Vec3::Zero());
    std::vector<double> lambda_p(N, 0.0);
    if (grad_p_final && opts.mode == GradMode::RecordedJacobi) {
        if (grad_p_final->size() != N) throw std::invalid_argument("backward: final pressure gradient size mismatch");
        lambda_p = *grad_p_final;
    }
    const auto table = detail::cube_neighbor_table(geo);
    const auto force_mask = body_force_mask(geo);
    std::vector<double> mu(N), mu_next(N);

    for (std::size_t kk = n; kk-- > 0;) {
        const StepTrace& t = tape.steps[kk];
        const int s = t.step_index;
        for (std::size_t i = 0; i < N; ++i) lambda[i] += loss_grads[kk][i];

        // Closing boundary pass.
        std::vector<Vec3> l_adv = boundary_adjoint(geo, t.v_advected, lambda, P, tape.cfg, s + 1, res.grad);

        // Convection.
        std::vector<Vec3> l_visc = opts.convection == ConvectionGradient::Exact
                                       ? advection_adjoint_exact(geo, t.v_viscous, l_adv, dt, res.grad.dt)
                                       : advection_adjoint_upwind(geo, t.v_viscous, l_adv, dt, res.grad.dt);

        // Viscosity: v' = v + dt nu L v.
        std::vector<Vec3> l_proj = l_visc;
        {
            const auto Lv = viscous_operator(geo, t.v_projected);
            double dot = 0.0;
            for (std::size_t i = 0; i < N; ++i) dot += l_visc[i].dot(Lv[i]);
            res.grad.nu += dt * dot;
            res.grad.dt += nu * dot;
            if (nu != 0.0) {
                const auto Lt = viscous_operator_transpose(geo, l_visc);
                for (std::size_t i = 0; i < N; ++i) l_proj[i] += dt * nu * Lt[i];
            }
        }

        // Gradient subtraction: v' = v - (dt/rho) G p.
        std::vector<Vec3> l_force = l_proj;
        {
            const auto Gp = pressure_gradient(geo, t.pressure);
            double dot = 0.0;
            for (std::size_t i = 0; i < N; ++i) dot += l_proj[i].dot(Gp[i]);
            res.grad.rho += dt / (rho * rho) * dot;
            res.grad.dt -= dot / rho;
            const auto Gt = pressure_gradient_transpose(geo, l_proj);
            for (std::size_t i = 0; i < N; ++i) lambda_p[i] -= dt / rho * Gt[i];
        }

        // Pressure solve p = K^m p0 + sum_k K^k s div.
        const PressureKernel& K = t.kernel;
        std::vector<double> l_div(N, 0.0);
        double grad_s = 0.0;
        for (std::size_t i = 0; i < N; ++i) mu[i] = is_liquid(geo.cells[i]) ? lambda_p[i] : 0.0;
        if (opts.mode == GradMode::RecordedJacobi) {
            for (int it = 0; it < tape.cfg.pressure_iters; ++it) {
                for (std::size_t i = 0; i < N; ++i) {
                    if (mu[i] == 0.0) continue;
                    l_div[i] += K.source_coeff * mu[i];
                    grad_s += mu[i] * t.div[i];
                }
                stencil_transpose(geo, table, K, mu, mu_next);
                for (std::size_t i = 0; i < N; ++i) mu[i] = is_liquid(geo.cells[i]) ? mu_next[i] : 0.0;
            }
            lambda_p = mu;  // flows into the warm start
        } else {
            // Adjoint of the converged system (I - K) p = s div.
            const std::vector<double> rhs = mu;
            std::vector<double> z = rhs;
            bool converged = false;
            for (int it = 0; it < opts.aux_max_iters; ++it) {
                stencil_transpose(geo, table, K, z, mu_next);
                double change = 0.0, scale = 0.0;
                for (std::size_t i = 0; i < N; ++i) {
                    const double v = is_liquid(geo.cells[i]) ? rhs[i] + mu_next[i] : 0.0;
                    change = std::max(change, std::abs(v - z[i]));
                    scale = std::max(scale, std::abs(v));
                    z[i] = v;
                }
                if (change <= opts.aux_tolerance * std::max(scale, 1e-300)) {
                    converged = true;
                    break;
                }
            }
            res.aux_converged = res.aux_converged && converged;
            for (std::size_t i = 0; i < N; ++i) {
                l_div[i] = K.source_coeff * z[i];
                grad_s += z[i] * t.div[i];
            }
            std::fill(lambda_p.begin(), lambda_p.end(), 0.0);
        }
        if (K.source_scale > 0.0) {
            // s is proportional to rho / dt.
            res.grad.rho += grad_s * K.source_coeff / rho;
            res.grad.dt -= grad_s * K.source_coeff / dt;
        }

        // Divergence.
        divergence_transpose(geo, l_div, l_force);

        // Body force: v' = v + dt g on the force mask.
        Vec3 sum = Vec3::Zero();
        for (std::size_t i = 0; i < N; ++i) {
            if (force_mask[i]) sum += l_force[i];
        }
        res.grad.g += dt * sum;
        res.grad.dt += P.g.dot(sum);

        // Opening boundary pass.
        lambda = boundary_adjoint(geo, t.v_in, l_force, P, tape.cfg, s, res.grad);
    }
    res.grad_v0 = std::move(lambda);
    res.grad_p0.assign(N, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
        if (is_liquid(geo.cells[i])) res.grad_p0[i] = lambda_p[i];
    }
    return res;
}

}  // namespace fluidrecon
