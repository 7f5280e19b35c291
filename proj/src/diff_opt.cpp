#include "fluidrecon/diff_opt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fluidrecon {

const char* param_group_name(ParamGroup g)
{
    switch (g) {
        case ParamGroup::VIn: return "v_in";
        case ParamGroup::VTildeIn: return "v_tilde_in";
        case ParamGroup::VOut: return "v_out";
        case ParamGroup::Rho: return "rho";
        case ParamGroup::Nu: return "nu";
        case ParamGroup::Bounce: return "bounce";
        case ParamGroup::Damp: return "damp";
        case ParamGroup::G: return "g";
        case ParamGroup::Dt: return "dt";
    }
    return "";
}

ParamGroup param_group_from_name(const std::string& name)
{
    for (auto g : {ParamGroup::VIn, ParamGroup::VTildeIn, ParamGroup::VOut, ParamGroup::Rho, ParamGroup::Nu,
                   ParamGroup::Bounce, ParamGroup::Damp, ParamGroup::G, ParamGroup::Dt}) {
        if (name == param_group_name(g)) return g;
    }
    throw std::invalid_argument("unknown parameter '" + name + "'");
}

std::vector<int> param_group_indices(ParamGroup g)
{
    switch (g) {
        case ParamGroup::VIn: return {0, 1, 2};
        case ParamGroup::VTildeIn: return {3};
        case ParamGroup::VOut: return {4, 5, 6};
        case ParamGroup::Rho: return {7};
        case ParamGroup::Nu: return {8};
        case ParamGroup::Bounce: return {9};
        case ParamGroup::Damp: return {10};
        case ParamGroup::G: return {11, 12, 13};
        case ParamGroup::Dt: return {14};
    }
    return {};
}

double guidance_motion(const std::vector<std::vector<Vec3>>& guidance, const std::vector<CellType>& cells)
{
    if (guidance.size() < 2) return 0.0;
    double total = 0.0;
    for (std::size_t t = 0; t + 1 < guidance.size(); ++t) {
        double change = 0.0, energy = 0.0;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (!is_liquid(cells[i])) continue;
            change += (guidance[t + 1][i] - guidance[t][i]).squaredNorm();
            energy += guidance[t][i].squaredNorm();
        }
        total += energy > 0.0 ? std::sqrt(change / energy) : (change > 0.0 ? 1.0 : 0.0);
    }
    return total / static_cast<double>(guidance.size() - 1);
}

int scheduled_rollout_length(double motion, const OptimizeConfig& cfg, std::size_t frames)
{
    const double raw = std::round(cfg.max_rollout / (1.0 + motion / cfg.motion_reference));
    int L = static_cast<int>(std::clamp(raw, static_cast<double>(cfg.min_rollout), static_cast<double>(cfg.max_rollout)));
    L = std::min(L, static_cast<int>(frames) - 1);
    return std::clamp(L, 1, kMaxRolloutSteps);
}

double cfl_dt_limit(const SimGrid& geometry, const std::vector<std::vector<Vec3>>& guidance, const SimParams& params,
                    double cfl_limit)
{
    double vmax = std::max(params.v_in.norm() + params.v_tilde_in, params.v_out.norm());
    for (const auto& frame : guidance) {
        for (const auto& v : frame) vmax = std::max(vmax, v.norm());
    }
    if (vmax == 0.0) return std::numeric_limits<double>::infinity();
    return cfl_limit * geometry.dx() / vmax;
}

WindowedLoss windowed_loss(const SimGrid& geometry, const std::vector<std::vector<Vec3>>& guidance,
                           const SimParams& params, const LossWeights& weights, const StepConfig& cfg,
                           int rollout_length, const BackwardOptions* backward_opts)
{
    const int frames = static_cast<int>(guidance.size());
    if (frames < 2) throw std::invalid_argument("windowed_loss: need at least 2 guidance frames");
    const int L = std::clamp(rollout_length, 1, std::min(frames - 1, kMaxRolloutSteps));
    const int windows = (frames - 1) / L;
    const double norm = 1.0 / static_cast<double>(windows * L);

    WindowedLoss out;
    std::vector<GradientTape> tapes;
    std::vector<std::vector<std::vector<Vec3>>> grads;
    SimGrid start = geometry;
    std::fill(start.pressure.begin(), start.pressure.end(), 0.0);
    for (int w = 0; w < windows; ++w) {
        start.velocity = guidance[static_cast<std::size_t>(w * L)];
        RolloutResult r = rollout(start, params, L, cfg, w * L);
        std::vector<std::vector<Vec3>> g;
        for (int k = 1; k <= L; ++k) {
            LossResult lr = compute_loss(r.velocities[k], guidance[static_cast<std::size_t>(w * L + k)], weights, geometry.cells);
            out.loss += norm * lr.loss;
            for (auto& v : lr.grad) v *= norm;
            g.push_back(std::move(lr.grad));
        }
        start.pressure = r.final_grid.pressure;
        if (backward_opts) {
            tapes.push_back(std::move(r.tape));
            grads.push_back(std::move(g));
        }
    }
    if (!backward_opts) return out;

    std::vector<double> grad_p;
    for (int w = windows - 1; w >= 0; --w) {
        const BackwardResult b =
            backward(tapes[w], grads[w], *backward_opts, w == windows - 1 ? nullptr : &grad_p);
        const auto gv = to_vector(b.grad);
        auto acc = to_vector(out.grad);
        for (int i = 0; i < kParamCount; ++i) acc[i] += gv[i];
        out.grad = from_vector(acc);
        grad_p = b.grad_p0;
    }
    return out;
}

OptimizeResult optimize(const SimGrid& geometry, const std::vector<std::vector<Vec3>>& guidance, const SimParams& init,
                        const LossWeights& weights, const StepConfig& cfg, const OptimizeConfig& opt)
{
    weights.validate();
    init.validate();
    cfg.validate();
    if (guidance.size() < 2) throw std::invalid_argument("optimize: need at least 2 guidance frames");
    for (const auto& f : guidance) {
        if (f.size() != geometry.size()) throw std::invalid_argument("optimize: guidance frame does not match the grid");
    }
    if (opt.iterations < 0) throw std::invalid_argument("optimize: iterations must be >= 0");
    const double dt_limit = cfl_dt_limit(geometry, guidance, init, opt.cfl_limit);
    if (init.dt > dt_limit * (1.0 + 1e-12)) {
        throw std::invalid_argument("optimize: initial dt violates the CFL bound (dt <= " + std::to_string(dt_limit) + ")");
    }

    const NormalizedParams spec = opt.normalization ? *opt.normalization : NormalizedParams::defaults(init);
    std::array<double, kParamCount> u = normalize_params(init, spec);
    std::vector<int> free;
    for (auto g : opt.free_params) {
        for (int i : param_group_indices(g)) free.push_back(i);
    }
    std::sort(free.begin(), free.end());
    free.erase(std::unique(free.begin(), free.end()), free.end());
    const bool dt_free = std::find(free.begin(), free.end(), 14) != free.end();

    OptimizeResult res;
    res.rollout_length = opt.rollout_length > 0
                             ? std::min(opt.rollout_length, static_cast<int>(guidance.size()) - 1)
                             : scheduled_rollout_length(guidance_motion(guidance, geometry.cells), opt, guidance.size());
    res.params = res.best_params = init;
    res.best_loss = std::numeric_limits<double>::infinity();

    std::array<double, kParamCount> m{}, v{};
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double lr = opt.lr;
    SimParams last_finite = init;
    for (int it = 0; it <= opt.iterations; ++it) {
        const SimParams params = denormalize_params(u, spec);
        const bool want_grad = it < opt.iterations;
        WindowedLoss wl;
        try {
            wl = windowed_loss(geometry, guidance, params, weights, cfg, res.rollout_length,
                               want_grad ? &opt.backward : nullptr);
        } catch (const RolloutDiverged& e) {
            res.failed = true;
            res.message = e.what();
            break;
        }
        const auto g_phys = to_vector(wl.grad);
        const bool finite = std::isfinite(wl.loss) &&
                            std::all_of(g_phys.begin(), g_phys.end(), [](double x) { return std::isfinite(x); });
        if (!finite) {
            res.failed = true;
            res.message = "loss diverged at iteration " + std::to_string(it);
            break;
        }
        last_finite = params;
        if (it == 0) res.initial_loss = wl.loss;
        res.loss_history.push_back(wl.loss);
        if (wl.loss < res.best_loss) {
            res.best_loss = wl.loss;
            res.best_params = params;
        }
        res.running_min.push_back(res.best_loss);
        if (!want_grad || wl.loss <= opt.target_loss) break;

        const auto jac = activation_jacobian(u, spec);
        const double c1 = 1.0 - std::pow(beta1, it + 1), c2 = 1.0 - std::pow(beta2, it + 1);
        for (int i : free) {
            const double g = g_phys[i] * jac[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            u[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
        lr *= opt.lr_decay;
        if (dt_free) {
            SimParams p = denormalize_params(u, spec);
            const double limit = cfl_dt_limit(geometry, guidance, p, opt.cfl_limit);
            if (p.dt > limit) {
                p.dt = limit;
                u[14] = normalize_params(p, spec)[14];
            }
        }
    }
    res.params = res.failed ? last_finite : res.best_params;
    return res;
}

}  // namespace fluidrecon
