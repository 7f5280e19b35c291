#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fluidrecon/fluid_step.hpp"
#include "fluidrecon/grid.hpp"
#include "fluidrecon/params.hpp"

namespace fluidrecon {

struct LossWeights {
    double alpha = 0.5;  // direction term
    double beta = 0.5;   // squared-difference term
    /// Indexed by CellType: EMPTY, FLUID, SURFACE, SOLID, INLET, OUTLET.
    std::array<double, 6> mask_weights{0.0, 0.5, 1.0, 0.0, 0.0, 0.0};
    double speed_floor = 1e-6;

    double mask(CellType c) const { return mask_weights[static_cast<std::size_t>(c)]; }
    /// Rejects negative weights and alpha = beta = 0.
    void validate() const;
};

struct LossResult {
    double loss = 0.0;
    std::vector<Vec3> grad;  // d loss / d v_sim
};

/// sum_cells mask * [alpha (1 - vs_hat . vg_hat) + beta |vs - vg|^2]; the
/// direction term is skipped where either speed is below the floor.
LossResult compute_loss(const std::vector<Vec3>& v_sim, const std::vector<Vec3>& v_gt, const LossWeights& weights,
                        const std::vector<CellType>& cells);

inline constexpr int kMaxRolloutSteps = 25;

/// Everything needed to replay a rollout and run it in reverse.
struct GradientTape {
    SimGrid initial;  // geometry, starting velocity and warm-start pressure
    SimParams params;
    StepConfig cfg;
    int start_step = 0;
    std::vector<StepTrace> steps;
};

struct RolloutResult {
    /// velocities[0] is the start state, velocities[k] the state after k steps.
    std::vector<std::vector<Vec3>> velocities;
    GradientTape tape;
    SimGrid final_grid;
};

/// Non-finite state during a rollout.
class RolloutDiverged : public std::runtime_error {
public:
    RolloutDiverged(int step, const std::string& what) : std::runtime_error(what), step_(step) {}
    int step() const { return step_; }

private:
    int step_;
};

/// Runs `n_steps` (0..25) fluid steps from `start`, recording the tape.
RolloutResult rollout(const SimGrid& start, const SimParams& params, int n_steps, const StepConfig& cfg,
                      int start_step = 0);

/// Re-runs the taped rollout; the result matches the recorded velocities bit for bit.
std::vector<std::vector<Vec3>> replay(const GradientTape& tape);

enum class GradMode { RecordedJacobi, AuxiliaryPoisson };
enum class ConvectionGradient { Exact, UpwindSurrogate };

struct BackwardOptions {
    GradMode mode = GradMode::RecordedJacobi;
    /// Exact differentiates the trilinear back-trace; the upwind surrogate
    /// linearizes v - dt (v . grad) v instead.
    ConvectionGradient convection = ConvectionGradient::UpwindSurrogate;
    double aux_tolerance = 1e-12;
    int aux_max_iters = 100000;
};

struct BackwardResult {
    SimParams grad = SimParams::zeros();
    std::vector<Vec3> grad_v0;       // d loss / d start velocity
    std::vector<double> grad_p0;     // d loss / d warm-start pressure (zero in auxiliary mode)
    bool aux_converged = true;
};

/// Reverse pass. `loss_grads[k]` is d loss / d velocities[k+1]; `grad_p_final`
/// (optional) is d loss / d final pressure, used when a later window starts
/// from this rollout's pressure.
BackwardResult backward(const GradientTape& tape, const std::vector<std::vector<Vec3>>& loss_grads,
                        const BackwardOptions& opts = {}, const std::vector<double>* grad_p_final = nullptr);

/// Parameter groups that optimize may update.
enum class ParamGroup { VIn, VTildeIn, VOut, Rho, Nu, Bounce, Damp, G, Dt };
const char* param_group_name(ParamGroup g);
ParamGroup param_group_from_name(const std::string& name);
/// Indices into the flat parameter vector covered by the group.
std::vector<int> param_group_indices(ParamGroup g);

struct OptimizeConfig {
    int iterations = 100;
    double lr = 1e-2;
    /// Learning rate multiplier applied after every update.
    double lr_decay = 1.0;
    /// Rollout length per window; 0 derives it from the guidance motion.
    int rollout_length = 0;
    int min_rollout = 2;
    int max_rollout = kMaxRolloutSteps;
    /// Relative per-frame change at which the derived length halves.
    double motion_reference = 0.05;
    std::vector<ParamGroup> free_params{ParamGroup::VIn, ParamGroup::VOut, ParamGroup::Rho, ParamGroup::Nu,
                                        ParamGroup::Bounce, ParamGroup::Damp, ParamGroup::G};
    BackwardOptions backward;
    std::optional<NormalizedParams> normalization;  // defaults from the initial parameters
    double cfl_limit = 1.0;
    /// Stop early once the loss falls below this value.
    double target_loss = 0.0;
};

struct OptimizeResult {
    SimParams params;       // best-loss parameters, or the last finite iterate on failure
    SimParams best_params;
    double best_loss = 0.0;
    double initial_loss = 0.0;
    std::vector<double> loss_history;
    std::vector<double> running_min;
    int rollout_length = 0;
    bool failed = false;
    std::string message;
};

/// Root-mean-square relative change between consecutive guidance frames.
double guidance_motion(const std::vector<std::vector<Vec3>>& guidance, const std::vector<CellType>& cells);
int scheduled_rollout_length(double motion, const OptimizeConfig& cfg, std::size_t frames);

/// Largest dt with max|v| dt / dx <= cfl_limit over the guidance and the
/// prescribed boundary velocities (infinity when everything is at rest).
double cfl_dt_limit(const SimGrid& geometry, const std::vector<std::vector<Vec3>>& guidance, const SimParams& params,
                    double cfl_limit);

/// Windowed multi-step loss (mean over simulated frames) and its gradient
/// with respect to the physical parameters.
struct WindowedLoss {
    double loss = 0.0;
    SimParams grad = SimParams::zeros();
};
WindowedLoss windowed_loss(const SimGrid& geometry, const std::vector<std::vector<Vec3>>& guidance,
                           const SimParams& params, const LossWeights& weights, const StepConfig& cfg,
                           int rollout_length, const BackwardOptions* backward_opts);

/// Adam on the normalized free parameters, minimizing the windowed loss
/// against `guidance` (grid velocity frames on `geometry`'s cells).
OptimizeResult optimize(const SimGrid& geometry, const std::vector<std::vector<Vec3>>& guidance, const SimParams& init,
                        const LossWeights& weights, const StepConfig& cfg, const OptimizeConfig& opt);

}  // namespace fluidrecon
