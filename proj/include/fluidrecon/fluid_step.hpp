#pragma once

#include <array>
#include <optional>
#include <vector>

#include "fluidrecon/grid.hpp"
#include "fluidrecon/params.hpp"

namespace fluidrecon {

enum class PressureSolver { Jacobi, StencilRecurrent };
enum class ViscosityScheme { Explicit };
enum class ConvectionScheme { SemiLagrangian };

/// 3x3x3 pressure update stencil plus a divergence source term:
///   p'(x) = sum_o stencil[o] * p(x+o) + source_coeff * div(x)
/// with the same boundary masking as the Jacobi solver.
struct PressureKernel {
    std::array<double, 27> stencil{};
    double source_coeff = 0.0;
    /// dx^2*rho/dt of the data the kernel was fitted on; when positive, the
    /// time stepper rescales source_coeff to the current rho and dt.
    double source_scale = 0.0;
    double final_loss = 0.0;

    static constexpr int offset_index(int di, int dj, int dk) { return (di + 1) + 3 * (dj + 1) + 9 * (dk + 1); }

    /// Face weights 1/6, everything else 0, source -dx^2 rho / (6 dt).
    static PressureKernel jacobi(double dx, double rho, double dt);

    /// Copy with source_coeff matched to dx^2*rho/dt = `scale`.
    PressureKernel rescaled(double scale) const;
};

struct StepConfig {
    int pressure_iters = 100;
    ViscosityScheme viscosity_scheme = ViscosityScheme::Explicit;
    ConvectionScheme convection_scheme = ConvectionScheme::SemiLagrangian;
    PressureSolver solver = PressureSolver::Jacobi;
    /// Required when solver == StencilRecurrent.
    std::optional<PressureKernel> kernel;
    double fluctuation_omega = 1.0;
    Vec3 fluctuation_direction = Vec3::UnitX();

    void validate() const;
};

/// Cells that receive body force: every liquid cell and every EMPTY cell
/// sharing a face with a liquid cell.
std::vector<std::uint8_t> body_force_mask(const SimGrid& grid);

SimGrid add_body_force(SimGrid grid, const Vec3& g, double dt);

/// Fixed-count Jacobi iteration of the 7-point pressure Poisson equation on
/// liquid cells: SOLID, INLET and out-of-domain neighbors are zero-gradient,
/// EMPTY and OUTLET neighbors hold p = 0. Non-liquid cells return 0.
std::vector<double> solve_pressure_jacobi(const std::vector<double>& div, const SimGrid& geometry, double rho,
                                          double dt, int iters, const std::vector<double>* initial = nullptr);

/// Recurrent application of `kernel` for `iters` steps.
std::vector<double> stencil_recurrent_pressure_solve(const std::vector<double>& div, const SimGrid& geometry,
                                                     const PressureKernel& kernel, int iters,
                                                     const std::vector<double>* initial = nullptr);

/// One recurrent step: returns p'.
std::vector<double> apply_pressure_stencil(const SimGrid& geometry, const PressureKernel& kernel,
                                           const std::vector<double>& p, const std::vector<double>& div);

/// Transpose of the p -> p' part of apply_pressure_stencil.
std::vector<double> apply_pressure_stencil_transpose(const SimGrid& geometry, const PressureKernel& kernel,
                                                     const std::vector<double>& lambda);

/// Residual field of  (sum_nb p - 6 p)/dx^2 - rho*div/dt  on liquid cells.
std::vector<double> poisson_residual(const SimGrid& geometry, const std::vector<double>& p,
                                     const std::vector<double>& div, double rho, double dt);

struct PressureSample {
    std::vector<double> div;
    std::vector<double> pressure;
};

struct KernelFitOptions {
    int iters = 4;
    int epochs = 400;
    double lr = 1e-2;
    /// Starting kernel; defaults to a uniform 1/27 stencil with the mean
    /// least-squares source coefficient.
    std::optional<PressureKernel> init;
};

/// Adam fit of stencil weights and source_coeff minimizing the mean squared
/// error between the recurrent solve (from p = 0) and the sample pressures.
PressureKernel fit_pressure_kernel(const std::vector<PressureSample>& samples, const SimGrid& geometry,
                                   const KernelFitOptions& opts);

/// Mean squared error of the recurrent solve against `samples`.
double pressure_kernel_loss(const std::vector<PressureSample>& samples, const SimGrid& geometry,
                            const PressureKernel& kernel, int iters);

/// Subtracts (dt/rho) * backward-difference pressure gradient on free faces.
SimGrid subtract_pressure_gradient(SimGrid grid, const std::vector<double>& p, double rho, double dt);

/// Backward-difference pressure gradient stored per face (zero on faces that
/// are not free).
std::vector<Vec3> pressure_gradient(const SimGrid& geometry, const std::vector<double>& p);
/// Transpose of pressure_gradient.
std::vector<double> pressure_gradient_transpose(const SimGrid& geometry, const std::vector<Vec3>& lambda);

/// Explicit strain-rate viscosity v += dt * nu * (lap v + grad div v) on
/// liquid cells. Returns false (and leaves a message on std::clog) when
/// dt exceeds dx^2/(6 nu).
SimGrid apply_viscosity(SimGrid grid, double nu, double dt, bool* stable = nullptr);

/// lap v + grad(div v) on liquid cells, zero elsewhere. Neighbors that are
/// outside the domain or not liquid take the center value.
std::vector<Vec3> viscous_operator(const SimGrid& geometry, const std::vector<Vec3>& v);
std::vector<Vec3> viscous_operator_transpose(const SimGrid& geometry, const std::vector<Vec3>& lambda);

/// Semi-Lagrangian self-advection of liquid cells with trilinear sampling
/// clamped to the domain.
SimGrid advect_velocity(SimGrid grid, double dt);

/// Trilinear sample of a cell-centered vector field at world position x,
/// clamped to the outermost cell centers.
Vec3 sample_velocity(const SimGrid& geometry, const std::vector<Vec3>& field, const Vec3& x);

/// Intermediate fields of one step, in the order they are produced.
struct StepTrace {
    int step_index = 0;
    std::vector<Vec3> v_in;          // step input
    std::vector<Vec3> v_bc;          // after the first boundary pass
    std::vector<Vec3> v_force;       // after body force
    std::vector<double> div;         // divergence of v_force
    std::vector<double> p_initial;   // warm start
    std::vector<double> pressure;    // solved pressure
    std::vector<Vec3> v_projected;   // after pressure-gradient subtraction
    std::vector<Vec3> v_viscous;     // after viscosity
    std::vector<Vec3> v_advected;    // after convection
    std::vector<Vec3> v_out;         // after the second boundary pass
    PressureKernel kernel;           // effective kernel used by the solve
};

/// BC -> body force -> divergence -> pressure -> gradient subtraction ->
/// viscosity -> convection -> BC. The grid's pressure is the warm start and
/// is replaced by the new solution.
SimGrid step(const SimGrid& grid, const SimParams& params, const StepConfig& cfg, int step_index,
             StepTrace* trace = nullptr);

/// Kernel the step uses for the given parameters (analytic Jacobi kernel, or
/// the configured kernel rescaled to dx^2 rho / dt).
PressureKernel effective_kernel(const SimGrid& geometry, const SimParams& params, const StepConfig& cfg);

InletOutletValues inlet_outlet_values(const SimParams& params, const StepConfig& cfg);

}  // namespace fluidrecon
