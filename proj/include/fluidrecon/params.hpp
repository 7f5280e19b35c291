#pragma once

#include <array>
#include <string>
#include <vector>

#include "fluidrecon/grid.hpp"

namespace fluidrecon {

/// Optimizable physical parameters. Also used as the container for their
/// gradients, in which case the invariants do not apply.
struct SimParams {
    Vec3 v_in = Vec3::Zero();
    double v_tilde_in = 0.0;
    Vec3 v_out = Vec3::Zero();
    double rho = 1000.0;
    double nu = 1e-6;
    double bounce = 0.5;
    double damp = 0.5;
    Vec3 g = Vec3(0.0, -9.81, 0.0);
    double dt = 0.01;

    /// Throws std::invalid_argument naming the first violated invariant.
    void validate() const;

    static SimParams zeros();

    BoundaryCoefficients boundary() const { return {bounce, damp}; }
};

inline constexpr int kParamCount = 15;

/// Flat component names, in the order used by to_vector/from_vector.
const std::array<std::string, kParamCount>& param_names();
const std::array<std::string, kParamCount>& param_units();

std::array<double, kParamCount> to_vector(const SimParams& p);
SimParams from_vector(const std::array<double, kParamCount>& v);

enum class Activation { Exp, SigmoidScaled, Identity };

struct ParamActivation {
    Activation kind = Activation::Identity;
    double scale = 1.0;
};

/// Per-component activation map for the normalized parameter space.
struct NormalizedParams {
    std::array<ParamActivation, kParamCount> activations;

    /// exp for rho, nu, dt and a positive v_tilde_in (identity clamped at 0
    /// when it starts at 0); sigmoid for bounce, damp; identity for the signed
    /// vectors. Scales are taken from `reference`.
    static NormalizedParams defaults(const SimParams& reference);
};

std::array<double, kParamCount> normalize_params(const SimParams& p, const NormalizedParams& spec);
SimParams denormalize_params(const std::array<double, kParamCount>& u, const NormalizedParams& spec);
/// d(physical)/d(normalized) per component, evaluated at u.
std::array<double, kParamCount> activation_jacobian(const std::array<double, kParamCount>& u,
                                                    const NormalizedParams& spec);

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

}  // namespace fluidrecon
