#include "fluidrecon/params.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fluidrecon {

void SimParams::validate() const
{
    auto finite = [](const Vec3& v) { return v.allFinite(); };
    if (!(rho > 0.0) || !std::isfinite(rho)) throw std::invalid_argument("params.rho must be > 0");
    if (!(nu >= 0.0) || !std::isfinite(nu)) throw std::invalid_argument("params.nu must be >= 0");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("params.dt must be > 0");
    if (!(bounce >= 0.0 && bounce <= 1.0)) throw std::invalid_argument("params.bounce must be in [0,1]");
    if (!(damp >= 0.0 && damp <= 1.0)) throw std::invalid_argument("params.damp must be in [0,1]");
    if (!(v_tilde_in >= 0.0) || !std::isfinite(v_tilde_in)) throw std::invalid_argument("params.v_tilde_in must be >= 0");
    if (!finite(v_in)) throw std::invalid_argument("params.v_in must be finite");
    if (!finite(v_out)) throw std::invalid_argument("params.v_out must be finite");
    if (!finite(g)) throw std::invalid_argument("params.g must be finite");
}

SimParams SimParams::zeros()
{
    SimParams p;
    p.rho = p.nu = p.bounce = p.damp = p.dt = 0.0;
    p.g.setZero();
    return p;
}

const std::array<std::string, kParamCount>& param_names()
{
    static const std::array<std::string, kParamCount> names{
        "v_in.x", "v_in.y", "v_in.z", "v_tilde_in", "v_out.x", "v_out.y", "v_out.z", "rho",
        "nu",     "bounce", "damp",   "g.x",        "g.y",     "g.z",     "dt"};
    return names;
}

const std::array<std::string, kParamCount>& param_units()
{
    static const std::array<std::string, kParamCount> units{
        "m/s", "m/s", "m/s", "m/s", "m/s", "m/s", "m/s", "kg/m^3", "m^2/s", "1", "1", "m/s^2", "m/s^2", "m/s^2", "s"};
    return units;
}

std::array<double, kParamCount> to_vector(const SimParams& p)
{
    return {p.v_in.x(), p.v_in.y(), p.v_in.z(), p.v_tilde_in, p.v_out.x(), p.v_out.y(), p.v_out.z(), p.rho,
            p.nu,       p.bounce,   p.damp,     p.g.x(),      p.g.y(),     p.g.z(),     p.dt};
}

SimParams from_vector(const std::array<double, kParamCount>& v)
{
    SimParams p;
    p.v_in = Vec3(v[0], v[1], v[2]);
    p.v_tilde_in = v[3];
    p.v_out = Vec3(v[4], v[5], v[6]);
    p.rho = v[7];
    p.nu = v[8];
    p.bounce = v[9];
    p.damp = v[10];
    p.g = Vec3(v[11], v[12], v[13]);
    p.dt = v[14];
    return p;
}

NormalizedParams NormalizedParams::defaults(const SimParams& reference)
{
    NormalizedParams n;
    const auto ref = to_vector(reference);
    auto positive_scale = [](double v, double fallback) { return v > 0.0 ? v : fallback; };
    auto vector_scale = [](const Vec3& v) { return v.norm() > 0.0 ? v.norm() : 1.0; };
    for (int c = 0; c < 3; ++c) {
        n.activations[c] = {Activation::Identity, vector_scale(reference.v_in)};
        n.activations[4 + c] = {Activation::Identity, vector_scale(reference.v_out)};
        n.activations[11 + c] = {Activation::Identity, vector_scale(reference.g)};
    }
    // A zero fluctuation amplitude has no log; it stays linear from zero instead.
    n.activations[3] = ref[3] > 0.0 ? ParamActivation{Activation::Exp, ref[3]} : ParamActivation{Activation::Identity, 0.1};
    n.activations[7] = {Activation::Exp, positive_scale(ref[7], 1000.0)};
    n.activations[8] = {Activation::Exp, positive_scale(ref[8], 1e-6)};
    n.activations[9] = {Activation::SigmoidScaled, 1.0};
    n.activations[10] = {Activation::SigmoidScaled, 1.0};
    n.activations[14] = {Activation::Exp, positive_scale(ref[14], 0.01)};
    return n;
}

std::array<double, kParamCount> normalize_params(const SimParams& p, const NormalizedParams& spec)
{
    const auto v = to_vector(p);
    std::array<double, kParamCount> u{};
    for (int i = 0; i < kParamCount; ++i) {
        const auto& a = spec.activations[i];
        const double x = v[i] / a.scale;
        switch (a.kind) {
            case Activation::Exp:
                if (!(x > 0.0)) {
                    throw std::invalid_argument(param_names()[i] + " = " + std::to_string(v[i]) +
                                                " is outside the exp activation range (must be > 0)");
                }
                u[i] = std::log(x);
                break;
            case Activation::SigmoidScaled:
                if (!(x > 0.0 && x < 1.0)) {
                    throw std::invalid_argument(param_names()[i] + " = " + std::to_string(v[i]) +
                                                " is outside the sigmoid activation range (0, scale)");
                }
                u[i] = std::log(x / (1.0 - x));
                break;
            case Activation::Identity: u[i] = x; break;
        }
    }
    return u;
}

SimParams denormalize_params(const std::array<double, kParamCount>& u, const NormalizedParams& spec)
{
    std::array<double, kParamCount> v{};
    for (int i = 0; i < kParamCount; ++i) {
        const auto& a = spec.activations[i];
        switch (a.kind) {
            case Activation::Exp: v[i] = a.scale * std::exp(u[i]); break;
            case Activation::SigmoidScaled: v[i] = a.scale / (1.0 + std::exp(-u[i])); break;
            case Activation::Identity: v[i] = a.scale * u[i]; break;
        }
    }
    v[3] = std::max(v[3], 0.0);  // amplitude, whatever its activation
    return from_vector(v);
}

std::array<double, kParamCount> activation_jacobian(const std::array<double, kParamCount>& u,
                                                    const NormalizedParams& spec)
{
    std::array<double, kParamCount> j{};
    for (int i = 0; i < kParamCount; ++i) {
        const auto& a = spec.activations[i];
        switch (a.kind) {
            case Activation::Exp: j[i] = a.scale * std::exp(u[i]); break;
            case Activation::SigmoidScaled: {
                const double s = 1.0 / (1.0 + std::exp(-u[i]));
                j[i] = a.scale * s * (1.0 - s);
                break;
            }
            case Activation::Identity: j[i] = a.scale; break;
        }
    }
    return j;
}

const char* activation_name(Activation a)
{
    switch (a) {
        case Activation::Exp: return "exp";
        case Activation::SigmoidScaled: return "sigmoid_scaled";
        case Activation::Identity: return "identity";
    }
    return "identity";
}

Activation activation_from_name(const std::string& name)
{
    if (name == "exp") return Activation::Exp;
    if (name == "sigmoid_scaled" || name == "sigmoid") return Activation::SigmoidScaled;
    if (name == "identity") return Activation::Identity;
    throw std::invalid_argument("unknown activation '" + name + "'");
}

}  // namespace fluidrecon
