#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fluidrecon/diff_opt.hpp"
#include "fluidrecon/pointcloud.hpp"
#include "fluidrecon/surface_recon.hpp"

namespace fluidrecon {

/// Invalid configuration value. `path` is the dotted field path, e.g.
/// "optimizer.lr".
class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::string path, const std::string& what)
        : std::invalid_argument(path + ": " + what), path_(std::move(path))
    {
    }
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

struct GridSpec {
    std::array<int, 3> dims{16, 16, 16};
    double dx = 0.1;
    Vec3 origin = Vec3::Zero();
};

struct CameraSpec {
    Mat4 P = Mat4::Identity();
    Mat4 W = Mat4::Identity();
    Mat3 S = Mat3::Identity();
    Mat3 T = Mat3::Identity();
};

struct ReconstructSettings {
    PruneOptions prune;
    double fill_threshold = 0.3;
    BatchSizeOptions batch;
    /// Mainstream in screen space; absent means estimated from the fluid mask.
    std::optional<Vec2> mainstream_screen;
    /// World mainstream used by the wall function; absent means the mean
    /// unprojected surface direction.
    std::optional<Vec3> mainstream_world;
    double neighborhood_radius = 4.0;
    double weight_sigma = 2.0;
    /// Boundary-layer thickness; absent means the liquid default of 4 dx.
    std::optional<double> boundary_layer;
    int projection_2d_iters = 500;
    double projection_2d_tol = 1e-6;
    int volumetric_iters = 200;
    double volumetric_tol = 1e-6;
};

struct SimulateSettings {
    int particles_per_inlet_cell = 8;
    double particle_mass = 1.0;
};

struct PipelineConfig {
    GridSpec grid;
    std::optional<PlaneSpec> inlet;
    std::optional<PlaneSpec> outlet;
    CameraSpec camera;
    double frame_dt = 1.0 / 30.0;
    std::uint64_t seed = 0;
    ReconstructSettings reconstruct;
    LossWeights loss;
    OptimizeConfig optimizer;
    StepConfig step;
    SimParams params;
    SimulateSettings simulate;

    /// Throws ConfigError on the first violated constraint.
    void validate() const;
};

/// Parses a JSON config document. Missing keys keep their defaults; unknown
/// keys and invalid values are ConfigError, malformed JSON a ParseError.
PipelineConfig parse_config(const std::string& text, const std::string& name = "<memory>");
PipelineConfig load_config(const std::string& path);

/// Loads `path` (or the defaults when empty) and applies `key.path=value`
/// overrides; values are JSON literals, falling back to plain strings.
PipelineConfig load_config_with_overrides(const std::string& path, const std::vector<std::string>& overrides);

/// Every setting with its default value, as a JSON document.
std::string reference_config();
std::string config_to_json(const PipelineConfig& cfg);

}  // namespace fluidrecon
