#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "fluidrecon/grid.hpp"
#include "fluidrecon/raster.hpp"

namespace fluidrecon {

using Mat4 = Eigen::Matrix4d;

/// One camera frame of screen-space observations.
///
/// Screen coordinates are T * S * [ndc_u, ndc_v, 1] (2D homogeneous), with
/// ndc = perspective divide of P * W_mat * world. Depth is camera-space z.
struct ScreenObservation {
    Raster<Vec2> flow;         // screen units per frame
    Raster<double> depth;      // camera-space z (m)
    Mask fluid_mask;
    Mask detected_mask;
    Mat4 P = Mat4::Identity();
    Mat4 W_mat = Mat4::Identity();
    Mat3 S = Mat3::Identity();
    Mat3 T = Mat3::Identity();
    double frame_dt = 1.0 / 30.0;

    void validate() const;
};

struct MainstreamSpec {
    /// Per-pixel unit direction; when absent `global_direction` is used.
    std::optional<Raster<Vec2>> direction;
    Vec2 global_direction = Vec2::UnitX();
    double neighborhood_radius = 4.0;  // pixels
    double weight_sigma = 2.0;         // pixels

    Vec2 at(int r, int c) const { return direction ? direction->at(r, c) : global_direction; }
};

/// Principal axis of the fluid-mask boundary pixels, as a unit (u, v)
/// direction. When `flow` and `detected` are given the sign is chosen to agree
/// with the mean detected flow.
Vec2 estimate_mainstream_direction(const Mask& fluid_mask, const Raster<Vec3>* flow = nullptr,
                                   const Mask* detected = nullptr);

struct InterpolationResult {
    Raster<Vec3> field;
    /// Pixels with no usable neighbor, filled with direction x median speed.
    Mask fallback;
    int fallback_count = 0;
};

/// Mainstream-guided fill of undetected fluid pixels from detected
/// neighbors within the radius. Weight per neighbor: Gaussian distance
/// weight times max(0, cosine with the mainstream), normalized.
InterpolationResult mainstream_interpolate(const Raster<Vec3>& vel, const Mask& fluid_mask, const Mask& detected,
                                           const MainstreamSpec& mainstream);

struct Projection2DResult {
    Raster<Vec2> field;
    double initial_residual = 0.0;  // max |r| over undetected fluid pixels
    double final_residual = 0.0;
    double initial_l2 = 0.0;        // ||r|| over every row touching a free pixel
    double final_l2 = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> l2_history;
};

/// 2D divergence of `vel2d` in NDC units on fluid pixels: forward differences,
/// backward at the raster edge or next to a non-fluid pixel.
Raster<double> screen_divergence(const Raster<Vec2>& vel2d, const Mask& fluid_mask);

/// Required 2D divergence -(1/z)(u dvz/du + v dvz/dv + 2 vz) with central
/// differences for the vz derivatives.
Raster<double> screen_divergence_target(const Raster<double>& vz, const Raster<double>& depth, const Mask& fluid_mask);

/// Adjusts vel2d on undetected fluid pixels to satisfy the screen-space
/// incompressibility constraint. Least squares over the free pixels solved by
/// column-scaled conjugate gradients (CGLS), so the L2 residual never
/// increases. Returns the best iterate.
Projection2DResult project_2d_constraint(const Raster<Vec2>& vel2d, const Raster<double>& vz,
                                         const Raster<double>& depth, const Mask& fluid_mask, const Mask& detected,
                                         int iters, double tol = 0.0);

/// vz = (depth1 at the flow-advected pixel - depth0) / frame_dt on fluid pixels.
Raster<double> compute_vz(const Raster<double>& depth0, const Raster<double>& depth1, const Raster<Vec2>& flow,
                          const Mask& fluid_mask, double frame_dt);

struct SurfacePoint {
    int row = 0, col = 0;
    Vec3 position;  // world
    Vec3 velocity;  // world, m/s
};

/// World position of screen point (u, v) at camera depth z.
Vec3 unproject_point(const ScreenObservation& obs, const Vec2& screen, double z);

/// Finite-displacement unprojection of every fluid pixel: (u, v, z) and
/// (u+du, v+dv, z+vz*frame_dt) are mapped to world space and differenced.
std::vector<SurfacePoint> unproject_to_3d(const Raster<Vec2>& vel2d, const Raster<double>& vz,
                                          const ScreenObservation& obs);

/// V_inf * (1.5 y/delta - 0.5 (y/delta)^3) for y <= delta, V_inf beyond.
double wall_profile(double y, double delta, double v_surface_mag);

/// Default boundary-layer thickness: 4 dx for liquids, dx/4 for gas-like media.
double default_boundary_thickness(double dx, bool liquid);

/// Distance from each cell center to the nearest SOLID face (infinity when
/// there is no SOLID cell).
std::vector<double> wall_distance(const SimGrid& grid);

/// Sets each liquid cell's speed from the wall profile along the mainstream
/// direction, using `free_stream` speed; cells in `fixed` are skipped.
void apply_wall_function(SimGrid& grid, const Vec3& mainstream_dir, double free_stream, double delta,
                         const std::vector<std::uint8_t>& fixed);

struct VolumetricProjectionResult {
    SimGrid grid;
    double initial_max = 0.0;
    double final_max = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> max_history;
};

/// Constraint-projection of interior velocities. Each constraint is the
/// divergence of a non-fixed liquid cell; free variables are velocities of
/// non-fixed liquid cells. Sweeps cells in 8-color order applying
/// dv = lambda * grad C with lambda = -C / (|grad C|^2 + epsilon).
/// epsilon < 0 selects 1e-6 * 6/dx^2.
VolumetricProjectionResult volumetric_projection(const SimGrid& grid, const std::vector<std::uint8_t>& fixed, int iters,
                                                 double epsilon = -1.0, double tol = 0.0);

}  // namespace fluidrecon
