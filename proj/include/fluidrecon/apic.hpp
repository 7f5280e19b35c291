#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "fluidrecon/grid.hpp"

namespace fluidrecon {

/// Structure-of-arrays particle state. All arrays share one length.
struct ParticleSet {
    std::vector<Vec3> position;
    std::vector<Vec3> velocity;
    std::vector<double> mass;
    std::vector<Mat3> affine;
    std::vector<Mat3> deformation;
    std::vector<Mat3> covariance;
    /// Covariance at the frame the deformation gradient is measured from.
    std::vector<Mat3> rest_covariance;
    std::vector<double> opacity;
    /// Per-particle payload carried through untouched (e.g. color coefficients).
    std::vector<std::vector<float>> features;

    std::size_t size() const { return position.size(); }
    /// Throws std::invalid_argument on length mismatch or non-positive mass.
    void validate() const;
    void reserve(std::size_t n);
    /// Appends particle `i` of `other`.
    void push_from(const ParticleSet& other, std::size_t i);
    /// Particle at rest with F = I, C = 0 and isotropic covariance r^2 I.
    void push_default(const Vec3& x, const Vec3& v, double mass, double radius);
};

/// Quadratic B-spline stencil along one axis: first node index and weights.
struct SplineStencil {
    int base = 0;
    double w[3] = {0, 0, 0};
};
SplineStencil quadratic_stencil(double x, double origin, double dx);

/// Particle-to-grid transfer. Returns the grid with its velocity replaced by
/// the mass-weighted average (zero where no particle contributes); `mass`
/// receives the grid mass when non-null.
SimGrid p2g(const ParticleSet& particles, SimGrid grid, bool include_affine, std::vector<double>* mass = nullptr);

/// Grid-to-particle transfer of v and the affine matrix C. The quadratic
/// kernel's weights are renormalized over in-domain nodes near the border.
ParticleSet g2p(const SimGrid& grid, ParticleSet particles, double dt);

/// Inlet seeding and outlet removal for advect_particles.
struct ParticleBoundary {
    const SimGrid* geometry = nullptr;
    std::optional<PlaneSpec> inlet;
    std::optional<PlaneSpec> outlet;
    Vec3 v_in = Vec3::Zero();
    int particles_per_inlet_cell = 8;
    /// Source of opacity/features for seeded particles (nearest particle);
    /// when null, the nearest current particle is used.
    const ParticleSet* feature_source = nullptr;
};

/// Forward Euler move; with a boundary, removes particles beyond the outer
/// face of the outlet layer and tops up each INLET cell to the target count.
ParticleSet advect_particles(ParticleSet particles, double dt, const ParticleBoundary* boundary = nullptr,
                             std::mt19937_64* rng = nullptr);

/// F <- (I + dt C) F, covariance <- F A0 F^T (symmetrized).
ParticleSet update_deformation(ParticleSet particles, double dt);

/// 1 where the grid mass is positive.
std::vector<std::uint8_t> occupancy_from_mass(const std::vector<double>& mass);

}  // namespace fluidrecon
