#include "fluidrecon/apic.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace fluidrecon {

void ParticleSet::validate() const
{
    const std::size_t n = position.size();
    if (velocity.size() != n || mass.size() != n || affine.size() != n || deformation.size() != n ||
        covariance.size() != n || rest_covariance.size() != n || opacity.size() != n || features.size() != n) {
        throw std::invalid_argument("ParticleSet: arrays differ in length");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!(mass[i] > 0.0)) throw std::invalid_argument("ParticleSet: particle " + std::to_string(i) + " has mass <= 0");
    }
}

void ParticleSet::reserve(std::size_t n)
{
    position.reserve(n);
    velocity.reserve(n);
    mass.reserve(n);
    affine.reserve(n);
    deformation.reserve(n);
    covariance.reserve(n);
    rest_covariance.reserve(n);
    opacity.reserve(n);
    features.reserve(n);
}

void ParticleSet::push_from(const ParticleSet& other, std::size_t i)
{
    position.push_back(other.position[i]);
    velocity.push_back(other.velocity[i]);
    mass.push_back(other.mass[i]);
    affine.push_back(other.affine[i]);
    deformation.push_back(other.deformation[i]);
    covariance.push_back(other.covariance[i]);
    rest_covariance.push_back(other.rest_covariance[i]);
    opacity.push_back(other.opacity[i]);
    features.push_back(other.features[i]);
}

void ParticleSet::push_default(const Vec3& x, const Vec3& v, double m, double radius)
{
    position.push_back(x);
    velocity.push_back(v);
    mass.push_back(m);
    affine.push_back(Mat3::Zero());
    deformation.push_back(Mat3::Identity());
    covariance.push_back(radius * radius * Mat3::Identity());
    rest_covariance.push_back(radius * radius * Mat3::Identity());
    opacity.push_back(1.0);
    features.emplace_back();
}

SplineStencil quadratic_stencil(double x, double origin, double dx)
{
    // Node i sits at s = i in cell-center coordinates.
    const double s = (x - origin) / dx - 0.5;
    SplineStencil st;
    st.base = static_cast<int>(std::floor(s - 0.5));
    const double d = s - st.base;  // in [0.5, 1.5)
    st.w[0] = 0.5 * (1.5 - d) * (1.5 - d);
    st.w[1] = 0.75 - (d - 1.0) * (d - 1.0);
    st.w[2] = 0.5 * (d - 0.5) * (d - 0.5);
    return st;
}

namespace {

void check_inside(const SimGrid& grid, const Vec3& x, std::size_t p)
{
    const double pad = 1.5 * grid.dx();
    for (int a = 0; a < 3; ++a) {
        const double lo = grid.origin()[a] - pad;
        const double hi = grid.origin()[a] + grid.dims()[a] * grid.dx() + pad;
        if (!(x[a] >= lo && x[a] <= hi)) {
            throw std::invalid_argument("particle " + std::to_string(p) + " lies outside the padded grid bounds");
        }
    }
}

template <typename Fn>
void for_each_node(const SimGrid& grid, const Vec3& x, Fn&& fn)
{
    const SplineStencil sx = quadratic_stencil(x.x(), grid.origin().x(), grid.dx());
    const SplineStencil sy = quadratic_stencil(x.y(), grid.origin().y(), grid.dx());
    const SplineStencil sz = quadratic_stencil(x.z(), grid.origin().z(), grid.dx());
    for (int c = 0; c < 3; ++c) {
        for (int b = 0; b < 3; ++b) {
            for (int a = 0; a < 3; ++a) {
                const Index3 n{sx.base + a, sy.base + b, sz.base + c};
                if (!grid.in_bounds(n)) continue;
                fn(grid.index(n), sx.w[a] * sy.w[b] * sz.w[c], grid.cell_center(n));
            }
        }
    }
}

}  // namespace

SimGrid p2g(const ParticleSet& particles, SimGrid grid, bool include_affine, std::vector<double>* mass)
{
    particles.validate();
    std::vector<double> m(grid.size(), 0.0);
    std::vector<Vec3> momentum(grid.size(), Vec3::Zero());
    // Sequential scatter: deterministic summation order.
    for (std::size_t p = 0; p < particles.size(); ++p) {
        const Vec3& xp = particles.position[p];
        check_inside(grid, xp, p);
        const double mp = particles.mass[p];
        const Vec3& vp = particles.velocity[p];
        const Mat3& C = particles.affine[p];
        for_each_node(grid, xp, [&](std::size_t idx, double w, const Vec3& xi) {
            m[idx] += w * mp;
            momentum[idx] += w * mp * (include_affine ? Vec3(vp + C * (xi - xp)) : vp);
        });
    }
    for (std::size_t i = 0; i < grid.size(); ++i) grid.velocity[i] = m[i] > 0.0 ? Vec3(momentum[i] / m[i]) : Vec3::Zero();
    if (mass) *mass = std::move(m);
    return grid;
}

ParticleSet g2p(const SimGrid& grid, ParticleSet particles, double /*dt*/)
{
    particles.validate();
    const double inv_d = 4.0 / (grid.dx() * grid.dx());
    for (std::size_t p = 0; p < particles.size(); ++p) {
        const Vec3 xp = particles.position[p];
        check_inside(grid, xp, p);
        Vec3 v = Vec3::Zero();
        Mat3 B = Mat3::Zero();
        double wsum = 0.0;
        for_each_node(grid, xp, [&](std::size_t idx, double w, const Vec3& xi) {
            v += w * grid.velocity[idx];
            B += w * grid.velocity[idx] * (xi - xp).transpose();
            wsum += w;
        });
        if (wsum > 0.0) {
            v /= wsum;
            B /= wsum;
        }
        particles.velocity[p] = v;
        particles.affine[p] = inv_d * B;
    }
    return particles;
}

ParticleSet advect_particles(ParticleSet particles, double dt, const ParticleBoundary* boundary, std::mt19937_64* rng)
{
    if (!(dt > 0.0)) throw std::invalid_argument("advect_particles: dt must be > 0");
    for (std::size_t p = 0; p < particles.size(); ++p) particles.position[p] += dt * particles.velocity[p];
    if (!boundary || !boundary->geometry) return particles;
    const SimGrid& geo = *boundary->geometry;

    if (boundary->outlet) {
        const PlaneSpec& o = *boundary->outlet;
        const double lo = geo.origin()[o.axis];
        const double hi = lo + geo.dims()[o.axis] * geo.dx();
        ParticleSet kept;
        kept.reserve(particles.size());
        for (std::size_t p = 0; p < particles.size(); ++p) {
            const double x = particles.position[p][o.axis];
            const bool past = o.positive ? x > hi : x < lo;
            if (!past) kept.push_from(particles, p);
        }
        particles = std::move(kept);
    }

    if (boundary->inlet && boundary->particles_per_inlet_cell > 0) {
        if (!rng) throw std::invalid_argument("advect_particles: inlet seeding needs a random generator");
        std::vector<int> count(geo.size(), 0);
        for (std::size_t p = 0; p < particles.size(); ++p) {
            const Vec3 s = (particles.position[p] - geo.origin()) / geo.dx();
            const Index3 c{static_cast<int>(std::floor(s.x())), static_cast<int>(std::floor(s.y())),
                           static_cast<int>(std::floor(s.z()))};
            if (geo.in_bounds(c)) ++count[geo.index(c)];
        }
        // Seeded particles are appended to `particles`, so look up features in a copy.
        ParticleSet snapshot;
        if (!boundary->feature_source) snapshot = particles;
        const ParticleSet& src = boundary->feature_source ? *boundary->feature_source : snapshot;
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const double radius = geo.dx() / 4.0;
        for (std::size_t idx = 0; idx < geo.size(); ++idx) {
            if (geo.cells[idx] != CellType::Inlet) continue;
            const Index3 c = geo.coord(idx);
            for (int n = count[idx]; n < boundary->particles_per_inlet_cell; ++n) {
                Vec3 x;
                x.x() = geo.origin().x() + (c.i + unit(*rng)) * geo.dx();
                x.y() = geo.origin().y() + (c.j + unit(*rng)) * geo.dx();
                x.z() = geo.origin().z() + (c.k + unit(*rng)) * geo.dx();
                std::size_t best = std::numeric_limits<std::size_t>::max();
                double best_d = std::numeric_limits<double>::infinity();
                for (std::size_t q = 0; q < src.size(); ++q) {
                    const double d = (src.position[q] - x).squaredNorm();
                    if (d < best_d) {
                        best_d = d;
                        best = q;
                    }
                }
                const double m = best < src.size() ? src.mass[best] : 1.0;
                particles.push_default(x, boundary->v_in, m, radius);
                if (best < src.size()) {
                    particles.opacity.back() = src.opacity[best];
                    particles.features.back() = src.features[best];
                }
            }
        }
    }
    return particles;
}

ParticleSet update_deformation(ParticleSet particles, double dt)
{
    for (std::size_t p = 0; p < particles.size(); ++p) {
        const Mat3& C = particles.affine[p];
        if (!C.allFinite()) throw std::invalid_argument("update_deformation: non-finite affine matrix at particle " + std::to_string(p));
        const Mat3 F = (Mat3::Identity() + dt * C) * particles.deformation[p];
        particles.deformation[p] = F;
        const Mat3 A = F * particles.rest_covariance[p] * F.transpose();
        particles.covariance[p] = 0.5 * (A + A.transpose());
    }
    return particles;
}

std::vector<std::uint8_t> occupancy_from_mass(const std::vector<double>& mass)
{
    std::vector<std::uint8_t> occ(mass.size(), 0);
    for (std::size_t i = 0; i < mass.size(); ++i) occ[i] = mass[i] > 0.0 ? 1 : 0;
    return occ;
}

}  // namespace fluidrecon
