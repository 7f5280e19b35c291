#include "fluidrecon/surface_recon.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace fluidrecon {

void ScreenObservation::validate() const
{
    if (!flow.same_shape(depth) || !flow.same_shape(fluid_mask) || !flow.same_shape(detected_mask)) {
        throw std::invalid_argument("observation rasters differ in shape");
    }
    for (std::size_t i = 0; i < depth.data.size(); ++i) {
        if (fluid_mask.data[i] && !(depth.data[i] > 0.0)) throw std::invalid_argument("depth must be > 0 inside the fluid mask");
        if (detected_mask.data[i] && !fluid_mask.data[i]) throw std::invalid_argument("detected mask must lie inside the fluid mask");
    }
    if (!(frame_dt > 0.0)) throw std::invalid_argument("frame_dt must be > 0");
}

Vec2 estimate_mainstream_direction(const Mask& fluid_mask, const Raster<Vec3>* flow, const Mask* detected)
{
    auto fluid = [&](int r, int c) { return fluid_mask.in_bounds(r, c) && fluid_mask.at(r, c); };
    std::vector<Vec2> pts;
    for (int r = 0; r < fluid_mask.height; ++r) {
        for (int c = 0; c < fluid_mask.width; ++c) {
            if (!fluid(r, c)) continue;
            if (!fluid(r - 1, c) || !fluid(r + 1, c) || !fluid(r, c - 1) || !fluid(r, c + 1)) pts.emplace_back(c, r);
        }
    }
    if (pts.size() < 2) return Vec2::UnitX();
    Vec2 mean = Vec2::Zero();
    for (const auto& p : pts) mean += p;
    mean /= static_cast<double>(pts.size());
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
    Vec2 dir = es.eigenvectors().col(1).normalized();
    if (flow && detected) {
        Vec2 mean_flow = Vec2::Zero();
        for (std::size_t i = 0; i < flow->data.size(); ++i) {
            if (detected->data[i]) mean_flow += flow->data[i].head<2>();
        }
        if (mean_flow.dot(dir) < 0.0) dir = -dir;
    }
    return dir;
}

InterpolationResult mainstream_interpolate(const Raster<Vec3>& vel, const Mask& fluid_mask, const Mask& detected,
                                           const MainstreamSpec& ms)
{
    if (!vel.same_shape(fluid_mask) || !vel.same_shape(detected)) throw std::invalid_argument("raster shapes differ");
    if (ms.direction && !ms.direction->same_shape(vel)) throw std::invalid_argument("mainstream direction shape differs");

    std::vector<double> speeds;
    for (std::size_t i = 0; i < vel.data.size(); ++i) {
        if (detected.data[i] && fluid_mask.data[i]) speeds.push_back(vel.data[i].norm());
    }
    double median = 0.0;
    if (!speeds.empty()) {
        auto mid = speeds.begin() + static_cast<std::ptrdiff_t>(speeds.size() / 2);
        std::nth_element(speeds.begin(), mid, speeds.end());
        median = *mid;
    }

    InterpolationResult out{vel, Mask(vel.height, vel.width, 0), 0};
    const int R = static_cast<int>(std::ceil(ms.neighborhood_radius));
    const double r2max = ms.neighborhood_radius * ms.neighborhood_radius;
    const double inv_two_sigma2 = 1.0 / (2.0 * ms.weight_sigma * ms.weight_sigma);
    for (int r = 0; r < vel.height; ++r) {
        for (int c = 0; c < vel.width; ++c) {
            if (!fluid_mask.at(r, c) || detected.at(r, c)) continue;
            const Vec2 n2 = ms.at(r, c);
            const Vec3 n(n2.x(), n2.y(), 0.0);
            Vec3 sum = Vec3::Zero();
            double wsum = 0.0;
            for (int dr = -R; dr <= R; ++dr) {
                for (int dc = -R; dc <= R; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    const double d2 = dr * dr + dc * dc;
                    if (d2 > r2max || !vel.in_bounds(rr, cc) || !detected.at(rr, cc) || !fluid_mask.at(rr, cc)) continue;
                    const Vec3& vi = vel.at(rr, cc);
                    const double speed = vi.norm();
                    if (speed == 0.0) continue;
                    const double w = std::exp(-d2 * inv_two_sigma2) * std::max(0.0, n.dot(vi) / speed);
                    sum += w * vi;
                    wsum += w;
                }
            }
            if (wsum > 0.0) {
                out.field.at(r, c) = sum / wsum;
            } else {
                out.field.at(r, c) = n * median;
                out.fallback.at(r, c) = 1;
                ++out.fallback_count;
            }
        }
    }
    return out;
}

namespace {

/// Difference stencil along one axis: d = (f[hi] - f[lo]) / ((hi - lo) h).
/// `valid` is false when neither neighbor is fluid.
struct Diff {
    int lo = 0, hi = 0;
    bool valid = false;
};

Diff forward_diff(const Mask& fluid, int r, int c, int dr, int dc)
{
    if (fluid.in_bounds(r + dr, c + dc) && fluid.at(r + dr, c + dc)) return {0, 1, true};
    if (fluid.in_bounds(r - dr, c - dc) && fluid.at(r - dr, c - dc)) return {-1, 0, true};
    return {};
}

Diff central_diff(const Mask& fluid, int r, int c, int dr, int dc)
{
    const bool up = fluid.in_bounds(r + dr, c + dc) && fluid.at(r + dr, c + dc);
    const bool dn = fluid.in_bounds(r - dr, c - dc) && fluid.at(r - dr, c - dc);
    if (up && dn) return {-1, 1, true};
    if (up) return {0, 1, true};
    if (dn) return {-1, 0, true};
    return {};
}

}  // namespace

Raster<double> screen_divergence(const Raster<Vec2>& vel2d, const Mask& fluid)
{
    Raster<double> div(vel2d.height, vel2d.width, 0.0);
    const double du = 2.0 / vel2d.width, dv = 2.0 / vel2d.height;
    for (int r = 0; r < vel2d.height; ++r) {
        for (int c = 0; c < vel2d.width; ++c) {
            if (!fluid.at(r, c)) continue;
            double d = 0.0;
            const Diff x = forward_diff(fluid, r, c, 0, 1);
            if (x.valid) d += (vel2d.at(r, c + x.hi).x() - vel2d.at(r, c + x.lo).x()) / du;
            const Diff y = forward_diff(fluid, r, c, 1, 0);
            if (y.valid) d += (vel2d.at(r + y.hi, c).y() - vel2d.at(r + y.lo, c).y()) / dv;
            div.at(r, c) = d;
        }
    }
    return div;
}

Raster<double> screen_divergence_target(const Raster<double>& vz, const Raster<double>& depth, const Mask& fluid)
{
    Raster<double> t(vz.height, vz.width, 0.0);
    const double du = 2.0 / vz.width, dv = 2.0 / vz.height;
    for (int r = 0; r < vz.height; ++r) {
        for (int c = 0; c < vz.width; ++c) {
            if (!fluid.at(r, c)) continue;
            double dvz_du = 0.0, dvz_dv = 0.0;
            const Diff x = central_diff(fluid, r, c, 0, 1);
            if (x.valid) dvz_du = (vz.at(r, c + x.hi) - vz.at(r, c + x.lo)) / ((x.hi - x.lo) * du);
            const Diff y = central_diff(fluid, r, c, 1, 0);
            if (y.valid) dvz_dv = (vz.at(r + y.hi, c) - vz.at(r + y.lo, c)) / ((y.hi - y.lo) * dv);
            const double u = ndc_u(c, vz.width), v = ndc_v(r, vz.height);
            t.at(r, c) = -(u * dvz_du + v * dvz_dv + 2.0 * vz.at(r, c)) / depth.at(r, c);
        }
    }
    return t;
}

Projection2DResult project_2d_constraint(const Raster<Vec2>& vel2d, const Raster<double>& vz,
                                         const Raster<double>& depth, const Mask& fluid, const Mask& detected,
                                         int iters, double tol)
{
    if (!vel2d.same_shape(vz) || !vel2d.same_shape(depth) || !vel2d.same_shape(fluid) || !vel2d.same_shape(detected)) {
        throw std::invalid_argument("project_2d_constraint: raster shapes differ");
    }
    const int H = vel2d.height, W = vel2d.width;
    for (std::size_t i = 0; i < depth.data.size(); ++i) {
        if (fluid.data[i] && !(depth.data[i] > 0.0)) throw std::invalid_argument("depth must be > 0 on the fluid mask");
    }

    // Free unknowns: both components of every undetected fluid pixel.
    std::vector<int> var_of(static_cast<std::size_t>(H) * W, -1);
    int nfree = 0;
    for (std::size_t i = 0; i < var_of.size(); ++i) {
        if (fluid.data[i] && !detected.data[i]) var_of[i] = nfree++;
    }
    const Raster<double> target = screen_divergence_target(vz, depth, fluid);
    auto residual_field = [&](const Raster<Vec2>& f) {
        Raster<double> res = screen_divergence(f, fluid);
        for (std::size_t i = 0; i < res.data.size(); ++i) res.data[i] -= target.data[i];
        return res;
    };
    auto hole_max = [&](const Raster<double>& res) {
        double m = 0.0;
        for (std::size_t i = 0; i < res.data.size(); ++i) {
            if (var_of[i] >= 0) m = std::max(m, std::abs(res.data[i]));
        }
        return m;
    };

    Projection2DResult out;
    out.field = vel2d;
    Raster<double> res0 = residual_field(vel2d);
    out.initial_residual = out.final_residual = hole_max(res0);
    if (nfree == 0) {
        out.converged = true;
        return out;
    }

    // Sparse Jacobian of the residual with respect to the free unknowns.
    const double du = 2.0 / W, dv = 2.0 / H;
    std::vector<Eigen::Triplet<double>> trip;
    std::vector<int> rows;  // pixel index of each matrix row
    for (int r = 0; r < H; ++r) {
        for (int c = 0; c < W; ++c) {
            if (!fluid.at(r, c)) continue;
            const int row = static_cast<int>(rows.size());
            bool touches = false;
            auto add = [&](int rr, int cc, int comp, double coeff) {
                const int v = var_of[static_cast<std::size_t>(rr) * W + cc];
                if (v < 0) return;
                trip.emplace_back(row, 2 * v + comp, coeff);
                touches = true;
            };
            const Diff x = forward_diff(fluid, r, c, 0, 1);
            if (x.valid) {
                add(r, c + x.hi, 0, 1.0 / du);
                add(r, c + x.lo, 0, -1.0 / du);
            }
            const Diff y = forward_diff(fluid, r, c, 1, 0);
            if (y.valid) {
                add(r + y.hi, c, 1, 1.0 / dv);
                add(r + y.lo, c, 1, -1.0 / dv);
            }
            if (touches) rows.push_back(r * W + c);
        }
    }
    Eigen::SparseMatrix<double> A(static_cast<Eigen::Index>(rows.size()), 2 * nfree);
    A.setFromTriplets(trip.begin(), trip.end());
    Eigen::VectorXd colscale = Eigen::VectorXd::Ones(2 * nfree);
    for (int k = 0; k < A.outerSize(); ++k) {
        double s = 0.0;
        for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it) s += it.value() * it.value();
        if (s > 0.0) colscale[k] = 1.0 / std::sqrt(s);
    }
    const Eigen::SparseMatrix<double> As = A * colscale.asDiagonal();

    // CGLS on As*y = -res0 over the touched rows.
    Eigen::VectorXd rvec(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) rvec[static_cast<Eigen::Index>(i)] = -res0.data[rows[i]];
    Eigen::VectorXd y = Eigen::VectorXd::Zero(2 * nfree);
    Eigen::VectorXd s = As.transpose() * rvec;
    Eigen::VectorXd p = s;
    double gamma = s.squaredNorm();
    out.initial_l2 = out.final_l2 = rvec.norm();
    out.l2_history.push_back(out.initial_l2);
    Eigen::VectorXd best_y = y;
    double best_l2 = out.initial_l2;

    auto apply = [&](const Eigen::VectorXd& yy) {
        Raster<Vec2> f = vel2d;
        const Eigen::VectorXd x = colscale.cwiseProduct(yy);
        for (std::size_t i = 0; i < var_of.size(); ++i) {
            const int v = var_of[i];
            if (v >= 0) f.data[i] += Vec2(x[2 * v], x[2 * v + 1]);
        }
        return f;
    };

    int it = 0;
    for (; it < iters; ++it) {
        if (gamma <= 0.0 || best_l2 <= tol) break;
        const Eigen::VectorXd q = As * p;
        const double qq = q.squaredNorm();
        if (!(qq > 0.0)) break;
        const double alpha = gamma / qq;
        y += alpha * p;
        rvec -= alpha * q;
        s = As.transpose() * rvec;
        const double gamma_new = s.squaredNorm();
        p = s + (gamma_new / gamma) * p;
        gamma = gamma_new;
        const double l2 = rvec.norm();
        out.l2_history.push_back(l2);
        if (l2 < best_l2) {
            best_l2 = l2;
            best_y = y;
        }
    }
    out.iterations = it;
    out.field = apply(best_y);
    out.final_l2 = best_l2;
    out.final_residual = hole_max(residual_field(out.field));
    out.converged = best_l2 <= tol || gamma <= 0.0;
    return out;
}

Raster<double> compute_vz(const Raster<double>& depth0, const Raster<double>& depth1, const Raster<Vec2>& flow,
                          const Mask& fluid, double frame_dt)
{
    if (!(frame_dt > 0.0)) throw std::invalid_argument("frame_dt must be > 0");
    if (!depth0.same_shape(depth1) || !depth0.same_shape(flow) || !depth0.same_shape(fluid)) {
        throw std::invalid_argument("compute_vz: raster shapes differ");
    }
    const int H = depth0.height, W = depth0.width;
    auto sample = [&](double rr, double cc) {
        rr = std::clamp(rr, 0.0, H - 1.0);
        cc = std::clamp(cc, 0.0, W - 1.0);
        const int r0 = std::min(static_cast<int>(rr), H - 1), c0 = std::min(static_cast<int>(cc), W - 1);
        const int r1 = std::min(r0 + 1, H - 1), c1 = std::min(c0 + 1, W - 1);
        const double fr = rr - r0, fc = cc - c0;
        return (1 - fr) * ((1 - fc) * depth1.at(r0, c0) + fc * depth1.at(r0, c1)) +
               fr * ((1 - fc) * depth1.at(r1, c0) + fc * depth1.at(r1, c1));
    };
    Raster<double> vz(H, W, 0.0);
    for (int r = 0; r < H; ++r) {
        for (int c = 0; c < W; ++c) {
            if (!fluid.at(r, c)) continue;
            const Vec2& f = flow.at(r, c);
            const double z1 = sample(r + f.y() * H / 2.0, c + f.x() * W / 2.0);
            vz.at(r, c) = (z1 - depth0.at(r, c)) / frame_dt;
        }
    }
    return vz;
}

Vec3 unproject_point(const ScreenObservation& obs, const Vec2& screen, double z)
{
    const Mat3 TS = obs.T * obs.S;
    if (std::abs(TS.determinant()) < 1e-300) throw std::invalid_argument("screen transform T*S is singular");
    const Vec3 h = TS.inverse() * Vec3(screen.x(), screen.y(), 1.0);
    if (h.z() == 0.0) throw std::invalid_argument("screen point maps to infinity");
    const double u = h.x() / h.z(), v = h.y() / h.z();

    // ndc = (P cam).xy / (P cam).w with cam = (x, y, z, 1): linear in x, y.
    const Eigen::RowVector4d a = obs.P.row(0) - u * obs.P.row(3);
    const Eigen::RowVector4d b = obs.P.row(1) - v * obs.P.row(3);
    Eigen::Matrix2d M;
    M << a[0], a[1], b[0], b[1];
    const double det = M.determinant();
    if (std::abs(det) < 1e-300) throw std::invalid_argument("projection matrix is singular at this pixel");
    const Eigen::Vector2d rhs(-(a[2] * z + a[3]), -(b[2] * z + b[3]));
    const Eigen::Vector2d xy = M.inverse() * rhs;

    if (std::abs(obs.W_mat.determinant()) < 1e-300) throw std::invalid_argument("world-to-camera matrix is singular");
    const Eigen::Vector4d world = obs.W_mat.inverse() * Eigen::Vector4d(xy.x(), xy.y(), z, 1.0);
    return world.head<3>() / world[3];
}

std::vector<SurfacePoint> unproject_to_3d(const Raster<Vec2>& vel2d, const Raster<double>& vz,
                                          const ScreenObservation& obs)
{
    if (!vel2d.same_shape(obs.depth) || !vz.same_shape(obs.depth) || !obs.fluid_mask.same_shape(obs.depth)) {
        throw std::invalid_argument("unproject_to_3d: raster shapes differ");
    }
    if (!(obs.frame_dt > 0.0)) throw std::invalid_argument("frame_dt must be > 0");
    std::vector<SurfacePoint> pts;
    const int H = obs.depth.height, W = obs.depth.width;
    for (int r = 0; r < H; ++r) {
        for (int c = 0; c < W; ++c) {
            if (!obs.fluid_mask.at(r, c)) continue;
            const Vec2 s0(ndc_u(c, W), ndc_v(r, H));
            const double z0 = obs.depth.at(r, c);
            const Vec3 x0 = unproject_point(obs, s0, z0);
            const Vec3 x1 = unproject_point(obs, s0 + vel2d.at(r, c), z0 + vz.at(r, c) * obs.frame_dt);
            pts.push_back({r, c, x0, (x1 - x0) / obs.frame_dt});
        }
    }
    return pts;
}

double wall_profile(double y, double delta, double v_surface_mag)
{
    if (!(y >= 0.0)) throw std::invalid_argument("wall_profile: distance must be >= 0");
    if (!(delta > 0.0)) throw std::invalid_argument("wall_profile: delta must be > 0");
    if (y >= delta) return v_surface_mag;
    const double r = y / delta;
    return v_surface_mag * (1.5 * r - 0.5 * r * r * r);
}

double default_boundary_thickness(double dx, bool liquid) { return liquid ? 4.0 * dx : 0.25 * dx; }

}  // namespace fluidrecon
