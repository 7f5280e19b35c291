#include <doctest.h>

#include <random>

#include <Eigen/Geometry>

#include "fixtures.hpp"
#include "fluidrecon/surface_recon.hpp"

using namespace fluidrecon;

namespace {

Mask full_mask(int h, int w) { return Mask(h, w, 1); }

}  // namespace

TEST_CASE("screen divergence of a linear field is its trace in NDC units")
{
    const int H = 12, W = 16;
    Raster<Vec2> v(H, W);
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) v.at(r, c) = Vec2(0.3 * ndc_u(c, W) + 1.0, -0.7 * ndc_v(r, H) + 2.0);
    const auto div = screen_divergence(v, full_mask(H, W));
    for (double d : div.data) CHECK(d == doctest::Approx(0.3 - 0.7).epsilon(1e-12));
}

TEST_CASE("mainstream direction of a horizontal strip is horizontal")
{
    Mask m(20, 40, 0);
    for (int r = 8; r < 12; ++r)
        for (int c = 2; c < 38; ++c) m.at(r, c) = 1;
    const Vec2 d = estimate_mainstream_direction(m);
    CHECK(std::abs(d.x()) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(d.norm() == doctest::Approx(1.0));

    // The sign follows the detected flow.
    Raster<Vec3> flow(20, 40, Vec3(-0.2, 0.0, 0.0));
    const Vec2 s = estimate_mainstream_direction(m, &flow, &m);
    CHECK(s.x() < 0.0);
}

TEST_CASE("mainstream interpolation fills the hole and keeps detected pixels")
{
    const int H = 16, W = 16;
    Mask fluid = full_mask(H, W), detected = full_mask(H, W);
    Raster<Vec3> vel(H, W, Vec3(0.1, 0.02, 0.0));
    for (int r = 6; r < 9; ++r)
        for (int c = 6; c < 9; ++c) {
            detected.at(r, c) = 0;
            vel.at(r, c) = Vec3(9, 9, 9);
        }
    MainstreamSpec spec;
    const auto res = mainstream_interpolate(vel, fluid, detected, spec);
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) CHECK((res.field.at(r, c) - Vec3(0.1, 0.02, 0.0)).norm() < 1e-12);
    CHECK(res.fallback_count == 0);

    // An isolated undetected island falls back to direction x median speed.
    Mask lonely = full_mask(H, W);
    for (auto& x : lonely.data) x = 0;
    lonely.at(2, 2) = 1;
    Mask none(H, W, 0);
    const auto fb = mainstream_interpolate(vel, lonely, none, spec);
    CHECK(fb.fallback_count == 1);
    CHECK(fb.fallback.at(2, 2) == 1);
}

TEST_CASE("2D projection never increases the L2 residual and leaves detected pixels")
{
    const int H = 20, W = 20;
    Mask fluid = full_mask(H, W), detected = full_mask(H, W);
    Raster<Vec2> vel(H, W);
    Raster<double> vz(H, W, 0.0), depth(H, W, 1.5);
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-1, 1);
    for (std::size_t i = 0; i < vel.data.size(); ++i) vel.data[i] = Vec2(u(rng), u(rng));
    for (int r = 5; r < 12; ++r)
        for (int c = 4; c < 15; ++c) detected.at(r, c) = 0;
    const auto res = project_2d_constraint(vel, vz, depth, fluid, detected, 100);
    for (std::size_t i = 1; i < res.l2_history.size(); ++i) CHECK(res.l2_history[i] <= res.l2_history[i - 1] * (1 + 1e-12));
    CHECK(res.final_l2 <= res.initial_l2);
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c)
            if (detected.at(r, c)) CHECK(res.field.at(r, c) == vel.at(r, c));
}

TEST_CASE("vz from depth change")
{
    const int H = 6, W = 6;
    Raster<double> d0(H, W, 2.0), d1(H, W, 2.1);
    Raster<Vec2> flow(H, W, Vec2::Zero());
    const auto vz = compute_vz(d0, d1, flow, full_mask(H, W), 0.5);
    for (double v : vz.data) CHECK(v == doctest::Approx(0.2));
    CHECK_THROWS_AS(compute_vz(d0, d1, flow, full_mask(H, W), 0.0), std::invalid_argument);
}

TEST_CASE("unprojection inverts a perspective camera")
{
    ScreenObservation obs;
    obs.P << 1.5, 0, 0.1, 0,  //
        0, 2.0, -0.2, 0,       //
        0, 0, 1.01, -0.1,      //
        0, 0, 1, 0;
    Eigen::AngleAxisd rot(0.4, Vec3(1, 2, 3).normalized());
    obs.W_mat.setIdentity();
    obs.W_mat.topLeftCorner<3, 3>() = rot.toRotationMatrix();
    obs.W_mat.topRightCorner<3, 1>() = Vec3(0.2, -0.1, 3.0);
    obs.S << 2, 0, 0, 0, 2, 0, 0, 0, 1;
    obs.T << 1, 0, 0.5, 0, 1, -0.25, 0, 0, 1;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (int t = 0; t < 20; ++t) {
        const Vec3 x(u(rng), u(rng), u(rng));
        const Eigen::Vector4d cam = obs.W_mat * x.homogeneous();
        const Eigen::Vector4d clip = obs.P * cam;
        const Vec3 screen = obs.T * obs.S * Vec3(clip.x() / clip.w(), clip.y() / clip.w(), 1.0);
        const Vec3 back = unproject_point(obs, screen.head<2>() / screen.z(), cam.z());
        CHECK((back - x).norm() < 1e-12);
    }
}

TEST_CASE("unprojected velocity of a top-down camera")
{
    const int H = 8, W = 8;
    ScreenObservation obs;
    obs.W_mat << 1, 0, 0, 0, 0, 0, 1, 0, 0, -1, 0, 2, 0, 0, 0, 1;
    obs.P << 2.5, 0, 0, -1, 0, 2.5, 0, -1, 0, 0, 1, 0, 0, 0, 0, 1;
    obs.frame_dt = 0.1;
    obs.depth = Raster<double>(H, W, 1.6);
    obs.fluid_mask = full_mask(H, W);
    obs.detected_mask = full_mask(H, W);
    obs.flow = Raster<Vec2>(H, W, Vec2(0.05, 0.0));
    const Raster<double> vz(H, W, 0.1);
    const auto pts = unproject_to_3d(obs.flow, vz, obs);
    REQUIRE(pts.size() == static_cast<std::size_t>(H * W));
    for (const auto& p : pts) {
        // du = 2.5 dx per frame; camera z grows as world y falls.
        CHECK(p.velocity.isApprox(Vec3(0.05 / 2.5 / 0.1, -0.1, 0.0), 1e-12));
        CHECK(p.position.y() == doctest::Approx(0.4));
    }
}

TEST_CASE("wall distance, wall function and boundary thickness")
{
    auto ch = fixtures::channel(6, 3, 0.1);
    auto& g = ch.grid;
    const auto dist = wall_distance(g);
    CHECK(dist[g.index(2, 1, 2)] == doctest::Approx(0.05));
    CHECK(dist[g.index(2, 2, 2)] == doctest::Approx(0.15));
    CHECK(dist[g.index(2, 3, 1)] == doctest::Approx(0.05));

    std::vector<std::uint8_t> fixed(g.size(), 0);
    fixed[g.index(2, 2, 2)] = 1;
    g.velocity[g.index(2, 2, 2)] = Vec3(7, 7, 7);
    const double delta = default_boundary_thickness(0.1, true);
    CHECK(delta == doctest::Approx(0.4));
    CHECK(default_boundary_thickness(0.1, false) == doctest::Approx(0.025));
    apply_wall_function(g, Vec3(2, 0, 0), 1.0, delta, fixed);
    CHECK(g.velocity[g.index(2, 2, 2)] == Vec3(7, 7, 7));
    const auto& v = g.velocity[g.index(3, 1, 2)];
    CHECK(v.x() == doctest::Approx(wall_profile(0.05, delta, 1.0)));
    CHECK(v.y() == 0.0);
}

TEST_CASE("volumetric projection lowers divergence and keeps fixed cells")
{
    auto ch = fixtures::channel(8, 5, 0.1);
    auto& g = ch.grid;
    g.velocity = fixtures::random_velocity(g.size(), 12, 0.5);
    std::vector<std::uint8_t> fixed(g.size(), 0);
    for (std::size_t i = 0; i < g.size(); ++i) fixed[i] = g.cells[i] == CellType::Surface;
    const auto res = volumetric_projection(g, fixed, 300, -1.0, 1e-9);
    CHECK(res.final_max < 0.05 * res.initial_max);
    for (std::size_t i = 0; i < g.size(); ++i)
        if (fixed[i]) CHECK(res.grid.velocity[i] == g.velocity[i]);
}

TEST_CASE("observation validation rejects mismatched rasters")
{
    ScreenObservation obs;
    obs.flow = Raster<Vec2>(4, 4);
    obs.depth = Raster<double>(4, 5);
    obs.fluid_mask = Mask(4, 4);
    obs.detected_mask = Mask(4, 4);
    CHECK_THROWS_AS(obs.validate(), std::invalid_argument);
}

TEST_CASE("a static scene unprojects to exactly zero velocity")
{
    const int H = 6, W = 6;
    ScreenObservation obs;
    obs.W_mat << 1, 0, 0, 0, 0, 0, 1, 0, 0, -1, 0, 2, 0, 0, 0, 1;
    obs.P << 2.5, 0, 0, -1, 0, 2.5, 0, -1, 0, 0, 1, 0, 0, 0, 0, 1;
    obs.depth = Raster<double>(H, W, 1.7);
    obs.fluid_mask = full_mask(H, W);
    obs.detected_mask = full_mask(H, W);
    obs.flow = Raster<Vec2>(H, W, Vec2::Zero());
    for (const auto& p : unproject_to_3d(obs.flow, Raster<double>(H, W, 0.0), obs)) CHECK(p.velocity == Vec3::Zero());
}

TEST_CASE("wall profile is flat where it meets the free stream")
{
    const double delta = 0.3, V = 1.7, h = 1e-6;
    const double slope = (wall_profile(delta, delta, V) - wall_profile(delta - h, delta, V)) / h;
    CHECK(std::abs(slope) < 1e-4);
    CHECK(wall_profile(2 * delta, delta, V) == V);
}

TEST_CASE("volumetric projection residual strictly decreases per sweep")
{
    SimGrid g = fixtures::fluid_box(6, 0.1);
    g.velocity = fixtures::random_velocity(g.size(), 77);
    const std::vector<std::uint8_t> fixed(g.size(), 0);
    const auto res = volumetric_projection(g, fixed, 30, 1e-3, 0.0);
    REQUIRE(res.max_history.size() >= 2);
    for (std::size_t i = 1; i < res.max_history.size(); ++i) CHECK(res.max_history[i] < res.max_history[i - 1]);
}
