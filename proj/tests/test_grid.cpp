#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "fluidrecon/grid.hpp"

using namespace fluidrecon;

TEST_CASE("index and coord are inverse")
{
    SimGrid g({3, 4, 5}, 0.5, Vec3(1, 2, 3));
    for (std::size_t idx = 0; idx < g.size(); ++idx) {
        const Index3 c = g.coord(idx);
        CHECK(g.index(c) == idx);
    }
    CHECK(g.cell_center(Index3{0, 0, 0}).isApprox(Vec3(1.25, 2.25, 3.25)));
    CHECK_FALSE(g.neighbor(0, {-1, 0, 0}).has_value());
    CHECK(*g.neighbor(0, {1, 0, 0}) == 1);
}

TEST_CASE("grid constructor rejects degenerate shapes")
{
    CHECK_THROWS_AS(SimGrid({0, 4, 4}, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(SimGrid({4, 4, 4}, 0.0), std::invalid_argument);
}

TEST_CASE("classification marks surface, inlet and outlet cells")
{
    auto ch = fixtures::channel(8, 4, 0.1);
    const auto& g = ch.grid;
    CHECK(g.cells[g.index(3, 0, 3)] == CellType::Solid);
    CHECK(g.cells[g.index(3, 2, 3)] == CellType::Fluid);
    CHECK(g.cells[g.index(3, 4, 3)] == CellType::Surface);
    CHECK(g.cells[g.index(3, 5, 3)] == CellType::Empty);
    CHECK(g.cells[g.index(0, 2, 3)] == CellType::Inlet);
    CHECK(g.cells[g.index(7, 2, 3)] == CellType::Outlet);
    // Same plane for inlet and outlet is rejected.
    std::vector<std::uint8_t> occ(g.size(), 1), none(g.size(), 0);
    CHECK_THROWS_AS(classify_cells(g, occ, none, PlaneSpec{1, true}, PlaneSpec{1, true}), std::invalid_argument);
}

TEST_CASE("divergence of a linear field equals its trace away from the border")
{
    auto g = fixtures::fluid_box(6, 0.2);
    Mat3 A;
    A << 0.3, 1.0, -2.0, 0.5, -0.7, 0.1, 0.2, 0.4, 1.1;
    for (std::size_t idx = 0; idx < g.size(); ++idx) g.velocity[idx] = A * g.cell_center(idx) + Vec3(1, 2, 3);
    const auto div = divergence(g);
    for (int k = 1; k < 5; ++k)
        for (int j = 1; j < 5; ++j)
            for (int i = 1; i < 5; ++i) {
                // Both faces of every axis lie inside the domain for these cells.
                CHECK(div[g.index(i, j, k)] == doctest::Approx(A.trace()).epsilon(1e-12));
            }
}

TEST_CASE("face flux follows the boundary rules")
{
    auto ch = fixtures::channel(6, 3, 0.1);
    auto& g = ch.grid;
    for (std::size_t i = 0; i < g.size(); ++i) g.velocity[i] = Vec3(1.0 + i, 2.0, 3.0);
    // Face between the floor (SOLID) and liquid: zero.
    CHECK_FALSE(face_flux_source(g, Index3{2, 1, 2}, 1).has_value());
    CHECK(face_flux(g, g.velocity, Index3{2, 1, 2}, 1) == 0.0);
    // Out of domain: zero.
    CHECK_FALSE(face_flux_source(g, Index3{0, 2, 2}, 0).has_value());
    // Lower neighbor is INLET: the inlet velocity.
    CHECK(*face_flux_source(g, Index3{1, 2, 2}, 0) == g.index(0, 2, 2));
    // Interior: the cell's own component.
    CHECK(*face_flux_source(g, Index3{3, 2, 2}, 0) == g.index(3, 2, 2));
    CHECK(face_flux(g, g.velocity, Index3{3, 2, 2}, 0) == g.velocity[g.index(3, 2, 2)].x());
}

TEST_CASE("wall reflection scales the normal by -bounce and the tangent by 1-damp")
{
    auto ch = fixtures::channel(6, 3, 0.1);
    auto& g = ch.grid;
    const std::size_t idx = g.index(2, 1, 2);  // just above the floor
    BoundaryCoefficients bc{0.5, 0.5};
    CHECK(reflect_at_walls(g, idx, Vec3(1, -2, 0), bc).isApprox(Vec3(0.5, 1.0, 0.0)));
    // Moving away from the wall: untouched.
    CHECK(reflect_at_walls(g, idx, Vec3(1, 2, 0), bc) == Vec3(1, 2, 0));
    // Corner cell next to the floor and the k = 0 wall reflects against both.
    const std::size_t corner = g.index(2, 1, 1);
    const Vec3 r = reflect_at_walls(g, corner, Vec3(0, -1, -1), {1.0, 0.0});
    CHECK(r.isApprox(Vec3(0, 1, 1)));
}

TEST_CASE("boundary conditions prescribe inlet, outlet and solid velocities")
{
    auto ch = fixtures::channel(6, 3, 0.1);
    auto& g = ch.grid;
    g.velocity = fixtures::random_velocity(g.size(), 3);
    InletOutletValues io;
    io.v_in = Vec3(1, 0, 0);
    io.v_tilde_in = 0.5;
    io.fluctuation_omega = 0.3;
    io.v_out = Vec3(0.7, 0, 0);
    const SimGrid out = apply_boundary_conditions(g, {0.5, 0.5}, io, 4);
    const Vec3 expect_in = Vec3(1, 0, 0) + 0.5 * std::sin(0.3 * 4) * Vec3::UnitX();
    for (std::size_t i = 0; i < g.size(); ++i) {
        switch (g.cells[i]) {
            case CellType::Solid: CHECK(out.velocity[i] == Vec3::Zero()); break;
            case CellType::Inlet: CHECK(out.velocity[i].isApprox(expect_in)); break;
            case CellType::Outlet: CHECK(out.velocity[i] == io.v_out); break;
            case CellType::Empty: CHECK(out.velocity[i] == g.velocity[i]); break;
            default: break;
        }
    }
}

TEST_CASE("divergence is linear")
{
    auto ch = fixtures::channel(7, 4, 0.1);
    SimGrid u = ch.grid, w = ch.grid, mix = ch.grid;
    u.velocity = fixtures::random_velocity(u.size(), 1);
    w.velocity = fixtures::random_velocity(w.size(), 2);
    for (std::size_t i = 0; i < mix.size(); ++i) mix.velocity[i] = 2.5 * u.velocity[i] - 0.75 * w.velocity[i];
    const auto du = divergence(u), dw = divergence(w), dm = divergence(mix);
    for (std::size_t i = 0; i < mix.size(); ++i) CHECK(std::abs(dm[i] - (2.5 * du[i] - 0.75 * dw[i])) < 1e-12);
}

TEST_CASE("boundary conditions are idempotent without bounce")
{
    auto ch = fixtures::channel(6, 3, 0.1);
    ch.grid.velocity = fixtures::random_velocity(ch.grid.size(), 5);
    InletOutletValues io;
    io.v_in = Vec3(0.2, 0, 0);
    const BoundaryCoefficients bc{0.0, 0.4};
    const SimGrid once = apply_boundary_conditions(ch.grid, bc, io, 0);
    const SimGrid twice = apply_boundary_conditions(once, bc, io, 0);
    CHECK(once.velocity == twice.velocity);
}

TEST_CASE("elastic reflection preserves speed")
{
    auto ch = fixtures::channel(6, 3, 0.1);
    const auto& g = ch.grid;
    const auto v = fixtures::random_velocity(g.size(), 6);
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!is_liquid(g.cells[i])) continue;
        CHECK(reflect_at_walls(g, i, v[i], {1.0, 0.0}).norm() == doctest::Approx(v[i].norm()).epsilon(1e-14));
    }
}

TEST_CASE("closed faces carry no velocity after the boundary pass")
{
    auto ch = fixtures::channel(6, 3, 0.1);
    auto& g = ch.grid;
    // Resting on the floor: the y component would leak through the closed face.
    const Vec3 on_floor = zero_closed_face_components(g, g.index(2, 1, 2), Vec3(0.3, -0.2, 0.1));
    CHECK(on_floor == Vec3(0.3, 0.0, 0.1));
    // Next to the k = 0 wall the z component is the flux through that wall.
    CHECK(zero_closed_face_components(g, g.index(2, 2, 1), Vec3(0.3, 0.2, 0.1)) == Vec3(0.3, 0.2, 0.0));
    // Interior cell: untouched.
    CHECK(zero_closed_face_components(g, g.index(2, 2, 2), Vec3(0.3, 0.2, 0.1)) == Vec3(0.3, 0.2, 0.1));
}

TEST_CASE("SURFACE cells are exactly the liquid cells with an EMPTY face neighbor")
{
    std::mt19937_64 rng(17);
    std::bernoulli_distribution on(0.6);
    for (int t = 0; t < 10; ++t) {
        SimGrid g({6, 5, 7}, 0.1);
        std::vector<std::uint8_t> occ(g.size()), solid(g.size(), 0);
        for (auto& o : occ) o = on(rng);
        for (std::size_t i = 0; i < g.size(); i += 11) solid[i] = 1;
        g.cells = classify_cells(g, occ, solid, std::nullopt, std::nullopt);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!is_liquid(g.cells[i])) continue;
            bool empty_nb = false;
            for (const auto& o : kFaceOffsets) {
                const auto nb = g.neighbor(i, o);
                empty_nb = empty_nb || (nb && g.cells[*nb] == CellType::Empty);
            }
            CHECK((g.cells[i] == CellType::Surface) == empty_nb);
        }
    }
}
