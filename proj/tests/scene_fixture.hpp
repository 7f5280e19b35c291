#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "fluidrecon/config.hpp"
#include "fluidrecon/pipeline.hpp"
#include "fluidrecon/pointcloud.hpp"
#include "fluidrecon/raster.hpp"

namespace fixtures {

using namespace fluidrecon;
namespace fs = std::filesystem;

/// Small open channel seen from above: 8^3 grid (dx 0.1) with a SOLID floor
/// and side walls, liquid up to y = 0.5, inlet at x- and outlet at x+. The
/// camera looks straight down; screen NDC (u, v) maps to world (x, z).
struct SceneSpec {
    int frames = 3;
    int pixels = 16;
    double flow_speed = 0.2;  // world m/s along +x
    bool with_hole = true;
};

inline PipelineConfig scene_config()
{
    PipelineConfig cfg;
    cfg.grid.dims = {8, 8, 8};
    cfg.grid.dx = 0.1;
    cfg.inlet = PlaneSpec{0, false};
    cfg.outlet = PlaneSpec{0, true};
    cfg.camera.W << 1, 0, 0, 0,  //
        0, 0, 1, 0,               //
        0, -1, 0, 2,              //
        0, 0, 0, 1;
    cfg.camera.P << 2.5, 0, 0, -1,  //
        0, 2.5, 0, -1,               //
        0, 0, 1, 0,                  //
        0, 0, 0, 1;
    cfg.frame_dt = 0.05;
    cfg.seed = 7;
    cfg.reconstruct.mainstream_screen = Vec2(1, 0);
    cfg.reconstruct.projection_2d_iters = 200;
    cfg.reconstruct.projection_2d_tol = 1e-8;
    cfg.reconstruct.volumetric_iters = 400;
    cfg.reconstruct.volumetric_tol = 1e-6;
    cfg.params.dt = 0.01;
    cfg.params.v_in = Vec3(0.2, 0, 0);
    cfg.params.v_out = Vec3(0.2, 0, 0);
    cfg.params.nu = 1e-4;
    cfg.optimizer.iterations = 3;
    cfg.optimizer.rollout_length = 2;
    cfg.step.pressure_iters = 30;
    return cfg;
}

inline GaussianCloud box_cloud(int i0, int i1, int j0, int j1, int k0, int k1, double dx)
{
    GaussianCloud c;
    c.feature_names = {"f_dc_0", "f_dc_1", "f_dc_2"};
    for (int k = k0; k <= k1; ++k)
        for (int j = j0; j <= j1; ++j)
            for (int i = i0; i <= i1; ++i) {
                c.position.emplace_back((i + 0.5) * dx, (j + 0.5) * dx, (k + 0.5) * dx);
                c.opacity.push_back(0.9);
                c.covariance.push_back(Mat3::Identity() * (dx * dx / 16.0));
                c.features.push_back({static_cast<float>(i) / 8.0f, static_cast<float>(j) / 8.0f, 0.5f});
            }
    return c;
}

/// Writes the scene's per-frame inputs into `dir`.
inline void write_scene(const fs::path& dir, const SceneSpec& spec = {})
{
    fs::create_directories(dir);
    const int H = spec.pixels, W = spec.pixels;
    const double dt = scene_config().frame_dt;
    for (int t = 0; t < spec.frames; ++t) {
        RawRaster flow{H, W, 2, std::vector<float>(static_cast<std::size_t>(H) * W * 2, 0.0f)};
        RawRaster depth{H, W, 1, std::vector<float>(static_cast<std::size_t>(H) * W, 1.55f)};
        RawRaster image{H, W, 1, std::vector<float>(static_cast<std::size_t>(H) * W, 0.0f)};
        Mask fluid(H, W, 0), detected(H, W, 0);
        for (int r = 0; r < H; ++r) {
            for (int c = 0; c < W; ++c) {
                const double z = (ndc_v(r, H) + 1.0) * 0.4;
                const std::size_t i = static_cast<std::size_t>(r) * W + c;
                if (z > 0.1 && z < 0.7) {
                    fluid.at(r, c) = 1;
                    const bool hole = spec.with_hole && r >= 6 && r <= 8 && c >= 6 && c <= 9;
                    detected.at(r, c) = hole ? 0 : 1;
                    if (!hole) flow.data[2 * i] = static_cast<float>(2.5 * spec.flow_speed * dt);
                }
                image.data[i] = static_cast<float>(0.5 + 0.01 * std::sin(0.3 * c + 0.2 * t));
            }
        }
        write_raw_raster(dir / numbered_name("flow", t, ".f32"), flow);
        write_raw_raster(dir / numbered_name("depth", t, ".f32"), depth);
        write_raw_raster(dir / numbered_name("image", t, ".f32"), image);
        write_mask(dir / numbered_name("fluid", t, ".u8"), fluid);
        write_mask(dir / numbered_name("detected", t, ".u8"), detected);
        write_ply((dir / numbered_name("cloud", t, ".ply")).string(), cloud_to_ply(box_cloud(0, 7, 1, 4, 1, 6, 0.1)));
    }
    GaussianCloud terrain = box_cloud(0, 7, 0, 0, 0, 7, 0.1);
    const GaussianCloud left = box_cloud(0, 7, 1, 7, 0, 0, 0.1), right = box_cloud(0, 7, 1, 7, 7, 7, 0.1);
    for (const auto* w : {&left, &right}) {
        for (std::size_t i = 0; i < w->size(); ++i) terrain.push_from(*w, i);
    }
    write_ply((dir / "terrain.ply").string(), cloud_to_ply(terrain));
}

inline void write_config(const fs::path& path, const PipelineConfig& cfg)
{
    std::ofstream out(path);
    out << config_to_json(cfg);
}

}  // namespace fixtures
