#include "fluidrecon/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>

#include "fluidrecon/errors.hpp"
#include "fluidrecon/pointcloud.hpp"
#include "fluidrecon/surface_recon.hpp"

namespace fluidrecon {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

fs::path require_file(const fs::path& p)
{
    if (!fs::exists(p)) throw MissingInput(p.string());
    return p;
}

// Cell containing x, or nullopt outside the grid.
std::optional<std::size_t> cell_of(const SimGrid& grid, const Vec3& x)
{
    const Vec3 s = (x - grid.origin()) / grid.dx();
    const int i = static_cast<int>(std::floor(s.x())), j = static_cast<int>(std::floor(s.y())),
              k = static_cast<int>(std::floor(s.z()));
    if (!grid.in_bounds(i, j, k)) return std::nullopt;
    return grid.index(i, j, k);
}

std::vector<std::uint8_t> point_occupancy(const SimGrid& grid, const std::vector<Vec3>& points)
{
    std::vector<std::uint8_t> occ(grid.size(), 0);
    for (const auto& x : points) {
        if (auto c = cell_of(grid, x)) occ[*c] = 1;
    }
    return occ;
}

double median(std::vector<double> v)
{
    if (v.empty()) return 0.0;
    auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
}

struct FrameInputs {
    Raster<Vec2> flow;
    Raster<double> depth;
    Mask fluid;
    Mask detected;
};

FrameInputs load_frame(const fs::path& dir, int t)
{
    FrameInputs f;
    f.flow = vector2_raster(read_raw_raster(require_file(dir / numbered_name("flow", t, ".f32"))));
    f.depth = scalar_raster(read_raw_raster(require_file(dir / numbered_name("depth", t, ".f32"))));
    f.fluid = read_mask(require_file(dir / numbered_name("fluid", t, ".u8")));
    f.detected = read_mask(require_file(dir / numbered_name("detected", t, ".u8")));
    if (!f.flow.same_shape(f.depth) || !f.flow.same_shape(f.fluid) || !f.flow.same_shape(f.detected)) {
        throw ParseError((dir / numbered_name("flow", t, ".f32")).string(), 0, "frame rasters differ in shape");
    }
    return f;
}

}  // namespace

int cmd_reconstruct(const ReconstructArgs& args, Diagnostics& diag)
{
    const PipelineConfig& cfg = args.config;
    const auto& rc = cfg.reconstruct;
    const auto clouds = numbered_files(args.input_dir, "cloud", ".ply");
    if (clouds.empty()) throw MissingInput((args.input_dir / numbered_name("cloud", 0, ".ply")).string());
    const int n_frames = static_cast<int>(clouds.size());
    // Fail early, naming the first missing input.
    for (int t = 0; t < n_frames; ++t) {
        for (const auto& [prefix, ext] : {std::pair{"flow", ".f32"}, {"depth", ".f32"}, {"fluid", ".u8"}, {"detected", ".u8"}}) {
            require_file(args.input_dir / numbered_name(prefix, t, ext));
        }
    }
    fs::create_directories(args.output_dir);

    // Batch size from image similarity when images are supplied.
    auto t0 = Clock::now();
    const auto images = numbered_files(args.input_dir, "image", ".f32");
    int N = rc.batch.n_min;
    if (static_cast<int>(images.size()) >= n_frames && n_frames >= 2) {
        std::vector<Raster<double>> frames;
        for (int t = 0; t < n_frames; ++t) frames.push_back(scalar_raster(read_raw_raster(images[t])));
        N = select_batch_size(frames, rc.batch);
    }
    N = std::max(1, std::min(N, n_frames));
    diag.report("batch", seconds_since(t0), {{"frames", n_frames}, {"batch_size", N}});

    SimGrid base = make_grid(cfg.grid);
    std::vector<std::uint8_t> solid(base.size(), 0);
    const fs::path terrain = args.input_dir / "terrain.ply";
    if (fs::exists(terrain)) solid = point_occupancy(base, cloud_from_ply(read_ply(terrain.string())).position);

    const double delta = rc.boundary_layer ? *rc.boundary_layer : default_boundary_thickness(cfg.grid.dx, true);
    bool converged = true;
    for (int b0 = 0, batch = 0; b0 < n_frames; b0 += N, ++batch) {
        const int b1 = std::min(n_frames, b0 + N);
        t0 = Clock::now();
        FrameBatch fb;
        std::size_t pruned = 0, filled = 0;
        for (int t = b0; t < b1; ++t) {
            GaussianCloud c = prune(cloud_from_ply(read_ply(clouds[t].string())), rc.prune);
            pruned += c.size();
            FillReport rep;
            c = fill_interior(c, cfg.grid.dx, rc.fill_threshold, &rep);
            filled += rep.inserted;
            fb.clouds.push_back(std::move(c));
        }
        fb.N = static_cast<std::size_t>(b1 - b0);
        const GaussianCloud merged = union_frames(fb, cfg.grid.dx);
        write_ply((args.output_dir / numbered_name("cloud_batch", batch, ".ply")).string(), cloud_to_ply(merged));
        diag.report("clouds", seconds_since(t0),
                    {{"batch", batch}, {"kept", static_cast<double>(pruned)}, {"filled", static_cast<double>(filled)},
                     {"merged", static_cast<double>(merged.size())}});

        SimGrid geometry = base;
        geometry.cells = classify_cells(base, point_occupancy(base, merged.position), solid, cfg.inlet, cfg.outlet);
        if (batch == 0) write_vgrd((args.output_dir / "cells.vgrd").string(), cells_field(geometry));

        for (int t = b0; t < b1; ++t) {
            t0 = Clock::now();
            const FrameInputs in = load_frame(args.input_dir, t);
            ScreenObservation obs;
            obs.flow = in.flow;
            obs.depth = in.depth;
            obs.fluid_mask = in.fluid;
            obs.detected_mask = in.detected;
            obs.P = cfg.camera.P;
            obs.W_mat = cfg.camera.W;
            obs.S = cfg.camera.S;
            obs.T = cfg.camera.T;
            obs.frame_dt = cfg.frame_dt;
            obs.validate();

            Raster<double> vz(in.depth.height, in.depth.width, 0.0);
            if (t + 1 < n_frames) {
                const auto next = scalar_raster(read_raw_raster(args.input_dir / numbered_name("depth", t + 1, ".f32")));
                if (next.same_shape(in.depth)) vz = compute_vz(in.depth, next, in.flow, in.fluid, cfg.frame_dt);
            }
            Raster<Vec3> vel3(in.depth.height, in.depth.width, Vec3::Zero());
            for (std::size_t i = 0; i < vel3.data.size(); ++i) vel3.data[i] = Vec3(in.flow.data[i].x(), in.flow.data[i].y(), vz.data[i]);

            MainstreamSpec ms;
            ms.global_direction = rc.mainstream_screen ? rc.mainstream_screen->normalized()
                                                       : estimate_mainstream_direction(in.fluid, &vel3, &in.detected);
            ms.neighborhood_radius = rc.neighborhood_radius;
            ms.weight_sigma = rc.weight_sigma;
            const InterpolationResult interp = mainstream_interpolate(vel3, in.fluid, in.detected, ms);
            Raster<Vec2> vel2(in.depth.height, in.depth.width, Vec2::Zero());
            for (std::size_t i = 0; i < vel2.data.size(); ++i) {
                vel2.data[i] = interp.field.data[i].head<2>();
                vz.data[i] = interp.field.data[i].z();
            }
            const Projection2DResult proj =
                project_2d_constraint(vel2, vz, in.depth, in.fluid, in.detected, rc.projection_2d_iters, rc.projection_2d_tol);
            const auto points = unproject_to_3d(proj.field, vz, obs);

            // Surface cells take the mean unprojected velocity and stay fixed.
            SimGrid grid = geometry;
            std::vector<Vec3> sum(grid.size(), Vec3::Zero());
            std::vector<int> count(grid.size(), 0);
            std::vector<double> speeds;
            Vec3 mean_dir = Vec3::Zero();
            for (const auto& p : points) {
                speeds.push_back(p.velocity.norm());
                mean_dir += p.velocity;
                const auto c = cell_of(grid, p.position);
                if (c && is_liquid(grid.cells[*c])) {
                    sum[*c] += p.velocity;
                    ++count[*c];
                }
            }
            Vec3 dir = rc.mainstream_world ? *rc.mainstream_world : mean_dir;
            if (!(dir.norm() > 0.0)) dir = Vec3::UnitX();
            std::vector<std::uint8_t> fixed(grid.size(), 0);
            apply_wall_function(grid, dir, median(speeds), delta, fixed);
            for (std::size_t i = 0; i < grid.size(); ++i) {
                if (count[i] > 0) {
                    grid.velocity[i] = sum[i] / count[i];
                    fixed[i] = 1;
                }
                if (!is_liquid(grid.cells[i])) grid.velocity[i].setZero();
            }
            const VolumetricProjectionResult vol = volumetric_projection(grid, fixed, rc.volumetric_iters, -1.0, rc.volumetric_tol);
            write_vgrd((args.output_dir / numbered_name("velocity", t, ".vgrd")).string(), velocity_field(vol.grid));
            const bool ok2 = proj.converged || proj.initial_residual <= rc.projection_2d_tol;
            const bool ok3 = vol.converged || vol.final_max <= rc.volumetric_tol;
            converged = converged && ok2 && ok3;
            diag.report("frame", seconds_since(t0),
                        {{"frame", t},
                         {"fallback_pixels", interp.fallback_count},
                         {"screen_residual_before", proj.initial_residual},
                         {"screen_residual_after", proj.final_residual},
                         {"surface_points", static_cast<double>(points.size())},
                         {"div_before", vol.initial_max},
                         {"div_after", vol.final_max}});
        }
    }
    if (!converged) {
        diag.message("reconstruct: constraint projection did not reach the configured tolerance");
        return kExitNotConverged;
    }
    return kExitOk;
}

int cmd_optimize(const OptimizeArgs& args, Diagnostics& diag)
{
    const PipelineConfig& cfg = args.config;
    auto t0 = Clock::now();
    const GridField cells = read_vgrd(require_file(args.guidance_dir / "cells.vgrd").string());
    SimGrid geometry = grid_from_cells_field(cells);
    std::vector<std::vector<Vec3>> guidance;
    for (const auto& p : numbered_files(args.guidance_dir, "velocity", ".vgrd")) {
        const GridField f = read_vgrd(p.string());
        if (f.dims != cells.dims) throw ParseError(p.string(), 0, "grid dims differ from cells.vgrd");
        SimGrid g = geometry;
        load_velocity(g, f);
        guidance.push_back(std::move(g.velocity));
    }
    if (guidance.size() < 2) {
        throw std::invalid_argument("optimize: need at least 2 guidance grids, found " + std::to_string(guidance.size()));
    }
    const SimParams init = args.init_params ? read_params_file(*args.init_params) : cfg.params;
    StepConfig step = cfg.step;
    if (cfg.inlet) step.fluctuation_direction = cfg.inlet->inward_normal();
    diag.report("load", seconds_since(t0), {{"frames", static_cast<double>(guidance.size())}});

    t0 = Clock::now();
    const OptimizeResult res = optimize(geometry, guidance, init, cfg.loss, step, cfg.optimizer);
    fs::create_directories(args.output_dir);
    const NormalizedParams norm = cfg.optimizer.normalization ? *cfg.optimizer.normalization : NormalizedParams::defaults(init);
    write_params_file(args.output_dir / "params.txt", res.params, norm);
    write_loss_csv(args.output_dir / "loss.csv", res);
    diag.report("optimize", seconds_since(t0),
                {{"iterations", static_cast<double>(res.loss_history.size())},
                 {"rollout_length", res.rollout_length},
                 {"initial_loss", res.initial_loss},
                 {"best_loss", res.best_loss},
                 {"failed", res.failed ? 1.0 : 0.0}});
    if (res.failed) {
        diag.message("optimize: " + res.message);
        return kExitNotConverged;
    }
    return kExitOk;
}

int cmd_simulate(const SimulateArgs& args, Diagnostics& diag)
{
    const PipelineConfig& cfg = args.config;
    if (args.frames < 0) throw std::invalid_argument("simulate: frames must be >= 0");
    std::vector<std::string> features;
    ParticleSet particles = particles_from_ply(read_ply(require_file(args.asset_dir / "cloud.ply").string()),
                                               cfg.simulate.particle_mass, &features);
    if (particles.size() == 0) throw std::invalid_argument("simulate: asset cloud is empty");
    SimParams params = read_params_file(require_file(args.asset_dir / "params.txt"));
    for (const auto& e : args.edits) apply_param_edit(params, e);

    SimGrid grid = make_grid(cfg.grid);
    std::vector<std::uint8_t> solid(grid.size(), 0);
    const fs::path cells_path = args.asset_dir / "cells.vgrd";
    if (fs::exists(cells_path)) {
        const SimGrid g = grid_from_cells_field(read_vgrd(cells_path.string()));
        if (g.dims() != grid.dims()) throw ParseError(cells_path.string(), 0, "grid dims differ from the config");
        for (std::size_t i = 0; i < g.size(); ++i) solid[i] = g.cells[i] == CellType::Solid;
    }
    for (const auto& box : args.obstacles) {
        int b[6];
        if (std::sscanf(box.c_str(), "%d,%d,%d,%d,%d,%d", &b[0], &b[1], &b[2], &b[3], &b[4], &b[5]) != 6) {
            throw std::invalid_argument("obstacle '" + box + "' is not i0,j0,k0,i1,j1,k1");
        }
        for (int k = std::max(0, b[2]); k <= std::min(b[5], grid.dims()[2] - 1); ++k)
            for (int j = std::max(0, b[1]); j <= std::min(b[4], grid.dims()[1] - 1); ++j)
                for (int i = std::max(0, b[0]); i <= std::min(b[3], grid.dims()[0] - 1); ++i) solid[grid.index(i, j, k)] = 1;
    }

    double vmax = std::max(params.v_in.norm() + params.v_tilde_in, params.v_out.norm());
    for (const auto& v : particles.velocity) vmax = std::max(vmax, v.norm());
    const double courant = vmax * params.dt / cfg.grid.dx;
    if (courant > cfg.optimizer.cfl_limit && !args.force) {
        throw std::invalid_argument("simulate: CFL number " + std::to_string(courant) + " exceeds " +
                                    std::to_string(cfg.optimizer.cfl_limit) + " (use --force to run anyway)");
    }

    StepConfig step = cfg.step;
    if (cfg.inlet) step.fluctuation_direction = cfg.inlet->inward_normal();
    const ParticleSet source = particles;
    ParticleBoundary boundary;
    boundary.geometry = &grid;
    boundary.inlet = cfg.inlet;
    boundary.outlet = cfg.outlet;
    boundary.v_in = params.v_in;
    boundary.particles_per_inlet_cell = cfg.simulate.particles_per_inlet_cell;
    boundary.feature_source = &source;
    std::mt19937_64 rng(cfg.seed);
    const int substeps = std::max(1, static_cast<int>(std::lround(cfg.frame_dt / params.dt)));
    const Vec3 lo = grid.origin() + Vec3::Constant(0.5 * grid.dx());
    const Vec3 hi = grid.origin() + (Eigen::Vector3d(grid.dims()[0], grid.dims()[1], grid.dims()[2]) - Vec3::Constant(0.5)) * grid.dx();

    fs::create_directories(args.output_dir);
    write_ply((args.output_dir / numbered_name("frame", 0, ".ply")).string(), particles_to_ply(particles, features));
    int step_index = 0;
    for (int frame = 1; frame <= args.frames; ++frame) {
        const auto t0 = Clock::now();
        for (int s = 0; s < substeps; ++s, ++step_index) {
            grid.cells = classify_cells(grid, point_occupancy(grid, particles.position), solid, cfg.inlet, cfg.outlet);
            grid = p2g(particles, grid, true);
            grid = fluidrecon::step(grid, params, step, step_index);
            particles = g2p(grid, particles, params.dt);
            particles = update_deformation(particles, params.dt);
            particles = advect_particles(particles, params.dt, &boundary, &rng);
            for (auto& x : particles.position) x = x.cwiseMax(lo).cwiseMin(hi);
        }
        write_ply((args.output_dir / numbered_name("frame", frame, ".ply")).string(), particles_to_ply(particles, features));
        const FrameSummary s = summarize_particles(particles);
        diag.report("simulate", seconds_since(t0),
                    {{"frame", frame}, {"particles", static_cast<double>(s.count)}, {"kinetic_energy", s.kinetic_energy}});
    }
    return kExitOk;
}

int cmd_export(const ExportArgs& args, Diagnostics& diag)
{
    const auto frames = numbered_files(args.trajectory_dir, "frame", ".ply");
    if (frames.empty()) throw MissingInput((args.trajectory_dir / numbered_name("frame", 0, ".ply")).string());
    fs::create_directories(args.output_dir);
    std::ofstream csv(args.output_dir / "summary.csv");
    if (!csv) throw std::runtime_error("cannot write summary.csv");
    csv << "frame,count,centroid_x,centroid_y,centroid_z,kinetic_energy\n";
    const SimGrid base = make_grid(args.config.grid);
    const Vec3 lo = base.origin() + Vec3::Constant(0.5 * base.dx());
    const Vec3 hi = base.origin() + (Eigen::Vector3d(base.dims()[0], base.dims()[1], base.dims()[2]) - Vec3::Constant(0.5)) * base.dx();
    char line[256];
    for (std::size_t f = 0; f < frames.size(); ++f) {
        const auto t0 = Clock::now();
        const ParticleSet all = particles_from_ply(read_ply(frames[f].string()), args.config.simulate.particle_mass);
        const FrameSummary s = summarize_particles(all);
        std::snprintf(line, sizeof line, "%zu,%zu,%.17g,%.17g,%.17g,%.17g\n", f, s.count, s.centroid.x(), s.centroid.y(),
                      s.centroid.z(), s.kinetic_energy);
        csv << line;
        // Velocity snapshot from the particles inside the grid.
        ParticleSet inside;
        for (std::size_t p = 0; p < all.size(); ++p) {
            const Vec3& x = all.position[p];
            if ((x.array() >= lo.array()).all() && (x.array() <= hi.array()).all()) inside.push_from(all, p);
        }
        const SimGrid g = p2g(inside, base, false);
        write_vgrd((args.output_dir / numbered_name("velocity", static_cast<int>(f), ".vgrd")).string(), velocity_field(g));
        diag.report("export", seconds_since(t0), {{"frame", static_cast<double>(f)}, {"kinetic_energy", s.kinetic_energy}});
    }
    return kExitOk;
}

}  // namespace fluidrecon
