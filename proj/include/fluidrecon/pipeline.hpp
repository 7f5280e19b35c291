#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fluidrecon/apic.hpp"
#include "fluidrecon/config.hpp"
#include "fluidrecon/vgrd.hpp"

namespace fluidrecon {

namespace fs = std::filesystem;

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitParse = 2, kExitNotConverged = 3 };

/// Per-stage diagnostics: a human-readable line on `err` and, when `jsonl`
/// is set, one JSON object per line.
class Diagnostics {
public:
    Diagnostics(std::ostream& err, std::ostream* jsonl = nullptr) : err_(err), jsonl_(jsonl) {}
    void report(const std::string& stage, double seconds, const std::vector<std::pair<std::string, double>>& values);
    void message(const std::string& text);

private:
    std::ostream& err_;
    std::ostream* jsonl_;
};

/// One `name = value  # unit activation scale` line per parameter component.
void write_params_file(const fs::path& path, const SimParams& params, const NormalizedParams& norm);
SimParams read_params_file(const fs::path& path);

void write_loss_csv(const fs::path& path, const OptimizeResult& result);

/// Cell types as a one-channel VGRD field (CellType codes as floats).
GridField cells_field(const SimGrid& grid);
SimGrid grid_from_cells_field(const GridField& field);

/// Particle PLY: Gaussian vertex properties plus vx, vy, vz and mass.
PlyData particles_to_ply(const ParticleSet& particles, const std::vector<std::string>& feature_names);
/// Missing velocity reads as zero, missing mass as `default_mass`.
ParticleSet particles_from_ply(const PlyData& ply, double default_mass, std::vector<std::string>* feature_names = nullptr);

/// Dense velocity field sampled on the configured grid.
SimGrid make_grid(const GridSpec& spec);

struct ReconstructArgs {
    PipelineConfig config;
    fs::path input_dir;
    fs::path output_dir;
};

/// Stage 1. Reads per-frame rasters and clouds from `input_dir`:
///   cloud_NNNN.ply, flow_NNNN.f32, depth_NNNN.f32, fluid_NNNN.u8,
///   detected_NNNN.u8 (each raster with a .hdr sidecar), optional
///   image_NNNN.f32 for batch sizing and terrain.ply for SOLID cells.
/// Writes cells.vgrd, velocity_NNNN.vgrd and cloud_batch_NNNN.ply.
int cmd_reconstruct(const ReconstructArgs& args, Diagnostics& diag);

struct OptimizeArgs {
    PipelineConfig config;
    fs::path guidance_dir;  // cells.vgrd and velocity_NNNN.vgrd
    std::optional<fs::path> init_params;
    fs::path output_dir;    // params.txt and loss.csv
};
int cmd_optimize(const OptimizeArgs& args, Diagnostics& diag);

struct SimulateArgs {
    PipelineConfig config;
    fs::path asset_dir;  // cloud.ply, params.txt, optional cells.vgrd (SOLID cells)
    int frames = 0;
    std::vector<std::string> edits;      // key=value overrides of SimParams
    std::vector<std::string> obstacles;  // "i0,j0,k0,i1,j1,k1" inclusive SOLID boxes
    bool force = false;
    fs::path output_dir;  // frame_NNNN.ply
};
int cmd_simulate(const SimulateArgs& args, Diagnostics& diag);

/// Applies one `key=value` edit; vector keys take "x,y,z".
void apply_param_edit(SimParams& params, const std::string& edit);

struct ExportArgs {
    PipelineConfig config;
    fs::path trajectory_dir;  // frame_NNNN.ply
    fs::path output_dir;      // summary.csv and velocity_NNNN.vgrd
};
int cmd_export(const ExportArgs& args, Diagnostics& diag);

struct FrameSummary {
    std::size_t count = 0;
    Vec3 centroid = Vec3::Zero();
    double kinetic_energy = 0.0;  // sum 1/2 m |v|^2
};
FrameSummary summarize_particles(const ParticleSet& particles);

/// Numbered files `prefix_NNNN.ext` in `dir`, starting at 0 and stopping at
/// the first gap.
std::vector<fs::path> numbered_files(const fs::path& dir, const std::string& prefix, const std::string& ext);
std::string numbered_name(const std::string& prefix, int index, const std::string& ext);

}  // namespace fluidrecon
