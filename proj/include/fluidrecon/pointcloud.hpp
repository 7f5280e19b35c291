#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "fluidrecon/grid.hpp"
#include "fluidrecon/ply.hpp"
#include "fluidrecon/raster.hpp"

namespace fluidrecon {

/// Gaussian point cloud: position, opacity in [0,1], SPD covariance and an
/// opaque per-point payload (named float channels, e.g. f_dc_*).
struct GaussianCloud {
    std::vector<Vec3> position;
    std::vector<double> opacity;
    std::vector<Mat3> covariance;
    std::vector<std::string> feature_names;
    std::vector<std::vector<float>> features;

    std::size_t size() const { return position.size(); }
    void validate() const;
    void push_from(const GaussianCloud& other, std::size_t i);
};

/// How the "opacity" and "scale_*" PLY properties are stored.
struct GaussianPlyEncoding {
    bool opacity_logit = true;  // opacity = sigmoid(raw)
    bool scale_log = true;      // scale = exp(raw)
};

/// Builds a cloud from the "vertex" element. Covariance is
/// R diag(scale)^2 R^T with R from the (w, x, y, z) quaternion rot_0..3.
/// Properties other than position, opacity, scale and rotation become features.
GaussianCloud cloud_from_ply(const PlyData& ply, const GaussianPlyEncoding& enc = {});
PlyData cloud_to_ply(const GaussianCloud& cloud, const GaussianPlyEncoding& enc = {},
                     PlyFormat format = PlyFormat::BinaryLittleEndian);

struct PruneOptions {
    double opacity_min = 0.1;
    double anisotropy_max = 10.0;
};

/// Drops points with opacity < opacity_min or eigenvalue ratio
/// lambda_max/lambda_min > anisotropy_max (or a non-positive eigenvalue).
GaussianCloud prune(const GaussianCloud& cloud, const PruneOptions& opts = {});

using VoxelKey = std::array<std::int64_t, 3>;
VoxelKey voxel_of(const Vec3& x, double size);

/// Set of dx-cells (lattice anchored at the world origin) holding a point.
std::set<VoxelKey> occupancy(const GaussianCloud& cloud, double dx);

struct FillReport {
    std::size_t inserted = 0;
    std::size_t occupied_cells = 0;
    std::size_t grid_cells = 0;
};

/// Deposits opacity per dx-cell on the point bounding box padded by one cell,
/// floods from the padding through cells below threshold * max density, and
/// inserts a point (opacity 1, covariance (dx/4)^2 I, payload of the nearest
/// point) at the center of every unreached sub-threshold cell.
GaussianCloud fill_interior(const GaussianCloud& cloud, double dx, double occupancy_threshold = 0.3,
                            FillReport* report = nullptr);

struct FrameBatch {
    std::vector<GaussianCloud> clouds;
    std::size_t N = 0;
    std::vector<double> similarity_scores;
};

/// Concatenates the clouds and keeps the highest-opacity point per dx/2
/// voxel (first one on ties). Output is ordered by voxel key.
GaussianCloud union_frames(const FrameBatch& batch, double dx);

/// PSNR in dB between equally sized images; identical images give +inf.
double psnr(const Raster<double>& a, const Raster<double>& b, double peak = 1.0);

struct BatchSizeOptions {
    int n_min = 2;
    int n_max = 16;
    double c = 1000.0;
    double psnr_cap = 100.0;  // dB, stands in for identical frames
    double peak = 1.0;
};

/// Mean squared shortfall of the adjacent-pair PSNRs below the cap.
double motion_score(const std::vector<double>& adjacent_psnr, double psnr_cap);
/// clamp(round(c / (score + eps)), n_min, n_max).
int batch_size_from_score(double score, const BatchSizeOptions& opts);
int select_batch_size(const std::vector<Raster<double>>& frames, const BatchSizeOptions& opts,
                      std::vector<double>* adjacent_psnr = nullptr);

}  // namespace fluidrecon
