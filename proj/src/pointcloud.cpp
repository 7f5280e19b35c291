#include "fluidrecon/pointcloud.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <iostream>
#include <limits>
#include <map>
#include <stdexcept>
#include <unordered_map>

#include <Eigen/Dense>

namespace fluidrecon {

void GaussianCloud::validate() const
{
    const std::size_t n = position.size();
    if (opacity.size() != n || covariance.size() != n || features.size() != n) {
        throw std::invalid_argument("GaussianCloud: arrays differ in length");
    }
}

void GaussianCloud::push_from(const GaussianCloud& other, std::size_t i)
{
    position.push_back(other.position[i]);
    opacity.push_back(other.opacity[i]);
    covariance.push_back(other.covariance[i]);
    features.push_back(other.features[i]);
}

namespace {

const char* const kPosition[3] = {"x", "y", "z"};
const char* const kScale[3] = {"scale_0", "scale_1", "scale_2"};
const char* const kRot[4] = {"rot_0", "rot_1", "rot_2", "rot_3"};

bool is_geometry_property(const std::string& n)
{
    if (n == "opacity") return true;
    for (auto p : kPosition) if (n == p) return true;
    for (auto p : kScale) if (n == p) return true;
    for (auto p : kRot) if (n == p) return true;
    return false;
}

}  // namespace

GaussianCloud cloud_from_ply(const PlyData& ply, const GaussianPlyEncoding& enc)
{
    const PlyElement* v = ply.find("vertex");
    if (!v) throw std::invalid_argument("PLY has no vertex element");
    int pos[3], scale[3], rot[4];
    for (int a = 0; a < 3; ++a) {
        pos[a] = v->property_index(kPosition[a]);
        if (pos[a] < 0) throw std::invalid_argument(std::string("PLY vertex lacks property ") + kPosition[a]);
        scale[a] = v->property_index(kScale[a]);
    }
    for (int a = 0; a < 4; ++a) rot[a] = v->property_index(kRot[a]);
    const int op = v->property_index("opacity");
    const bool has_scale = scale[0] >= 0 && scale[1] >= 0 && scale[2] >= 0;
    const bool has_rot = rot[0] >= 0 && rot[1] >= 0 && rot[2] >= 0 && rot[3] >= 0;

    GaussianCloud cloud;
    std::vector<int> feature_cols;
    for (std::size_t c = 0; c < v->properties.size(); ++c) {
        if (is_geometry_property(v->properties[c].name)) continue;
        cloud.feature_names.push_back(v->properties[c].name);
        feature_cols.push_back(static_cast<int>(c));
    }
    for (std::size_t r = 0; r < v->count; ++r) {
        cloud.position.emplace_back(v->at(r, pos[0]), v->at(r, pos[1]), v->at(r, pos[2]));
        double o = op >= 0 ? v->at(r, op) : 1.0;
        if (op >= 0 && enc.opacity_logit) o = 1.0 / (1.0 + std::exp(-o));
        cloud.opacity.push_back(o);
        Vec3 s = Vec3::Ones();
        if (has_scale) {
            for (int a = 0; a < 3; ++a) s[a] = enc.scale_log ? std::exp(v->at(r, scale[a])) : v->at(r, scale[a]);
        }
        Mat3 R = Mat3::Identity();
        if (has_rot) {
            Eigen::Quaterniond q(v->at(r, rot[0]), v->at(r, rot[1]), v->at(r, rot[2]), v->at(r, rot[3]));
            if (q.norm() > 0.0) R = q.normalized().toRotationMatrix();
        }
        const Mat3 S = s.asDiagonal();
        cloud.covariance.push_back(R * S * S * R.transpose());
        std::vector<float> f;
        f.reserve(feature_cols.size());
        for (int c : feature_cols) f.push_back(static_cast<float>(v->at(r, c)));
        cloud.features.push_back(std::move(f));
    }
    return cloud;
}

PlyData cloud_to_ply(const GaussianCloud& cloud, const GaussianPlyEncoding& enc, PlyFormat format)
{
    cloud.validate();
    PlyData ply;
    ply.format = format;
    PlyElement v;
    v.name = "vertex";
    v.count = cloud.size();
    for (auto p : kPosition) v.properties.push_back({p, PlyType::Float32});
    for (const auto& n : cloud.feature_names) v.properties.push_back({n, PlyType::Float32});
    v.properties.push_back({"opacity", PlyType::Float32});
    for (auto p : kScale) v.properties.push_back({p, PlyType::Float32});
    for (auto p : kRot) v.properties.push_back({p, PlyType::Float32});
    const std::size_t nprop = v.properties.size();
    v.values.reserve(v.count * nprop);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        // Properties are float32; round now so the in-memory values equal what is written.
        auto put = [&](double x) { v.values.push_back(static_cast<float>(x)); };
        for (int a = 0; a < 3; ++a) put(cloud.position[i][a]);
        if (cloud.features[i].size() != cloud.feature_names.size()) {
            throw std::invalid_argument("GaussianCloud: feature count differs from feature names");
        }
        for (float f : cloud.features[i]) put(f);
        const double o = std::clamp(cloud.opacity[i], 1e-7, 1.0 - 1e-7);
        put(enc.opacity_logit ? std::log(o / (1.0 - o)) : cloud.opacity[i]);
        Eigen::SelfAdjointEigenSolver<Mat3> es(cloud.covariance[i]);
        Mat3 R = es.eigenvectors();
        if (R.determinant() < 0.0) R.col(2) = -R.col(2);
        for (int a = 0; a < 3; ++a) {
            const double s = std::sqrt(std::max(es.eigenvalues()[a], 1e-30));
            put(enc.scale_log ? std::log(s) : s);
        }
        const Eigen::Quaterniond q(R);
        put(q.w());
        put(q.x());
        put(q.y());
        put(q.z());
    }
    ply.elements.push_back(std::move(v));
    return ply;
}

GaussianCloud prune(const GaussianCloud& cloud, const PruneOptions& opts)
{
    if (!(opts.opacity_min > 0.0) || !(opts.anisotropy_max > 0.0)) {
        throw std::invalid_argument("prune thresholds must be positive");
    }
    cloud.validate();
    GaussianCloud out;
    out.feature_names = cloud.feature_names;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (cloud.opacity[i] < opts.opacity_min) continue;
        Eigen::SelfAdjointEigenSolver<Mat3> es(cloud.covariance[i], Eigen::EigenvaluesOnly);
        const double lo = es.eigenvalues()[0], hi = es.eigenvalues()[2];
        if (!(lo > 0.0) || hi / lo > opts.anisotropy_max) continue;
        out.push_from(cloud, i);
    }
    if (out.size() == 0 && cloud.size() > 0) std::clog << "warning: prune removed every point\n";
    return out;
}

VoxelKey voxel_of(const Vec3& x, double size)
{
    return {static_cast<std::int64_t>(std::floor(x.x() / size)), static_cast<std::int64_t>(std::floor(x.y() / size)),
            static_cast<std::int64_t>(std::floor(x.z() / size))};
}

std::set<VoxelKey> occupancy(const GaussianCloud& cloud, double dx)
{
    std::set<VoxelKey> s;
    for (const auto& x : cloud.position) s.insert(voxel_of(x, dx));
    return s;
}

namespace {

struct KeyHash {
    std::size_t operator()(const VoxelKey& k) const
    {
        std::size_t h = 1469598103934665603ull;
        for (auto v : k) h = (h ^ static_cast<std::size_t>(v)) * 1099511628211ull;
        return h;
    }
};

/// Nearest point by expanding shells of dx-cells.
class NearestIndex {
public:
    NearestIndex(const GaussianCloud& cloud, double dx) : cloud_(cloud), dx_(dx)
    {
        for (std::size_t i = 0; i < cloud.size(); ++i) buckets_[voxel_of(cloud.position[i], dx)].push_back(i);
    }

    std::size_t query(const Vec3& x) const
    {
        const VoxelKey c = voxel_of(x, dx_);
        std::size_t best = cloud_.size();
        double best_d = std::numeric_limits<double>::infinity();
        for (std::int64_t r = 0;; ++r) {
            // Every point in shell r+1 or beyond is at least r*dx away.
            if (best < cloud_.size() && static_cast<double>(r - 1) * dx_ > std::sqrt(best_d)) break;
            if (r > 1 << 20) break;
            for (std::int64_t k = -r; k <= r; ++k) {
                for (std::int64_t j = -r; j <= r; ++j) {
                    for (std::int64_t i = -r; i <= r; ++i) {
                        if (std::max({std::abs(i), std::abs(j), std::abs(k)}) != r) continue;
                        auto it = buckets_.find({c[0] + i, c[1] + j, c[2] + k});
                        if (it == buckets_.end()) continue;
                        for (std::size_t p : it->second) {
                            const double d = (cloud_.position[p] - x).squaredNorm();
                            if (d < best_d || (d == best_d && p < best)) {
                                best_d = d;
                                best = p;
                            }
                        }
                    }
                }
            }
        }
        return best;
    }

private:
    const GaussianCloud& cloud_;
    double dx_;
    std::unordered_map<VoxelKey, std::vector<std::size_t>, KeyHash> buckets_;
};

}  // namespace

GaussianCloud fill_interior(const GaussianCloud& cloud, double dx, double occupancy_threshold, FillReport* report)
{
    if (!(dx > 0.0)) throw std::invalid_argument("fill_interior: dx must be > 0");
    cloud.validate();
    GaussianCloud out = cloud;
    if (cloud.size() == 0) return out;

    VoxelKey lo = voxel_of(cloud.position[0], dx), hi = lo;
    for (const auto& x : cloud.position) {
        const VoxelKey k = voxel_of(x, dx);
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], k[a]);
            hi[a] = std::max(hi[a], k[a]);
        }
    }
    std::array<std::int64_t, 3> dims{};
    for (int a = 0; a < 3; ++a) {
        lo[a] -= 1;
        dims[a] = hi[a] - lo[a] + 2;
    }
    const std::size_t total = static_cast<std::size_t>(dims[0] * dims[1] * dims[2]);
    auto flat = [&](std::int64_t i, std::int64_t j, std::int64_t k) {
        return static_cast<std::size_t>(i + dims[0] * (j + dims[1] * k));
    };

    std::vector<double> density(total, 0.0);
    for (std::size_t p = 0; p < cloud.size(); ++p) {
        const VoxelKey k = voxel_of(cloud.position[p], dx);
        density[flat(k[0] - lo[0], k[1] - lo[1], k[2] - lo[2])] += cloud.opacity[p];
    }
    const double max_density = *std::max_element(density.begin(), density.end());
    const double thr = occupancy_threshold * max_density;
    auto blocked = [&](std::size_t idx) { return density[idx] > 0.0 && density[idx] >= thr; };

    std::vector<std::uint8_t> reached(total, 0);
    std::deque<std::array<std::int64_t, 3>> queue;
    for (std::int64_t k = 0; k < dims[2]; ++k) {
        for (std::int64_t j = 0; j < dims[1]; ++j) {
            for (std::int64_t i = 0; i < dims[0]; ++i) {
                const bool border = i == 0 || j == 0 || k == 0 || i == dims[0] - 1 || j == dims[1] - 1 || k == dims[2] - 1;
                const std::size_t idx = flat(i, j, k);
                if (border && !blocked(idx)) {
                    reached[idx] = 1;
                    queue.push_back({i, j, k});
                }
            }
        }
    }
    while (!queue.empty()) {
        const auto c = queue.front();
        queue.pop_front();
        for (const auto& o : kFaceOffsets) {
            const std::int64_t i = c[0] + o.i, j = c[1] + o.j, k = c[2] + o.k;
            if (i < 0 || j < 0 || k < 0 || i >= dims[0] || j >= dims[1] || k >= dims[2]) continue;
            const std::size_t idx = flat(i, j, k);
            if (reached[idx] || blocked(idx)) continue;
            reached[idx] = 1;
            queue.push_back({i, j, k});
        }
    }

    const NearestIndex nearest(cloud, dx);
    const double r = dx / 4.0;
    std::size_t inserted = 0, occupied = 0;
    for (std::int64_t k = 0; k < dims[2]; ++k) {
        for (std::int64_t j = 0; j < dims[1]; ++j) {
            for (std::int64_t i = 0; i < dims[0]; ++i) {
                const std::size_t idx = flat(i, j, k);
                if (blocked(idx)) {
                    ++occupied;
                    continue;
                }
                if (reached[idx]) continue;
                const Vec3 center = dx * Vec3(static_cast<double>(lo[0] + i) + 0.5, static_cast<double>(lo[1] + j) + 0.5,
                                              static_cast<double>(lo[2] + k) + 0.5);
                const std::size_t src = nearest.query(center);
                out.position.push_back(center);
                out.opacity.push_back(1.0);
                out.covariance.push_back(r * r * Mat3::Identity());
                out.features.push_back(cloud.features[src]);
                ++inserted;
            }
        }
    }
    if (report) *report = {inserted, occupied, total};
    return out;
}

GaussianCloud union_frames(const FrameBatch& batch, double dx)
{
    if (batch.clouds.empty()) throw std::invalid_argument("union_frames: empty batch");
    if (!(dx > 0.0)) throw std::invalid_argument("union_frames: dx must be > 0");
    const auto& names = batch.clouds.front().feature_names;
    std::map<VoxelKey, std::pair<std::size_t, std::size_t>> keep;
    for (std::size_t c = 0; c < batch.clouds.size(); ++c) {
        const GaussianCloud& cloud = batch.clouds[c];
        cloud.validate();
        if (cloud.feature_names != names) throw std::invalid_argument("union_frames: clouds carry different features");
        for (std::size_t p = 0; p < cloud.size(); ++p) {
            const VoxelKey key = voxel_of(cloud.position[p], dx / 2.0);
            auto [it, fresh] = keep.try_emplace(key, c, p);
            if (!fresh && cloud.opacity[p] > batch.clouds[it->second.first].opacity[it->second.second]) {
                it->second = {c, p};
            }
        }
    }
    GaussianCloud out;
    out.feature_names = names;
    for (const auto& [key, src] : keep) out.push_from(batch.clouds[src.first], src.second);
    return out;
}

double psnr(const Raster<double>& a, const Raster<double>& b, double peak)
{
    if (!a.same_shape(b) || a.data.empty()) throw std::invalid_argument("psnr: images differ in shape or are empty");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) mse += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
    mse /= static_cast<double>(a.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

double motion_score(const std::vector<double>& adjacent_psnr, double psnr_cap)
{
    if (adjacent_psnr.empty()) throw std::invalid_argument("motion_score: no frame pairs");
    double s = 0.0;
    for (double p : adjacent_psnr) {
        const double shortfall = psnr_cap - std::min(p, psnr_cap);
        s += shortfall * shortfall;
    }
    return s / static_cast<double>(adjacent_psnr.size());
}

int batch_size_from_score(double score, const BatchSizeOptions& opts)
{
    if (opts.n_min < 1 || opts.n_max < opts.n_min) throw std::invalid_argument("batch size bounds must satisfy 1 <= n_min <= n_max");
    const double raw = std::round(opts.c / (score + 1e-12));
    return static_cast<int>(std::clamp(raw, static_cast<double>(opts.n_min), static_cast<double>(opts.n_max)));
}

int select_batch_size(const std::vector<Raster<double>>& frames, const BatchSizeOptions& opts,
                      std::vector<double>* adjacent_psnr)
{
    if (frames.size() < 2) throw std::invalid_argument("select_batch_size: need at least 2 frames");
    std::vector<double> p;
    for (std::size_t f = 0; f + 1 < frames.size(); ++f) p.push_back(psnr(frames[f], frames[f + 1], opts.peak));
    if (adjacent_psnr) *adjacent_psnr = p;
    return batch_size_from_score(motion_score(p, opts.psnr_cap), opts);
}

}  // namespace fluidrecon
