#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "fluidrecon/errors.hpp"
#include "fluidrecon/pipeline.hpp"
#include "fluidrecon/pointcloud.hpp"

namespace fluidrecon {

namespace {

std::string fmt17(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

void Diagnostics::report(const std::string& stage, double seconds,
                         const std::vector<std::pair<std::string, double>>& values)
{
    err_ << "[" << stage << "]";
    for (const auto& [k, v] : values) err_ << " " << k << "=" << v;
    err_ << " (" << std::fixed << std::setprecision(3) << seconds << " s)" << std::defaultfloat << std::setprecision(6)
         << "\n";
    if (jsonl_) {
        nlohmann::json j = {{"stage", stage}, {"seconds", seconds}};
        for (const auto& [k, v] : values) j[k] = std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
        *jsonl_ << j.dump() << "\n";
    }
}

void Diagnostics::message(const std::string& text)
{
    err_ << text << "\n";
    if (jsonl_) *jsonl_ << nlohmann::json{{"message", text}}.dump() << "\n";
}

void write_params_file(const fs::path& path, const SimParams& params, const NormalizedParams& norm)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    const auto v = to_vector(params);
    for (int i = 0; i < kParamCount; ++i) {
        out << param_names()[i] << " = " << fmt17(v[i]) << "  # " << param_units()[i] << " "
            << activation_name(norm.activations[i].kind) << " " << fmt17(norm.activations[i].scale) << "\n";
    }
}

SimParams read_params_file(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw MissingInput(path.string());
    std::map<std::string, double> values;
    std::string line;
    std::uint64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        const std::string body = trim(line.substr(0, hash));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw ParseError(path.string(), lineno, "expected 'name = value'");
        const std::string key = trim(body.substr(0, eq));
        const std::string val = trim(body.substr(eq + 1));
        std::size_t used = 0;
        double x = 0.0;
        try {
            x = std::stod(val, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != val.size()) throw ParseError(path.string(), lineno, "bad number '" + val + "'");
        if (values.count(key)) throw ParseError(path.string(), lineno, "duplicate parameter '" + key + "'");
        values[key] = x;
    }
    SimParams defaults;
    auto v = to_vector(defaults);
    for (const auto& [key, x] : values) {
        int found = -1;
        for (int i = 0; i < kParamCount; ++i) {
            if (param_names()[i] == key) found = i;
        }
        if (found < 0) throw ParseError(path.string(), 0, "unknown parameter '" + key + "'");
        v[found] = x;
    }
    SimParams p = from_vector(v);
    try {
        p.validate();
    } catch (const std::invalid_argument& e) {
        throw ParseError(path.string(), 0, e.what());
    }
    return p;
}

void write_loss_csv(const fs::path& path, const OptimizeResult& result)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "iteration,loss,best\n";
    for (std::size_t i = 0; i < result.loss_history.size(); ++i) {
        out << i << "," << fmt17(result.loss_history[i]) << "," << fmt17(result.running_min[i]) << "\n";
    }
}

GridField cells_field(const SimGrid& grid)
{
    GridField f;
    for (int a = 0; a < 3; ++a) {
        f.dims[a] = static_cast<std::uint32_t>(grid.dims()[a]);
        f.origin[a] = static_cast<float>(grid.origin()[a]);
    }
    f.dx = static_cast<float>(grid.dx());
    f.channels = 1;
    f.data.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) f.data[i] = static_cast<float>(grid.cells[i]);
    return f;
}

SimGrid grid_from_cells_field(const GridField& field)
{
    if (field.channels != 1) throw std::invalid_argument("cell field must have one channel");
    SimGrid grid({static_cast<int>(field.dims[0]), static_cast<int>(field.dims[1]), static_cast<int>(field.dims[2])},
                 field.dx, Vec3(field.origin[0], field.origin[1], field.origin[2]));
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const float c = field.data[i];
        if (!(c >= 0.0f && c <= 5.0f) || c != std::floor(c)) throw std::invalid_argument("invalid cell type code");
        grid.cells[i] = static_cast<CellType>(static_cast<int>(c));
    }
    return grid;
}

SimGrid make_grid(const GridSpec& spec) { return SimGrid(spec.dims, spec.dx, spec.origin); }

PlyData particles_to_ply(const ParticleSet& particles, const std::vector<std::string>& feature_names)
{
    GaussianCloud cloud;
    cloud.position = particles.position;
    cloud.opacity = particles.opacity;
    cloud.covariance = particles.covariance;
    cloud.feature_names = feature_names;
    cloud.features = particles.features;
    PlyData ply = cloud_to_ply(cloud);
    PlyElement& v = ply.elements.front();
    const std::size_t old_props = v.properties.size();
    for (const char* n : {"vx", "vy", "vz", "mass"}) v.properties.push_back({n, PlyType::Float64});
    std::vector<double> values;
    values.reserve(v.count * v.properties.size());
    for (std::size_t r = 0; r < v.count; ++r) {
        values.insert(values.end(), v.values.begin() + static_cast<std::ptrdiff_t>(r * old_props),
                      v.values.begin() + static_cast<std::ptrdiff_t>((r + 1) * old_props));
        for (int a = 0; a < 3; ++a) values.push_back(particles.velocity[r][a]);
        values.push_back(particles.mass[r]);
    }
    v.values = std::move(values);
    return ply;
}

ParticleSet particles_from_ply(const PlyData& ply, double default_mass, std::vector<std::string>* feature_names)
{
    GaussianCloud cloud = cloud_from_ply(ply);
    const char* extra[4] = {"vx", "vy", "vz", "mass"};
    int col[4];
    for (int i = 0; i < 4; ++i) {
        const auto it = std::find(cloud.feature_names.begin(), cloud.feature_names.end(), extra[i]);
        col[i] = it == cloud.feature_names.end() ? -1 : static_cast<int>(it - cloud.feature_names.begin());
    }
    // Velocity and mass are read from the PLY directly (float64), not from the float features.
    const PlyElement* v = ply.find("vertex");
    int pcol[4];
    for (int i = 0; i < 4; ++i) pcol[i] = v->property_index(extra[i]);

    ParticleSet out;
    out.reserve(cloud.size());
    for (std::size_t r = 0; r < cloud.size(); ++r) {
        Vec3 vel = Vec3::Zero();
        for (int a = 0; a < 3; ++a) {
            if (pcol[a] >= 0) vel[a] = v->at(r, pcol[a]);
        }
        const double m = pcol[3] >= 0 ? v->at(r, pcol[3]) : default_mass;
        out.push_default(cloud.position[r], vel, m, 1.0);
        out.covariance.back() = cloud.covariance[r];
        out.rest_covariance.back() = cloud.covariance[r];
        out.opacity.back() = cloud.opacity[r];
        std::vector<float> f;
        for (std::size_t c = 0; c < cloud.feature_names.size(); ++c) {
            if (std::find(std::begin(col), std::end(col), static_cast<int>(c)) == std::end(col)) f.push_back(cloud.features[r][c]);
        }
        out.features.back() = std::move(f);
    }
    if (feature_names) {
        feature_names->clear();
        for (std::size_t c = 0; c < cloud.feature_names.size(); ++c) {
            if (std::find(std::begin(col), std::end(col), static_cast<int>(c)) == std::end(col)) {
                feature_names->push_back(cloud.feature_names[c]);
            }
        }
    }
    out.validate();
    return out;
}

FrameSummary summarize_particles(const ParticleSet& particles)
{
    FrameSummary s;
    s.count = particles.size();
    for (std::size_t p = 0; p < particles.size(); ++p) {
        s.centroid += particles.position[p];
        s.kinetic_energy += 0.5 * particles.mass[p] * particles.velocity[p].squaredNorm();
    }
    if (s.count > 0) s.centroid /= static_cast<double>(s.count);
    return s;
}

void apply_param_edit(SimParams& params, const std::string& edit)
{
    const auto eq = edit.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("edit '" + edit + "' is not key=value");
    const std::string key = trim(edit.substr(0, eq));
    std::vector<double> nums;
    std::stringstream ss(edit.substr(eq + 1));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        std::size_t used = 0;
        double x = 0.0;
        try {
            x = std::stod(trim(tok), &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != trim(tok).size()) throw std::invalid_argument("edit '" + edit + "': bad number");
        nums.push_back(x);
    }
    auto scalar = [&](double& dst) {
        if (nums.size() != 1) throw std::invalid_argument("edit '" + edit + "': expected one value");
        dst = nums[0];
    };
    auto vec = [&](Vec3& dst) {
        if (nums.size() != 3) throw std::invalid_argument("edit '" + edit + "': expected x,y,z");
        dst = Vec3(nums[0], nums[1], nums[2]);
    };
    if (key == "v_in") vec(params.v_in);
    else if (key == "v_out") vec(params.v_out);
    else if (key == "g") vec(params.g);
    else if (key == "v_tilde_in") scalar(params.v_tilde_in);
    else if (key == "rho") scalar(params.rho);
    else if (key == "nu") scalar(params.nu);
    else if (key == "bounce") scalar(params.bounce);
    else if (key == "damp") scalar(params.damp);
    else if (key == "dt") scalar(params.dt);
    else throw std::invalid_argument("edit '" + edit + "': unknown parameter '" + key + "'");
    params.validate();
}

std::string numbered_name(const std::string& prefix, int index, const std::string& ext)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "_%04d", index);
    return prefix + buf + ext;
}

std::vector<fs::path> numbered_files(const fs::path& dir, const std::string& prefix, const std::string& ext)
{
    std::vector<fs::path> out;
    for (int i = 0;; ++i) {
        fs::path p = dir / numbered_name(prefix, i, ext);
        if (!fs::exists(p)) break;
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace fluidrecon
