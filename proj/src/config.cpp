#include "fluidrecon/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/LU>
#include <json.hpp>

#include "fluidrecon/errors.hpp"

namespace fluidrecon {

using nlohmann::json;

namespace {

json vec_json(const Eigen::VectorXd& v)
{
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

template <typename M>
json mat_json(const M& m)
{
    json a = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        a.push_back(row);
    }
    return a;
}

json plane_json(const std::optional<PlaneSpec>& p)
{
    if (!p) return nullptr;
    return {{"axis", p->axis}, {"positive", p->positive}};
}

const char* solver_name(PressureSolver s) { return s == PressureSolver::Jacobi ? "jacobi" : "stencil_recurrent"; }

const std::array<const char*, 6> kCellNames{"empty", "fluid", "surface", "solid", "inlet", "outlet"};

// Typed accessors that report the dotted path of the offending field.
class Reader {
public:
    explicit Reader(const json& root) : root_(root) {}

    const json& node(const std::string& path) const
    {
        const json* j = &root_;
        std::size_t start = 0;
        while (start <= path.size()) {
            const auto dot = path.find('.', start);
            const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
            if (!j->is_object() || !j->contains(key)) {
                throw ConfigError(path.substr(0, start == 0 ? 0 : start - 1).empty() ? key : path.substr(0, start - 1),
                                  "expected an object");
            }
            j = &(*j)[key];
            if (dot == std::string::npos) break;
            start = dot + 1;
        }
        return *j;
    }

    bool is_null(const std::string& path) const { return node(path).is_null(); }

    double num(const std::string& path) const
    {
        const json& j = node(path);
        if (!j.is_number()) throw ConfigError(path, "expected a number");
        return j.get<double>();
    }

    int integer(const std::string& path) const
    {
        const json& j = node(path);
        if (!j.is_number_integer()) throw ConfigError(path, "expected an integer");
        const auto v = j.get<std::int64_t>();
        if (v < -1000000000 || v > 1000000000) throw ConfigError(path, "integer out of range");
        return static_cast<int>(v);
    }

    bool boolean(const std::string& path) const
    {
        const json& j = node(path);
        if (!j.is_boolean()) throw ConfigError(path, "expected true or false");
        return j.get<bool>();
    }

    std::string str(const std::string& path) const
    {
        const json& j = node(path);
        if (!j.is_string()) throw ConfigError(path, "expected a string");
        return j.get<std::string>();
    }

    Eigen::VectorXd vec(const std::string& path, int n) const
    {
        const json& j = node(path);
        if (!j.is_array() || static_cast<int>(j.size()) != n) {
            throw ConfigError(path, "expected an array of " + std::to_string(n) + " numbers");
        }
        Eigen::VectorXd v(n);
        for (int i = 0; i < n; ++i) {
            if (!j[i].is_number()) throw ConfigError(path, "expected an array of numbers");
            v[i] = j[i].get<double>();
        }
        return v;
    }

    Eigen::MatrixXd mat(const std::string& path, int n) const
    {
        const json& j = node(path);
        if (!j.is_array() || static_cast<int>(j.size()) != n) throw ConfigError(path, "expected a " + std::to_string(n) + "x" + std::to_string(n) + " matrix");
        Eigen::MatrixXd m(n, n);
        for (int r = 0; r < n; ++r) {
            if (!j[r].is_array() || static_cast<int>(j[r].size()) != n) throw ConfigError(path, "expected a square matrix");
            for (int c = 0; c < n; ++c) {
                if (!j[r][c].is_number()) throw ConfigError(path, "expected numbers");
                m(r, c) = j[r][c].get<double>();
            }
        }
        return m;
    }

    std::optional<PlaneSpec> plane(const std::string& path) const
    {
        if (is_null(path)) return std::nullopt;
        if (!node(path).is_object()) throw ConfigError(path, "expected null or {axis, positive}");
        PlaneSpec p;
        p.axis = integer(path + ".axis");
        p.positive = boolean(path + ".positive");
        return p;
    }

private:
    const json& root_;
};

// Copies `user` over `base`, rejecting keys that the base document lacks.
void merge_strict(json& base, const json& user, const std::string& path)
{
    if (!user.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "expected an object");
    for (auto it = user.begin(); it != user.end(); ++it) {
        const std::string sub = path.empty() ? it.key() : path + "." + it.key();
        if (!base.contains(it.key())) throw ConfigError(sub, "unknown key");
        json& b = base[it.key()];
        if (b.is_object() && it->is_object()) {
            merge_strict(b, *it, sub);
        } else {
            b = *it;
        }
    }
}

}  // namespace

std::string config_to_json(const PipelineConfig& cfg)
{
    const auto& rc = cfg.reconstruct;
    const auto& op = cfg.optimizer;
    json free = json::array();
    for (auto g : op.free_params) free.push_back(param_group_name(g));
    json masks = json::object();
    for (std::size_t i = 0; i < kCellNames.size(); ++i) masks[kCellNames[i]] = cfg.loss.mask_weights[i];
    json kernel = nullptr;
    if (cfg.step.kernel) {
        kernel = {{"stencil", std::vector<double>(cfg.step.kernel->stencil.begin(), cfg.step.kernel->stencil.end())},
                  {"source_coeff", cfg.step.kernel->source_coeff},
                  {"source_scale", cfg.step.kernel->source_scale}};
    }
    const SimParams& p = cfg.params;
    json doc = {
        {"grid", {{"dims", cfg.grid.dims}, {"dx", cfg.grid.dx}, {"origin", vec_json(cfg.grid.origin)}}},
        {"inlet", plane_json(cfg.inlet)},
        {"outlet", plane_json(cfg.outlet)},
        {"camera", {{"P", mat_json(cfg.camera.P)}, {"W", mat_json(cfg.camera.W)}, {"S", mat_json(cfg.camera.S)}, {"T", mat_json(cfg.camera.T)}}},
        {"frame_dt", cfg.frame_dt},
        {"seed", cfg.seed},
        {"reconstruct",
         {{"prune_opacity_min", rc.prune.opacity_min},
          {"prune_anisotropy_max", rc.prune.anisotropy_max},
          {"fill_threshold", rc.fill_threshold},
          {"batch", {{"n_min", rc.batch.n_min}, {"n_max", rc.batch.n_max}, {"c", rc.batch.c}, {"psnr_cap", rc.batch.psnr_cap}, {"peak", rc.batch.peak}}},
          {"mainstream_screen", rc.mainstream_screen ? vec_json(*rc.mainstream_screen) : json(nullptr)},
          {"mainstream_world", rc.mainstream_world ? vec_json(*rc.mainstream_world) : json(nullptr)},
          {"neighborhood_radius", rc.neighborhood_radius},
          {"weight_sigma", rc.weight_sigma},
          {"boundary_layer", rc.boundary_layer ? json(*rc.boundary_layer) : json(nullptr)},
          {"projection_2d_iters", rc.projection_2d_iters},
          {"projection_2d_tol", rc.projection_2d_tol},
          {"volumetric_iters", rc.volumetric_iters},
          {"volumetric_tol", rc.volumetric_tol}}},
        {"loss", {{"alpha", cfg.loss.alpha}, {"beta", cfg.loss.beta}, {"speed_floor", cfg.loss.speed_floor}, {"mask_weights", masks}}},
        {"optimizer",
         {{"iterations", op.iterations},
          {"lr", op.lr},
          {"lr_decay", op.lr_decay},
          {"rollout_length", op.rollout_length},
          {"min_rollout", op.min_rollout},
          {"max_rollout", op.max_rollout},
          {"motion_reference", op.motion_reference},
          {"free_params", free},
          {"grad_mode", op.backward.mode == GradMode::RecordedJacobi ? "recorded_jacobi" : "auxiliary_poisson"},
          {"convection_gradient", op.backward.convection == ConvectionGradient::Exact ? "exact" : "upwind"},
          {"aux_tolerance", op.backward.aux_tolerance},
          {"aux_max_iters", op.backward.aux_max_iters},
          {"cfl_limit", op.cfl_limit},
          {"target_loss", op.target_loss}}},
        {"step",
         {{"pressure_iters", cfg.step.pressure_iters},
          {"solver", solver_name(cfg.step.solver)},
          {"kernel", kernel},
          {"fluctuation_omega", cfg.step.fluctuation_omega}}},
        {"params",
         {{"v_in", vec_json(p.v_in)},
          {"v_tilde_in", p.v_tilde_in},
          {"v_out", vec_json(p.v_out)},
          {"rho", p.rho},
          {"nu", p.nu},
          {"bounce", p.bounce},
          {"damp", p.damp},
          {"g", vec_json(p.g)},
          {"dt", p.dt}}},
        {"simulate", {{"particles_per_inlet_cell", cfg.simulate.particles_per_inlet_cell}, {"particle_mass", cfg.simulate.particle_mass}}},
    };
    return doc.dump(2) + "\n";
}

std::string reference_config() { return config_to_json(PipelineConfig{}); }

PipelineConfig parse_config(const std::string& text, const std::string& name)
{
    json user;
    try {
        user = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(name, e.byte, e.what());
    }
    json doc = json::parse(reference_config());
    merge_strict(doc, user, "");

    const Reader r(doc);
    PipelineConfig cfg;
    for (int a = 0; a < 3; ++a) {
        const json& d = doc["grid"]["dims"];
        if (!d.is_array() || d.size() != 3 || !d[a].is_number_integer()) throw ConfigError("grid.dims", "expected 3 integers");
        cfg.grid.dims[a] = d[a].get<int>();
    }
    cfg.grid.dx = r.num("grid.dx");
    cfg.grid.origin = r.vec("grid.origin", 3);
    cfg.inlet = r.plane("inlet");
    cfg.outlet = r.plane("outlet");
    cfg.camera.P = r.mat("camera.P", 4);
    cfg.camera.W = r.mat("camera.W", 4);
    cfg.camera.S = r.mat("camera.S", 3);
    cfg.camera.T = r.mat("camera.T", 3);
    cfg.frame_dt = r.num("frame_dt");
    if (!doc["seed"].is_number_unsigned()) throw ConfigError("seed", "expected a non-negative integer");
    cfg.seed = doc["seed"].get<std::uint64_t>();

    auto& rc = cfg.reconstruct;
    rc.prune.opacity_min = r.num("reconstruct.prune_opacity_min");
    rc.prune.anisotropy_max = r.num("reconstruct.prune_anisotropy_max");
    rc.fill_threshold = r.num("reconstruct.fill_threshold");
    rc.batch.n_min = r.integer("reconstruct.batch.n_min");
    rc.batch.n_max = r.integer("reconstruct.batch.n_max");
    rc.batch.c = r.num("reconstruct.batch.c");
    rc.batch.psnr_cap = r.num("reconstruct.batch.psnr_cap");
    rc.batch.peak = r.num("reconstruct.batch.peak");
    if (!r.is_null("reconstruct.mainstream_screen")) rc.mainstream_screen = r.vec("reconstruct.mainstream_screen", 2);
    if (!r.is_null("reconstruct.mainstream_world")) rc.mainstream_world = r.vec("reconstruct.mainstream_world", 3);
    rc.neighborhood_radius = r.num("reconstruct.neighborhood_radius");
    rc.weight_sigma = r.num("reconstruct.weight_sigma");
    if (!r.is_null("reconstruct.boundary_layer")) rc.boundary_layer = r.num("reconstruct.boundary_layer");
    rc.projection_2d_iters = r.integer("reconstruct.projection_2d_iters");
    rc.projection_2d_tol = r.num("reconstruct.projection_2d_tol");
    rc.volumetric_iters = r.integer("reconstruct.volumetric_iters");
    rc.volumetric_tol = r.num("reconstruct.volumetric_tol");

    cfg.loss.alpha = r.num("loss.alpha");
    cfg.loss.beta = r.num("loss.beta");
    cfg.loss.speed_floor = r.num("loss.speed_floor");
    for (std::size_t i = 0; i < kCellNames.size(); ++i) {
        cfg.loss.mask_weights[i] = r.num(std::string("loss.mask_weights.") + kCellNames[i]);
    }

    auto& op = cfg.optimizer;
    op.iterations = r.integer("optimizer.iterations");
    op.lr = r.num("optimizer.lr");
    op.lr_decay = r.num("optimizer.lr_decay");
    op.rollout_length = r.integer("optimizer.rollout_length");
    op.min_rollout = r.integer("optimizer.min_rollout");
    op.max_rollout = r.integer("optimizer.max_rollout");
    op.motion_reference = r.num("optimizer.motion_reference");
    op.free_params.clear();
    const json& free = doc["optimizer"]["free_params"];
    if (!free.is_array()) throw ConfigError("optimizer.free_params", "expected an array of parameter names");
    for (std::size_t i = 0; i < free.size(); ++i) {
        const std::string path = "optimizer.free_params[" + std::to_string(i) + "]";
        if (!free[i].is_string()) throw ConfigError(path, "expected a parameter name");
        try {
            op.free_params.push_back(param_group_from_name(free[i].get<std::string>()));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(path, e.what());
        }
    }
    const std::string mode = r.str("optimizer.grad_mode");
    if (mode == "recorded_jacobi") op.backward.mode = GradMode::RecordedJacobi;
    else if (mode == "auxiliary_poisson") op.backward.mode = GradMode::AuxiliaryPoisson;
    else throw ConfigError("optimizer.grad_mode", "expected recorded_jacobi or auxiliary_poisson");
    const std::string conv = r.str("optimizer.convection_gradient");
    if (conv == "exact") op.backward.convection = ConvectionGradient::Exact;
    else if (conv == "upwind") op.backward.convection = ConvectionGradient::UpwindSurrogate;
    else throw ConfigError("optimizer.convection_gradient", "expected exact or upwind");
    op.backward.aux_tolerance = r.num("optimizer.aux_tolerance");
    op.backward.aux_max_iters = r.integer("optimizer.aux_max_iters");
    op.cfl_limit = r.num("optimizer.cfl_limit");
    op.target_loss = r.num("optimizer.target_loss");

    cfg.step.pressure_iters = r.integer("step.pressure_iters");
    const std::string solver = r.str("step.solver");
    if (solver == "jacobi") cfg.step.solver = PressureSolver::Jacobi;
    else if (solver == "stencil_recurrent") cfg.step.solver = PressureSolver::StencilRecurrent;
    else throw ConfigError("step.solver", "expected jacobi or stencil_recurrent");
    if (!r.is_null("step.kernel")) {
        PressureKernel k;
        const auto w = r.vec("step.kernel.stencil", 27);
        for (int i = 0; i < 27; ++i) k.stencil[i] = w[i];
        k.source_coeff = r.num("step.kernel.source_coeff");
        k.source_scale = r.num("step.kernel.source_scale");
        cfg.step.kernel = k;
    }
    cfg.step.fluctuation_omega = r.num("step.fluctuation_omega");

    SimParams& p = cfg.params;
    p.v_in = r.vec("params.v_in", 3);
    p.v_tilde_in = r.num("params.v_tilde_in");
    p.v_out = r.vec("params.v_out", 3);
    p.rho = r.num("params.rho");
    p.nu = r.num("params.nu");
    p.bounce = r.num("params.bounce");
    p.damp = r.num("params.damp");
    p.g = r.vec("params.g", 3);
    p.dt = r.num("params.dt");

    cfg.simulate.particles_per_inlet_cell = r.integer("simulate.particles_per_inlet_cell");
    cfg.simulate.particle_mass = r.num("simulate.particle_mass");

    cfg.validate();
    return cfg;
}

PipelineConfig load_config(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingInput(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path);
}

PipelineConfig load_config_with_overrides(const std::string& path, const std::vector<std::string>& overrides)
{
    std::string text = "{}";
    std::string name = "<defaults>";
    if (!path.empty()) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw MissingInput(path);
        std::ostringstream ss;
        ss << in.rdbuf();
        text = ss.str();
        name = path;
    }
    if (overrides.empty()) return parse_config(text, name);
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(name, e.byte, e.what());
    }
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError(o, "override must be key.path=value");
        const std::string key = o.substr(0, eq);
        const std::string raw = o.substr(eq + 1);
        json value;
        try {
            value = json::parse(raw);
        } catch (const json::parse_error&) {
            value = raw;
        }
        json* j = &doc;
        std::size_t start = 0;
        for (;;) {
            const auto dot = key.find('.', start);
            const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
            if (part.empty()) throw ConfigError(key, "empty path component");
            if (!j->is_object()) *j = json::object();
            j = &(*j)[part];
            if (dot == std::string::npos) break;
            start = dot + 1;
        }
        *j = value;
    }
    return parse_config(doc.dump(), name);
}

void PipelineConfig::validate() const
{
    auto require = [](bool ok, const char* path, const char* what) {
        if (!ok) throw ConfigError(path, what);
    };
    auto positive = [&](double v, const char* path) { require(std::isfinite(v) && v > 0.0, path, "must be a finite value > 0"); };
    auto non_negative = [&](double v, const char* path) { require(std::isfinite(v) && v >= 0.0, path, "must be a finite value >= 0"); };
    auto unit = [&](double v, const char* path) { require(v >= 0.0 && v <= 1.0, path, "must be in [0, 1]"); };

    for (int d : grid.dims) require(d >= 1 && d <= 1024, "grid.dims", "each extent must be in [1, 1024]");
    positive(grid.dx, "grid.dx");
    require(grid.origin.allFinite(), "grid.origin", "must be finite");
    auto plane = [&](const std::optional<PlaneSpec>& p, const char* path) {
        if (p) require(p->axis >= 0 && p->axis <= 2, path, "axis must be 0, 1 or 2");
    };
    plane(inlet, "inlet.axis");
    plane(outlet, "outlet.axis");
    require(!(inlet && outlet && *inlet == *outlet), "outlet", "must differ from the inlet plane");
    require(camera.P.allFinite(), "camera.P", "must be finite");
    require(camera.W.allFinite() && std::abs(camera.W.determinant()) > 1e-12, "camera.W", "must be finite and invertible");
    require(camera.S.allFinite() && std::abs(camera.S.determinant()) > 1e-12, "camera.S", "must be finite and invertible");
    require(camera.T.allFinite() && std::abs(camera.T.determinant()) > 1e-12, "camera.T", "must be finite and invertible");
    positive(frame_dt, "frame_dt");

    const auto& rc = reconstruct;
    unit(rc.prune.opacity_min, "reconstruct.prune_opacity_min");
    require(rc.prune.anisotropy_max >= 1.0, "reconstruct.prune_anisotropy_max", "must be >= 1");
    require(rc.fill_threshold > 0.0 && rc.fill_threshold <= 1.0, "reconstruct.fill_threshold", "must be in (0, 1]");
    require(rc.batch.n_min >= 1, "reconstruct.batch.n_min", "must be >= 1");
    require(rc.batch.n_max >= rc.batch.n_min, "reconstruct.batch.n_max", "must be >= n_min");
    positive(rc.batch.c, "reconstruct.batch.c");
    positive(rc.batch.psnr_cap, "reconstruct.batch.psnr_cap");
    positive(rc.batch.peak, "reconstruct.batch.peak");
    if (rc.mainstream_screen) require(rc.mainstream_screen->allFinite() && rc.mainstream_screen->norm() > 0.0, "reconstruct.mainstream_screen", "must be a finite non-zero vector");
    if (rc.mainstream_world) require(rc.mainstream_world->allFinite() && rc.mainstream_world->norm() > 0.0, "reconstruct.mainstream_world", "must be a finite non-zero vector");
    non_negative(rc.neighborhood_radius, "reconstruct.neighborhood_radius");
    positive(rc.weight_sigma, "reconstruct.weight_sigma");
    if (rc.boundary_layer) positive(*rc.boundary_layer, "reconstruct.boundary_layer");
    require(rc.projection_2d_iters >= 0, "reconstruct.projection_2d_iters", "must be >= 0");
    non_negative(rc.projection_2d_tol, "reconstruct.projection_2d_tol");
    require(rc.volumetric_iters >= 0, "reconstruct.volumetric_iters", "must be >= 0");
    non_negative(rc.volumetric_tol, "reconstruct.volumetric_tol");

    non_negative(loss.alpha, "loss.alpha");
    non_negative(loss.beta, "loss.beta");
    require(loss.alpha + loss.beta > 0.0, "loss.beta", "alpha and beta cannot both be 0");
    positive(loss.speed_floor, "loss.speed_floor");
    for (double w : loss.mask_weights) non_negative(w, "loss.mask_weights");

    const auto& op = optimizer;
    require(op.iterations >= 0, "optimizer.iterations", "must be >= 0");
    positive(op.lr, "optimizer.lr");
    require(std::isfinite(op.lr_decay) && op.lr_decay > 0.0 && op.lr_decay <= 1.0, "optimizer.lr_decay", "must be in (0, 1]");
    require(op.rollout_length >= 0 && op.rollout_length <= kMaxRolloutSteps, "optimizer.rollout_length", "must be in [0, 25]");
    require(op.min_rollout >= 1 && op.min_rollout <= kMaxRolloutSteps, "optimizer.min_rollout", "must be in [1, 25]");
    require(op.max_rollout >= op.min_rollout && op.max_rollout <= kMaxRolloutSteps, "optimizer.max_rollout", "must be in [min_rollout, 25]");
    positive(op.motion_reference, "optimizer.motion_reference");
    require(!op.free_params.empty(), "optimizer.free_params", "must name at least one parameter");
    positive(op.backward.aux_tolerance, "optimizer.aux_tolerance");
    require(op.backward.aux_max_iters >= 1, "optimizer.aux_max_iters", "must be >= 1");
    positive(op.cfl_limit, "optimizer.cfl_limit");
    non_negative(op.target_loss, "optimizer.target_loss");

    require(step.pressure_iters >= 1, "step.pressure_iters", "must be >= 1");
    require(step.solver != PressureSolver::StencilRecurrent || step.kernel.has_value(), "step.kernel", "required by the stencil_recurrent solver");
    if (step.kernel) {
        bool finite = std::isfinite(step.kernel->source_coeff) && std::isfinite(step.kernel->source_scale);
        for (double w : step.kernel->stencil) finite = finite && std::isfinite(w);
        require(finite, "step.kernel", "must be finite");
        non_negative(step.kernel->source_scale, "step.kernel.source_scale");
    }
    require(std::isfinite(step.fluctuation_omega), "step.fluctuation_omega", "must be finite");

    require(params.v_in.allFinite(), "params.v_in", "must be finite");
    non_negative(params.v_tilde_in, "params.v_tilde_in");
    require(params.v_out.allFinite(), "params.v_out", "must be finite");
    positive(params.rho, "params.rho");
    non_negative(params.nu, "params.nu");
    unit(params.bounce, "params.bounce");
    unit(params.damp, "params.damp");
    require(params.g.allFinite(), "params.g", "must be finite");
    positive(params.dt, "params.dt");

    require(simulate.particles_per_inlet_cell >= 0, "simulate.particles_per_inlet_cell", "must be >= 0");
    positive(simulate.particle_mass, "simulate.particle_mass");
}

}  // namespace fluidrecon
