#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "fluidrecon/cli.hpp"
#include "fluidrecon/errors.hpp"
#include "fluidrecon/ply.hpp"
#include "fluidrecon/vgrd.hpp"
#include "scene_fixture.hpp"

using namespace fluidrecon;
namespace fs = std::filesystem;

namespace {

struct CliRun {
    int code = 0;
    std::string out, err;
};

CliRun cli(std::vector<std::string> args)
{
    args.insert(args.begin(), "fluidrecon");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    CliRun r;
    r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("fluidrecon_unit_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string config_path_error(const std::string& text)
{
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e.path();
    }
    return "";
}

}  // namespace

TEST_CASE("VGRD encoding, header and corrupt input")
{
    GridField f;
    f.dims = {2, 3, 1};
    f.dx = 0.5f;
    f.channels = 2;
    f.data = {1, 2, 3, 4, 5, 6, -1, -2, -3, -4, -5, -6};
    const auto bytes = encode_vgrd(f);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "VGRD");
    CHECK(bytes.size() == 4 + 4 + 12 + 4 + 12 + 4 + 12 * 4);
    CHECK(decode_vgrd(bytes) == f);

    auto truncated = bytes;
    truncated.pop_back();
    CHECK_THROWS_AS(decode_vgrd(truncated), ParseError);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(decode_vgrd(bad_magic), ParseError);
    CHECK_THROWS_AS(read_vgrd("/nonexistent/field.vgrd"), MissingInput);
}

TEST_CASE("PLY ascii and binary agree and truncation is reported")
{
    const auto cloud = fixtures::box_cloud(0, 1, 0, 1, 0, 0, 0.1);
    const PlyData bin = decode_ply(encode_ply(cloud_to_ply(cloud)));
    const PlyData asc = decode_ply(encode_ply(cloud_to_ply(cloud, {}, PlyFormat::Ascii)));
    CHECK(bin.elements.at(0).values == asc.elements.at(0).values);
    auto bytes = encode_ply(cloud_to_ply(cloud));
    bytes.resize(bytes.size() - 3);
    CHECK_THROWS_AS(decode_ply(bytes), ParseError);
    const std::string junk = "ply\nformat binary_little_endian 1.0\nelement vertex 1\nproperty flot x\nend_header\n";
    CHECK_THROWS_AS(decode_ply(std::vector<std::uint8_t>(junk.begin(), junk.end())), ParseError);
}

TEST_CASE("config errors name the offending field")
{
    CHECK(config_path_error(R"({"grid": {"dxx": 1}})") == "grid.dxx");
    CHECK(config_path_error(R"({"optimizer": {"lr": "fast"}})") == "optimizer.lr");
    CHECK(config_path_error(R"({"grid": {"dx": -1}})") == "grid.dx");
    CHECK(config_path_error(R"({"optimizer": {"free_params": ["rho", "mass"]}})") == "optimizer.free_params[1]");
    CHECK_THROWS_AS(parse_config("{\"grid\": "), ParseError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), MissingInput);
}

TEST_CASE("reference config round-trips and overrides apply")
{
    const PipelineConfig d = parse_config(reference_config());
    CHECK(config_to_json(d) == reference_config());
    CHECK(config_to_json(parse_config("{}")) == reference_config());

    const fs::path dir = scratch("overrides");
    fixtures::write_config(dir / "c.json", fixtures::scene_config());
    const PipelineConfig o = load_config_with_overrides((dir / "c.json").string(), {"optimizer.lr=0.25", "inlet=null"});
    CHECK(o.optimizer.lr == 0.25);
    CHECK_FALSE(o.inlet.has_value());
    CHECK(o.grid.dims == std::array<int, 3>{8, 8, 8});
    CHECK_THROWS_AS(load_config_with_overrides("", {"optimizer.nope=1"}), ConfigError);
    CHECK_THROWS_AS(load_config_with_overrides("", {"=1"}), ConfigError);
}

TEST_CASE("mutated config text is rejected cleanly")
{
    const std::string ref = reference_config();
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<std::size_t> pos(0, ref.size() - 1);
    const std::string alphabet = "{}[]:,\"0123456789.-eE truefalsn";
    std::uniform_int_distribution<std::size_t> ch(0, alphabet.size() - 1);
    int accepted = 0;
    for (int t = 0; t < 300; ++t) {
        std::string s = ref;
        for (int m = 0; m < 3; ++m) s[pos(rng)] = alphabet[ch(rng)];
        try {
            parse_config(s);
            ++accepted;
        } catch (const ParseError&) {
        } catch (const std::invalid_argument&) {
        }
    }
    CHECK(accepted < 300);
}

TEST_CASE("params file round-trips exactly and rejects bad lines")
{
    const fs::path dir = scratch("params");
    SimParams p;
    p.v_in = Vec3(0.1, 1.0 / 3.0, -2e-7);
    p.nu = 1.2345678901234567e-5;
    p.g = Vec3(0.5, -9.80665, 0.0);
    write_params_file(dir / "p.txt", p, NormalizedParams::defaults(p));
    const SimParams q = read_params_file(dir / "p.txt");
    CHECK(to_vector(q) == to_vector(p));

    std::ofstream(dir / "bad.txt") << "rho = 1000\nviscosity = 3\n";
    CHECK_THROWS_AS(read_params_file(dir / "bad.txt"), ParseError);
    std::ofstream(dir / "dup.txt") << "rho = 1000\nrho = 1000\n";
    CHECK_THROWS_AS(read_params_file(dir / "dup.txt"), ParseError);
    CHECK_THROWS_AS(read_params_file(dir / "missing.txt"), MissingInput);
}

TEST_CASE("parameter edits, file numbering and particle summaries")
{
    SimParams p;
    apply_param_edit(p, "g=0,9.81,0");
    CHECK(p.g == Vec3(0, 9.81, 0));
    apply_param_edit(p, "nu=1e-5");
    CHECK(p.nu == 1e-5);
    CHECK_THROWS_AS(apply_param_edit(p, "g=1,2"), std::invalid_argument);
    CHECK_THROWS_AS(apply_param_edit(p, "mass=2"), std::invalid_argument);
    CHECK(numbered_name("frame", 12, ".ply") == "frame_0012.ply");

    ParticleSet ps;
    ps.push_default(Vec3(0, 0, 0), Vec3(3, 0, 0), 2.0, 0.1);
    ps.push_default(Vec3(1, 2, 3), Vec3::Zero(), 2.0, 0.1);
    const FrameSummary s = summarize_particles(ps);
    CHECK(s.count == 2);
    CHECK(s.kinetic_energy == doctest::Approx(9.0));
    CHECK(s.centroid.isApprox(Vec3(0.5, 1.0, 1.5)));

    const PlyData ply = particles_to_ply(ps, {});
    const ParticleSet back = particles_from_ply(decode_ply(encode_ply(ply)), 1.0);
    CHECK(back.velocity[0] == Vec3(3, 0, 0));
    CHECK(back.mass[1] == 2.0);
}

TEST_CASE("cell types survive the VGRD encoding")
{
    auto cfg = fixtures::scene_config();
    SimGrid g = make_grid(cfg.grid);
    for (std::size_t i = 0; i < g.size(); ++i) g.cells[i] = static_cast<CellType>(i % 6);
    const SimGrid back = grid_from_cells_field(decode_vgrd(encode_vgrd(cells_field(g))));
    CHECK(back.cells == g.cells);
}

TEST_CASE("command line usage and reference config")
{
    CHECK(cli({}).code == kExitUsage);
    CHECK(cli({"frobnicate"}).code == kExitUsage);
    const CliRun r = cli({"--reference-config"});
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("\"optimizer\"") != std::string::npos);
    CHECK(cli({"-D", "grid.dx=-1", "--reference-config"}).code == kExitOk);
    const fs::path dir = scratch("usage");
    CHECK(cli({"-D", "grid.dx=-1", "export", "--trajectory", dir.string(), "--output", dir.string()}).code == kExitUsage);
}

TEST_CASE("reconstruct exit codes and a static scene")
{
    const fs::path dir = scratch("recon");
    fixtures::SceneSpec still;
    still.flow_speed = 0.0;
    still.with_hole = false;
    fixtures::write_scene(dir / "scene", still);
    fixtures::write_config(dir / "c.json", fixtures::scene_config());
    const std::string cfg = (dir / "c.json").string();

    const CliRun ok = cli({"-c", cfg, "--log-jsonl", (dir / "log.jsonl").string(), "reconstruct", "--input",
                           (dir / "scene").string(), "--output", (dir / "out").string()});
    REQUIRE(ok.code == kExitOk);
    CHECK(fs::file_size(dir / "log.jsonl") > 0);
    for (const auto& f : numbered_files(dir / "out", "velocity", ".vgrd")) {
        const GridField v = read_vgrd(f.string());
        for (float x : v.data) CHECK(x == 0.0f);
    }

    // A frame set where the guidance has a single frame cannot be optimized.
    fs::create_directories(dir / "single");
    fs::copy_file(dir / "out" / "cells.vgrd", dir / "single" / "cells.vgrd");
    fs::copy_file(dir / "out" / "velocity_0000.vgrd", dir / "single" / "velocity_0000.vgrd");
    CHECK(cli({"-c", cfg, "optimize", "--guidance", (dir / "single").string(), "--output", (dir / "o").string()}).code ==
          kExitUsage);

    fs::remove(dir / "scene" / "depth_0001.f32");
    const CliRun missing = cli({"-c", cfg, "reconstruct", "--input", (dir / "scene").string(), "--output",
                                (dir / "out2").string()});
    CHECK(missing.code == kExitParse);
    CHECK(missing.err.find("depth_0001") != std::string::npos);
}

TEST_CASE("simulate: zero frames, gravity flip and export")
{
    const fs::path dir = scratch("simulate");
    fs::create_directories(dir / "asset");
    write_ply((dir / "asset" / "cloud.ply").string(), cloud_to_ply(fixtures::box_cloud(2, 5, 2, 5, 2, 5, 0.1)));
    SimParams p;
    p.nu = 1e-5;
    write_params_file(dir / "asset" / "params.txt", p, NormalizedParams::defaults(p));
    fixtures::write_config(dir / "c.json", fixtures::scene_config());
    const std::vector<std::string> base{"-c", (dir / "c.json").string(), "-D", "inlet=null", "-D", "outlet=null"};
    auto run = [&](std::vector<std::string> extra) {
        std::vector<std::string> a = base;
        a.insert(a.end(), extra.begin(), extra.end());
        return cli(a);
    };

    REQUIRE(run({"simulate", "--asset", (dir / "asset").string(), "--frames", "0", "--output", (dir / "t0").string()}).code ==
            kExitOk);
    CHECK(numbered_files(dir / "t0", "frame", ".ply").size() == 1);

    auto centroid_rise = [&](const fs::path& traj) {
        const auto frames = numbered_files(traj, "frame", ".ply");
        const auto a = summarize_particles(particles_from_ply(read_ply(frames.front().string()), 1.0));
        const auto b = summarize_particles(particles_from_ply(read_ply(frames.back().string()), 1.0));
        return b.centroid.y() - a.centroid.y();
    };
    REQUIRE(run({"simulate", "--asset", (dir / "asset").string(), "--frames", "2", "--output", (dir / "down").string()}).code == kExitOk);
    REQUIRE(run({"simulate", "--asset", (dir / "asset").string(), "--frames", "2", "--set", "g=0,9.81,0", "--output",
                 (dir / "up").string()}).code == kExitOk);
    CHECK(centroid_rise(dir / "down") < 0.0);
    CHECK(centroid_rise(dir / "up") > 0.0);

    // No gravity, nothing moving: an equilibrium.
    REQUIRE(run({"simulate", "--asset", (dir / "asset").string(), "--frames", "2", "--set", "g=0,0,0", "--output",
                 (dir / "still").string()}).code == kExitOk);
    const auto still = numbered_files(dir / "still", "frame", ".ply");
    REQUIRE(still.size() == 3);
    CHECK(read_ply(still[0].string()).elements.at(0).values == read_ply(still[2].string()).elements.at(0).values);

    // Editing dt past the CFL bound is refused unless forced.
    CHECK(run({"simulate", "--asset", (dir / "asset").string(), "--frames", "1", "--set", "v_in=100,0,0", "--output",
               (dir / "cfl").string()}).code == kExitUsage);

    REQUIRE(run({"export", "--trajectory", (dir / "down").string(), "--output", (dir / "exp").string()}).code == kExitOk);
    std::ifstream csv(dir / "exp" / "summary.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == "frame,count,centroid_x,centroid_y,centroid_z,kinetic_energy");
    CHECK(numbered_files(dir / "exp", "velocity", ".vgrd").size() == 3);
}
