#include "fluidrecon/cli.hpp"

#include <fstream>
#include <ostream>

#include <CLI11.hpp>

#include "fluidrecon/errors.hpp"
#include "fluidrecon/pipeline.hpp"

namespace fluidrecon {

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Fluid reconstruction and parameter optimization pipeline", "fluidrecon"};
    app.require_subcommand(0, 1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::string log_path;
    bool print_reference = false;
    app.add_option("-c,--config", config_path, "JSON config file");
    app.add_option("-D,--define", overrides, "Config override key.path=value (repeatable)");
    app.add_option("--log-jsonl", log_path, "Append machine-readable stage diagnostics to this file");
    app.add_flag("--reference-config", print_reference, "Print every config key with its default and exit");

    std::string input, output, guidance, init, asset, trajectory;
    int frames = 0;
    std::vector<std::string> edits, obstacles;
    bool force = false;

    auto* rec = app.add_subcommand("reconstruct", "Velocity grids and cleaned clouds from screen observations");
    rec->add_option("--input", input, "Directory with per-frame rasters and clouds")->required();
    rec->add_option("--output", output, "Output directory")->required();

    auto* opt = app.add_subcommand("optimize", "Fit simulation parameters to guidance grids");
    opt->add_option("--guidance", guidance, "Directory with cells.vgrd and velocity_NNNN.vgrd")->required();
    opt->add_option("--init", init, "Initial parameter file (defaults to the config's params)");
    opt->add_option("--output", output, "Output directory")->required();

    auto* sim = app.add_subcommand("simulate", "Re-simulate an asset with APIC particles");
    sim->add_option("--asset", asset, "Directory with cloud.ply, params.txt and optional cells.vgrd")->required();
    sim->add_option("--frames", frames, "Number of frames to simulate")->check(CLI::NonNegativeNumber);
    sim->add_option("--set", edits, "Parameter edit, e.g. g=0,9.81,0 or nu=1e-5 (repeatable)");
    sim->add_option("--obstacle", obstacles, "SOLID box i0,j0,k0,i1,j1,k1 (repeatable)");
    sim->add_flag("--force", force, "Run even when the edited parameters violate the CFL bound");
    sim->add_option("--output", output, "Output directory")->required();

    auto* exp = app.add_subcommand("export", "Velocity snapshots and per-frame summaries of a trajectory");
    exp->add_option("--trajectory", trajectory, "Directory with frame_NNNN.ply")->required();
    exp->add_option("--output", output, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        app.exit(e, out, err);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitUsage;
    }

    try {
        if (print_reference) {
            out << reference_config();
            return kExitOk;
        }
        if (app.get_subcommands().empty()) {
            err << app.help();
            return kExitUsage;
        }
        const PipelineConfig cfg = load_config_with_overrides(config_path, overrides);
        std::ofstream log;
        if (!log_path.empty()) {
            log.open(log_path, std::ios::app);
            if (!log) throw std::runtime_error("cannot open log file " + log_path);
        }
        Diagnostics diag(err, log_path.empty() ? nullptr : &log);

        if (rec->parsed()) return cmd_reconstruct({cfg, input, output}, diag);
        if (opt->parsed()) {
            OptimizeArgs a{cfg, guidance, std::nullopt, output};
            if (!init.empty()) a.init_params = init;
            return cmd_optimize(a, diag);
        }
        if (sim->parsed()) return cmd_simulate({cfg, asset, frames, edits, obstacles, force, output}, diag);
        return cmd_export({cfg, trajectory, output}, diag);
    } catch (const MissingInput& e) {
        err << "error: " << e.what() << "\n";
        return kExitParse;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitParse;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitParse;
    }
}

}  // namespace fluidrecon
