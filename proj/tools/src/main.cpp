#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "commands.hpp"
#include "config.hpp"

int main(int argc, char** argv) {
    using namespace gpenkf::cli;

    CLI::App app{"Emulator-based ensemble Kalman calibration of cardiac tissue models"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::string> output_dir;
    bool dry_run = false;

    struct Entry {
        const char* name;
        const char* help;
    };
    const Entry entries[] = {
        {"design", "Build the training ensemble (sampling, screening, simulation)"},
        {"emulate", "Fit the emulator bank and report held-out R^2"},
        {"calibrate", "Run the ensemble Kalman calibration"},
        {"mcmc", "Run the reference MCMC sampler"},
        {"study", "Run the multi-case synthetic calibration study"},
        {"verify", "Re-check config and content hashes of an output directory"},
    };
    for (const auto& e : entries) {
        CLI::App* sub = app.add_subcommand(e.name, e.help);
        sub->add_option("--config", config_path, "JSON configuration file")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "Master seed (overrides the config)");
        sub->add_option("--threads", threads, "Worker threads (overrides the config)")->check(CLI::PositiveNumber);
        sub->add_option("--output-dir", output_dir, "Output directory (overrides the config)");
        sub->add_flag("--dry-run", dry_run, "Validate the configuration and inputs without writing anything");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    CommandContext ctx;
    ctx.out = &std::cout;
    ctx.err = &std::cerr;
    ctx.dry_run = dry_run;
    try {
        ctx.config = load_config(config_path);
    } catch (const ConfigError& e) {
        std::cerr << "ConfigError: " << e.what() << "\n";
        return kExitUsage;
    }
    if (seed) ctx.config.seed = *seed;
    if (threads) ctx.config.threads = *threads;
    if (output_dir) ctx.config.output_dir = *output_dir;

    return run_command(app.get_subcommands().front()->get_name(), ctx);
}
