#include "commands.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace pathmed::cli;

int main(int argc, char** argv)
{
    CLI::App app{"Pathway discovery and mediation effects under stochastic shift interventions"};
    app.set_version_flag("--version", PATHMED_VERSION);
    app.require_subcommand(1);

    Options opt;
    std::uint64_t seed = 0;
    unsigned workers = 0;

    const auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--out", opt.out, "Output directory")->default_val(".");
        cmd->add_option("--seed", seed, "Master seed (overrides the config)");
        cmd->add_option("--workers", workers, "Worker threads (default: all cores)");
    };

    auto* analyze = app.add_subcommand("analyze", "Discover pathways and estimate NDE, NIE and TE");
    analyze->add_option("--data", opt.data, "Input CSV")->required();
    analyze->add_option("--config", opt.config, "Run configuration")->required();
    add_common(analyze);

    auto* discover = app.add_subcommand("discover", "Cross-fitted pathway discovery only");
    discover->add_option("--data", opt.data, "Input CSV")->required();
    discover->add_option("--config", opt.config, "Run configuration")->required();
    add_common(discover);

    auto* simulate = app.add_subcommand("simulate", "Run a simulation study");
    simulate->add_option("--scenario", opt.scenario, "dgp1, dgp1_quantized or dgp2_discovery");
    simulate->add_option("--scale", opt.scale, "desk or paper");
    simulate->add_option("--config", opt.config, "Optional configuration overrides");
    add_common(simulate);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    for (auto* cmd : {analyze, discover, simulate}) {
        if (cmd->count("--seed")) opt.seed = seed;
        if (cmd->count("--workers")) opt.workers = workers;
    }

    if (*analyze) return cmd_analyze(opt, std::cerr);
    if (*discover) return cmd_discover(opt, std::cerr);
    return cmd_simulate(opt, std::cerr);
}
