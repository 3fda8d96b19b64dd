#include <CLI11.hpp>

#include "mcisac/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"mcisac: multi-cell sensing/communication precoder design and evaluation"};
    app.require_subcommand(1);

    mcisac::ExperimentSpec spec;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string mode, gamma_spec;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", spec.config_path, "scenario configuration file")
            ->required()
            ->check(CLI::ExistingFile);
        cmd->add_option("--output", spec.output_dir, "output directory (created if missing)");
        cmd->add_option_function<std::uint64_t>(
               "--seed", [&](std::uint64_t v) { seed = v; seed_set = true; },
               "channel/extraction seed override");
        cmd->add_option("--override", spec.overrides,
                        "config override section.key=value (repeatable)");
        cmd->add_option("--parallel", spec.parallel, "max concurrent jobs")
            ->check(CLI::PositiveNumber);
        cmd->add_option("--mode", mode, "design mode: cbf | comp | baseline");
    };

    CLI::App* design = app.add_subcommand("design", "run one alternating design + evaluation");
    add_common(design);
    CLI::App* sweep =
        app.add_subcommand("sweep", "RCRB vs min-SINR target sweep (rcrb_vs_sinr.csv)");
    add_common(sweep);
    sweep->add_option("--sweep-gamma-db", gamma_spec, "gamma grid START:STOP:STEP in dB");
    CLI::App* beam = app.add_subcommand("beampattern", "transmit patterns for both modes");
    add_common(beam);
    CLI::App* gap = app.add_subcommand("baseline-gap",
                                       "expected vs actual RCRB of the no-coordination baseline");
    add_common(gap);
    gap->add_option("--sweep-gamma-db", gamma_spec, "gamma grid START:STOP:STEP in dB");
    CLI::App* crb = app.add_subcommand("validate-crb", "Monte-Carlo RMSE against the bound");
    add_common(crb);

    CLI11_PARSE(app, argc, argv);

    spec.command = app.get_subcommands().front()->get_name();
    if (seed_set) spec.seed = seed;
    if (!mode.empty()) spec.mode = mode;
    if (!gamma_spec.empty()) spec.sweep_gamma_db = gamma_spec;
    return mcisac::run(spec);
}
