#include "opgen/cli.hpp"

#include <CLI11.hpp>

int main(int argc, char** argv) {
    CLI::App app{"Operator-form GENERIC mixture model: verification and simulation"};
    app.require_subcommand(1);
    opgen::CliOptions opt;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opt.config, "scenario configuration (JSON)")->required();
        sub->add_option("--out", opt.out, "output directory")->capture_default_str();
        sub->add_option("--seed", opt.seed, "seed for randomized checks")->capture_default_str();
        sub->add_option("--tol-scale", opt.tol_scale, "multiplier for every tolerance")->capture_default_str();
        sub->add_flag("--quiet", opt.quiet, "suppress progress output");
    };
    add_common(app.add_subcommand("verify", "run the invariant suite, write verify.json"));
    add_common(app.add_subcommand("simulate", "integrate the scenario, write trajectory.csv and summary.json"));
    add_common(app.add_subcommand("jacobi", "Jacobi refinement study, write jacobi.csv"));
    add_common(app.add_subcommand("eos-check", "EOS consistency against finite differences, write eos_check.json"));
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : opgen::exit_config_error;
    }
    return opgen::run_command(app.get_subcommands().front()->get_name(), opt);
}
