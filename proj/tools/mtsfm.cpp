// mtsfm - command-line front end: waveform synthesis, analysis exports and
// family optimization, plus the named figure-reproduction recipes.

#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mtsfm/cli.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string recipe_name;
    std::string out_dir;
    std::string weights;
    std::optional<std::uint64_t> seed;
    std::optional<double> oversample;
    std::optional<int> threads;
};

void attach_common(CLI::App* app, CommonArgs& args) {
    app->add_option("--config", args.config_path, "JSON run configuration");
    app->add_option("--recipe", args.recipe_name,
                    "named reproduction recipe (fig1, fig2, fig3, fig4)");
    app->add_option("--out", args.out_dir, "output directory");
    app->add_option("--seed", args.seed, "RNG seed override");
    app->add_option("--weights", args.weights,
                    "weight case override: equal, ccf-heavy, acf-heavy or custom");
    app->add_option("--oversample", args.oversample, "sampling oversample ratio (>= 2)");
    app->add_option("--threads", args.threads,
                    "worker threads (results are identical for any value)");
}

mtsfm::cli::RunConfig resolve(const CommonArgs& args, std::optional<mtsfm::cli::RunMode> mode) {
    using namespace mtsfm::cli;
    if (args.config_path.empty() && args.recipe_name.empty())
        throw ConfigError("/", "either --config or --recipe is required");
    if (!args.config_path.empty() && !args.recipe_name.empty())
        throw ConfigError("/", "--config and --recipe are mutually exclusive");

    RunConfig cfg = args.config_path.empty() ? recipe(args.recipe_name)
                                             : parse_config_file(args.config_path);
    if (mode && cfg.mode != *mode)
        throw ConfigError("/mode", "configuration mode does not match the subcommand");
    if (!args.out_dir.empty()) cfg.output_dir = args.out_dir;
    if (args.seed) cfg.seed = *args.seed;
    if (args.oversample) {
        if (!(*args.oversample >= 2.0)) throw ConfigError("/oversample", "must be >= 2");
        cfg.oversample = *args.oversample;
    }
    if (args.threads) {
        if (*args.threads < 1) throw ConfigError("/threads", "must be >= 1");
        cfg.threads = *args.threads;
    }
    if (!args.weights.empty()) {
        if (cfg.mode != RunMode::OptimizeFamily)
            throw ConfigError("/weights", "--weights applies to optimize-family runs only");
        if (args.weights != "equal" && args.weights != "ccf-heavy" &&
            args.weights != "acf-heavy" && args.weights != "custom")
            throw ConfigError("/weights", "unknown weight case \"" + args.weights + "\"");
        if (args.weights != "custom") cfg.family.weights_label = args.weights;
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    using namespace mtsfm::cli;

    CLI::App app{"MTSFM waveform-family design toolkit"};
    app.require_subcommand(0, 1);

    CommonArgs top_args;
    attach_common(&app, top_args);

    CommonArgs synth_args, analyze_args, optimize_args;
    CLI::App* synth = app.add_subcommand("synth", "synthesize a waveform and export its data");
    attach_common(synth, synth_args);
    CLI::App* analyze =
        app.add_subcommand("analyze", "correlation/ambiguity analysis of one or two waveforms");
    attach_common(analyze, analyze_args);
    CLI::App* optimize =
        app.add_subcommand("optimize-family", "solve the family sidelobe-design problem");
    attach_common(optimize, optimize_args);

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg;
        if (synth->parsed())
            cfg = resolve(synth_args, RunMode::Synth);
        else if (analyze->parsed())
            cfg = resolve(analyze_args, RunMode::Analyze);
        else if (optimize->parsed())
            cfg = resolve(optimize_args, RunMode::OptimizeFamily);
        else
            cfg = resolve(top_args, std::nullopt);
        return static_cast<int>(run(cfg));
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return static_cast<int>(ExitCode::Config);
    } catch (const IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return static_cast<int>(ExitCode::Io);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
