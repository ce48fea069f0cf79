#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "metasharp/config.hpp"
#include "metasharp/experiment.hpp"

namespace {

struct Options {
    std::string config_path;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string mode;
    std::optional<std::size_t> threads;
};

void add_common(CLI::App* cmd, Options& opt) {
    cmd->add_option("--config", opt.config_path, "Path to the experiment config (JSON)")
        ->required();
    cmd->add_option("--out", opt.out, "Override the output directory");
    cmd->add_option("--seed", opt.seed, "Override the run seed");
    cmd->add_option("--mode", opt.mode,
                    "Override the adaptation mode (per_task_clone or sequential_literal)");
    cmd->add_option("--threads", opt.threads, "Override the worker thread count");
}

metasharp::ExperimentConfig resolve(const Options& opt) {
    metasharp::ExperimentConfig cfg = metasharp::load_config(opt.config_path);
    if (!opt.out.empty()) cfg.out = opt.out;
    if (opt.seed) cfg.seed = *opt.seed;
    if (!opt.mode.empty()) {
        try {
            cfg.mode = metasharp::adapt_mode_from_name(opt.mode);
        } catch (const std::invalid_argument& e) {
            throw metasharp::ConfigError(std::string("config: ") + e.what());
        }
    }
    if (opt.threads) {
        if (*opt.threads < 1) throw metasharp::ConfigError("config: --threads must be >= 1");
        cfg.threads = *opt.threads;
    }
    cfg.validate();
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sharpness-aware meta-learning experiment runner"};
    app.require_subcommand(1);

    Options opt;
    CLI::App* train = app.add_subcommand("train", "Train; writes trace, params, and manifest");
    CLI::App* sweep = app.add_subcommand("sweep", "Run the delta/alpha grid; writes sweep.csv");
    CLI::App* compare = app.add_subcommand("compare", "Equal-budget algorithm comparison report");
    CLI::App* bounds =
        app.add_subcommand("bounds", "Evaluate bound satisfaction on a stored run");
    for (CLI::App* cmd : {train, sweep, compare, bounds}) add_common(cmd, opt);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2; // bad flags are config errors; --help is success
    }

    try {
        const metasharp::ExperimentConfig cfg = resolve(opt);
        if (train->parsed())
            metasharp::cmd_train(cfg);
        else if (sweep->parsed())
            metasharp::cmd_sweep(cfg);
        else if (compare->parsed())
            metasharp::cmd_compare(cfg);
        else
            metasharp::cmd_bounds(cfg);
        return 0;
    } catch (const metasharp::ConfigError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}
