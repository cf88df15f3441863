// gdro: run or sweep the two-player group DRO game from the command line.
//
//   gdro run   [--config FILE] [--key value ...]
//   gdro sweep [--config FILE] [--key value ...] --axis-r 1,5,10 --axis-seed 1,2,3
//
// Exit status: 0 success, 1 runtime failure, 2 configuration error.

#include "CLI11.hpp"
#include "gdro/cli.hpp"
#include "gdro/config.hpp"

#include <iostream>
#include <map>
#include <string>
#include <vector>

namespace {

struct FlagSet {
    std::map<std::string, std::string> values;
    std::string config_file;
    bool diagnostics = false;
    bool eps_phi = false;
};

void add_run_options(CLI::App& app, FlagSet& flags) {
    app.add_option("--config", flags.config_file, "key=value config file; flags override it");
    const std::vector<std::pair<std::string, std::string>> options = {
        {"algo", "q-player strategy: unified or hybrid"},
        {"env", "environment: synthetic or csv"},
        {"m", "number of groups (synthetic)"},
        {"dim", "feature dimension (synthetic)"},
        {"noise", "label flip probability (synthetic)"},
        {"similarity", "shared-direction weight of the ground-truth classifiers (synthetic)"},
        {"env-seed", "seed for the synthetic classifiers; defaults to --seed"},
        {"csv", "path of the grouped CSV file (csv)"},
        {"features", "comma-separated feature columns (csv)"},
        {"label", "label column (csv)"},
        {"positive", "label value mapped to +1 (csv)"},
        {"groups", "comma-separated group-key columns (csv)"},
        {"schedule", "fixed:R | uniform:LO:HI | uniform | file:PATH"},
        {"iters", "number of rounds T"},
        {"seed", "root seed"},
        {"eval-every", "metrics cadence in rounds"},
        {"eval-samples", "evaluation samples per group"},
        {"radius", "radius R of the hypothesis ball"},
        {"grad-bound", "gradient bound G, or auto"},
        {"x-max", "feature clipping norm, or auto"},
        {"kappa", "loss normalizer, or auto"},
        {"eps-phi-iters", "offline projected-gradient steps for the duality-gap estimate"},
        {"eps-phi-samples", "evaluation samples per group for the duality-gap estimate"},
        {"out", "output CSV (run) or directory (sweep)"},
        {"jobs", "concurrent sweep cells"},
    };
    for (const auto& [key, help] : options) {
        app.add_option_function<std::string>(
            "--" + key, [&flags, key = key](const std::string& v) { flags.values[key] = v; }, help);
    }
    app.add_flag("--diagnostics", flags.diagnostics,
                 "record losses of all groups (simulation only) for regret metrics");
    app.add_flag("--eps-phi", flags.eps_phi, "estimate the duality gap at every metrics row");
}

gdro::RunConfig resolve(const FlagSet& flags) {
    std::vector<std::pair<std::string, std::string>> settings;
    if (!flags.config_file.empty())
        settings = gdro::parse_config_text(gdro::read_text_file(flags.config_file, "config"));
    for (const auto& key : gdro::config_keys()) {
        if (auto it = flags.values.find(key); it != flags.values.end())
            settings.emplace_back(key, it->second);
    }
    if (flags.diagnostics) settings.emplace_back("diagnostics", "true");
    if (flags.eps_phi) settings.emplace_back("eps-phi", "true");
    return gdro::make_config(settings);
}

template <typename T>
std::vector<T> parse_axis(const std::string& key, const std::string& text) {
    std::vector<T> out;
    for (const auto& item : gdro::detail::parse_list(text))
        out.push_back(gdro::detail::parse_number<T>(key, item));
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Group distributionally robust optimization with flexible per-round budgets"};
    app.require_subcommand(1);

    FlagSet run_flags;
    auto* run_cmd = app.add_subcommand("run", "play one game and write its metrics CSV");
    add_run_options(*run_cmd, run_flags);

    FlagSet sweep_flags;
    std::string axis_r, axis_seed, axis_algo;
    auto* sweep_cmd = app.add_subcommand("sweep", "play a grid of games, one CSV per cell");
    add_run_options(*sweep_cmd, sweep_flags);
    sweep_cmd->add_option("--axis-r", axis_r, "comma-separated fixed budgets");
    sweep_cmd->add_option("--axis-seed", axis_seed, "comma-separated seeds");
    sweep_cmd->add_option("--axis-algo", axis_algo, "comma-separated strategies");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*run_cmd) return gdro::cmd_run(resolve(run_flags));
        gdro::RunConfig base = resolve(sweep_flags);
        gdro::SweepAxes axes;
        axes.fixed_r = parse_axis<std::int64_t>("axis-r", axis_r);
        axes.seeds = parse_axis<std::uint64_t>("axis-seed", axis_seed);
        for (const auto& a : gdro::detail::parse_list(axis_algo))
            axes.algorithms.push_back(gdro::parse_algorithm("axis-algo", a));
        return gdro::cmd_sweep(base, axes);
    } catch (const gdro::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    }
}
