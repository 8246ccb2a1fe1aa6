#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "billiard/scenario.hpp"

namespace {

int run_and_report(const billiard::Scenario& scenario, const std::string& out_dir) {
    const billiard::RunResult res = billiard::run_scenario(scenario, out_dir);
    for (const auto& w : res.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    std::printf("run '%s' -> %s (exit %d)\n", scenario.name.c_str(), res.out_dir.c_str(),
                res.exit_code);
    return res.exit_code;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"square-billiard dynamics: classical ensembles, exact wavepacket evolution "
                 "and pilot-wave trajectories"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "run", preset_name;
    std::uint64_t seed_override = 0;

    auto* run_cmd = app.add_subcommand("run", "execute a scenario config (JSON)");
    run_cmd->add_option("config", config_path, "path to the scenario file")->required();
    run_cmd->add_option("--out", out_dir, "output directory (default: run)");

    auto* preset_cmd = app.add_subcommand("preset", "execute a named preset scenario");
    preset_cmd->add_option("name", preset_name, "preset name (see list-presets)")->required();
    preset_cmd->add_option("--out", out_dir, "output directory (default: run)");
    auto* seed_opt = preset_cmd->add_option("--seed", seed_override, "override the preset seed");

    auto* list_cmd = app.add_subcommand("list-presets", "print the preset registry");

    auto* validate_cmd = app.add_subcommand("validate", "parse and validate a config");
    validate_cmd->add_option("config", config_path, "path to the scenario file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) {
            return run_and_report(billiard::load_scenario(config_path), out_dir);
        }
        if (preset_cmd->parsed()) {
            billiard::Scenario s = billiard::preset_scenario(preset_name);
            if (seed_opt->count() > 0) s.seed = seed_override;
            return run_and_report(s, out_dir);
        }
        if (list_cmd->parsed()) {
            std::printf("%-14s %-6s %s\n", "name", "figure", "description");
            for (const auto& p : billiard::list_presets())
                std::printf("%-14s %-6s %s\n", p.name.c_str(), p.figure.c_str(),
                            p.description.c_str());
            return 0;
        }
        if (validate_cmd->parsed()) {
            const billiard::Scenario s = billiard::load_scenario(config_path);
            std::printf("valid: %s\n", s.name.c_str());
            return 0;
        }
    } catch (const billiard::ValidationError& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 2;
    }
    return 0;
}
