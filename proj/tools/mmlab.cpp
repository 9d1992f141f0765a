// mmlab: command-line runner for dataset summaries, bound audits and sweeps.
//
//   mmlab info              --config exp.ini
//   mmlab audit             --config exp.ini --seed-list 1,2,3
//   mmlab sweep-beta        --config exp.ini --out rows.csv --jobs 4
//   mmlab sweep-modalities  --config exp.ini --format json
//
// Every configuration key can be given as --<key> VALUE and wins over the file.
// MMLAB_MAX_CELLS caps the size of any enumerated table.

#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "mmlab/config.hpp"
#include "mmlab/runner.hpp"

namespace {

void emit(const std::string& text, const std::string& path) {
    if (path.empty()) {
        std::cout << text;
        std::cout.flush();
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw mmlab::Error("cannot write '" + path + "'");
    out << text;
    if (!out) throw mmlab::Error("write to '" + path + "' failed");
}

std::string dump(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

int run(const std::string& command, const mmlab::ExperimentConfig& cfg) {
    using namespace mmlab;
    if (command == "info") {
        emit(dump(info_json(cfg)), cfg.out);
        return kExitOk;
    }
    if (command == "audit") {
        const AuditOutcome outcome = run_audit(cfg);
        emit(dump(outcome.report), cfg.out);
        if (outcome.failures > 0) {
            std::cerr << "mmlab: " << outcome.failures << " audit(s) failed\n";
            return kExitAuditFailure;
        }
        return kExitOk;
    }
    const bool beta = command == "sweep-beta";
    const auto rows = beta ? sweep_beta(cfg) : sweep_modalities(cfg);
    emit(cfg.format == "json" ? dump(rows_to_json(rows, command)) : rows_to_csv(rows), cfg.out);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Exact enumeration lab for mixture-based multimodal VAEs on discrete data", "mmlab"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    app.add_option("--config", config_path, "Experiment config file (INI style)")->check(CLI::ExistingFile);

    // One string flag per config key; only flags that were given are applied.
    std::map<std::string, std::string> flag_values;
    for (const auto& [key, section] : mmlab::config_keys()) {
        flag_values[key];
        auto* opt = app.add_option("--" + key, flag_values[key], "[" + section + "] " + key);
        opt->group(key == "out" || key == "jobs" || key == "format" ? "Options" : "Config overrides");
    }
    std::string seed_list;
    app.add_option("--seed-list", seed_list, "Comma-separated seeds (same as --seeds)");

    for (const char* name : {"info", "audit", "sweep-beta", "sweep-modalities"}) app.add_subcommand(name);
    app.get_subcommand("info")->description("Entropy, pairwise MI and discrepancy of each preset");
    app.get_subcommand("audit")->description("Bound audits at init and after training, per seed and family");
    app.get_subcommand("sweep-beta")->description("Train over the beta list; one row per (family, beta, seed)");
    app.get_subcommand("sweep-modalities")->description("Train over the M list; one row per (family, M, beta, seed)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return mmlab::kExitConfig;
    }

    try {
        mmlab::RawConfig raw;
        if (!config_path.empty()) raw = mmlab::load_config_file(config_path);
        std::map<std::string, std::string> overrides;
        for (const auto& [key, value] : flag_values) {
            if (app.count("--" + key) > 0) overrides[key] = value;
        }
        if (app.count("--seed-list") > 0) {
            if (overrides.count("seeds")) throw mmlab::ConfigError("--seed-list and --seeds are mutually exclusive");
            overrides["seeds"] = seed_list;
        }
        mmlab::apply_overrides(raw, overrides);
        const mmlab::ExperimentConfig cfg = mmlab::build_config(raw);
        return run(app.get_subcommands().front()->get_name(), cfg);
    } catch (const mmlab::ConfigError& e) {
        std::cerr << "mmlab: config error: " << e.what() << "\n";
        return mmlab::kExitConfig;
    } catch (const mmlab::BudgetError& e) {
        std::cerr << "mmlab: budget exceeded: " << e.what() << "\n";
        return mmlab::kExitBudget;
    } catch (const mmlab::CapacityError& e) {
        std::cerr << "mmlab: budget exceeded: " << e.what() << "\n";
        return mmlab::kExitBudget;
    } catch (const std::exception& e) {
        std::cerr << "mmlab: error: " << e.what() << "\n";
        return mmlab::kExitError;
    }
}
