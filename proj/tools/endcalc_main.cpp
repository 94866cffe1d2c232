#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "endcalc/experiments.hpp"

using namespace endcalc;

int main(int argc, char** argv) {
    CLI::App app{"endcalc: semiclassical parametrix experiments on a cylinder with ends"};
    app.require_subcommand(0, 1);

    bool list_json = false;
    CLI::App* list_cmd = app.add_subcommand("list", "list experiments and what they check");
    list_cmd->add_flag("--json", list_json, "machine-readable output");

    std::string config_path, out_dir;
    std::vector<std::string> overrides;
    std::vector<CLI::App*> subcommands;
    for (const std::string& name : experiment_names()) {
        CLI::App* sub = app.add_subcommand(name, "run the " + name + " experiment");
        sub->add_option("--config", config_path, "key=value config file");
        sub->add_option("--out", out_dir, "output directory (results.csv, summary.json)");
        sub->add_option("--set", overrides, "override, key=value (repeatable)")
            ->take_all();
        subcommands.push_back(sub);
    }

    CLI11_PARSE(app, argc, argv);

    if (list_cmd->parsed()) {
        std::fputs(list_experiments_text(list_json).c_str(), stdout);
        return 0;
    }

    for (std::size_t i = 0; i < subcommands.size(); ++i) {
        if (!subcommands[i]->parsed()) continue;
        try {
            ExperimentConfig cfg;
            if (!config_path.empty()) cfg = ExperimentConfig::from_file(config_path);
            cfg.experiment = experiment_names()[i];
            for (const std::string& kv : overrides) {
                const std::size_t eq = kv.find('=');
                if (eq == std::string::npos)
                    throw Error("override must be key=value, got '" + kv + "'");
                cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
            }
            if (!out_dir.empty()) cfg.out_dir = out_dir;
            ExperimentResult res = run_experiment(cfg);
            std::printf("%s: %s (summary in %s/summary.json)\n", cfg.experiment.c_str(),
                        res.pass ? "pass" : "FAIL", cfg.out_dir.c_str());
            return res.pass ? 0 : 1;
        } catch (const std::exception& e) {
            std::fprintf(stderr, "endcalc %s: %s\n", experiment_names()[i].c_str(), e.what());
            return 2;
        }
    }

    std::fputs(app.help().c_str(), stdout);
    return 1;
}
