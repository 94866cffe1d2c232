#pragma once

#include <map>
#include <string>
#include <vector>

#include "endcalc/common.hpp"

namespace endcalc {

/// Flat key=value configuration for the experiment runner. Unknown keys land
/// in `extras` (experiment-specific knobs). Round-trips through text.
struct ExperimentConfig {
    std::string experiment;
    std::string weight = "sqrt1pr2";  // one | sqrt1pr2 | exp-windowed
    int n_r = 64;
    int n_theta = 16;
    double L_r = 16.0;
    double r_origin = -8.0;
    std::vector<double> hbars{0.125, 0.0625, 0.03125, 0.015625};
    Complex z{-1.0, 0.0};
    int n = 2;
    std::uint64_t seed = 12345;
    std::string out_dir = ".";
    std::map<std::string, std::string> extras;

    std::string to_text() const;
    static ExperimentConfig from_text(const std::string& text);
    static ExperimentConfig from_file(const std::string& path);
    void set(const std::string& key, const std::string& value);
    std::string extra(const std::string& key, const std::string& fallback) const;
    double extra_num(const std::string& key, double fallback) const;
};

struct ExperimentResult {
    bool pass = false;
    std::string summary_json;  // also written to out_dir/summary.json
    std::string results_csv;   // also written to out_dir/results.csv
};

/// Runs one experiment, writing results.csv, summary.json, and (for the
/// experiments with a natural plot) plot.svg under cfg.out_dir.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Stable-order experiment table; made machine-readable with as_json.
std::string list_experiments_text(bool as_json);

const std::vector<std::string>& experiment_names();

}  // namespace endcalc
