// Acceptance suite: runs every experiment and prints one line per criterion.
// Exit status is nonzero if any criterion fails.

#include <cstdio>
#include <string>

#include <json.hpp>

#include "endcalc/experiments.hpp"

using namespace endcalc;
using nlohmann::json;

namespace {

int g_failures = 0;

void report(int index, const std::string& name, bool pass, const std::string& detail) {
    std::printf("criterion %02d %-28s %s  (%s)\n", index, name.c_str(),
                pass ? "PASS" : "FAIL", detail.c_str());
    if (!pass) ++g_failures;
}

std::string num(const json& j, const char* key) {
    return format_double(j.at(key).get<double>());
}

}  // namespace

int main() {
    const std::string out_base = "acceptance_out";

    json residual, selfadj, blocks, scaling, chart, exprs;
    try {
        ExperimentConfig cfg;
        cfg.experiment = "residual-scaling";
        cfg.out_dir = out_base + "/residual-scaling";
        residual = json::parse(run_experiment(cfg).summary_json);

        cfg = ExperimentConfig{};
        cfg.experiment = "selfadjoint";
        cfg.out_dir = out_base + "/selfadjoint";
        selfadj = json::parse(run_experiment(cfg).summary_json);

        cfg = ExperimentConfig{};
        cfg.experiment = "block-decay";
        cfg.out_dir = out_base + "/block-decay";
        blocks = json::parse(run_experiment(cfg).summary_json);

        cfg = ExperimentConfig{};
        cfg.experiment = "scaling-identity";
        cfg.out_dir = out_base + "/scaling-identity";
        scaling = json::parse(run_experiment(cfg).summary_json);

        cfg = ExperimentConfig{};
        cfg.experiment = "chart-transfer";
        cfg.out_dir = out_base + "/chart-transfer";
        chart = json::parse(run_experiment(cfg).summary_json);

        cfg = ExperimentConfig{};
        cfg.experiment = "expr-selftest";
        cfg.out_dir = out_base + "/expr-selftest";
        exprs = json::parse(run_experiment(cfg).summary_json);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "acceptance: experiment failed to run: %s\n", e.what());
        return 2;
    }

    report(1, "exact-parametrix-baseline", residual.at("baseline_pass").get<bool>(),
           "max residual " + num(residual, "baseline_max_residual") + " <= 1e-9");

    {
        bool ok = true;
        std::string detail;
        for (int n = 0; n <= 2; ++n) {
            const std::string key = "slope_N" + std::to_string(n);
            ok = ok && residual.at(key + "_pass").get<bool>();
            if (n) detail += ", ";
            detail += key + " = " + num(residual, key.c_str());
        }
        report(2, "residual-order", ok, detail + " vs N + 0.8");
    }

    report(3, "symbolic-cancellation", residual.at("cancellation_pass").get<bool>(),
           "defect grades 1..2 normalize to zero for all three operators");

    {
        const bool sym = selfadj.at("symmetry_defect").get<double>() <= 1e-8;
        const bool norms = selfadj.at("defect_norm_plus_at_smallest").get<double>() < 1.0 &&
                           selfadj.at("defect_norm_minus_at_smallest").get<double>() < 1.0;
        const bool neu = selfadj.at("neumann_residual").get<double>() <= 1e-3;
        report(4, "selfadjointness-pipeline", sym && norms && neu,
               "symmetry " + num(selfadj, "symmetry_defect") + ", ||R(+-i)|| " +
                   num(selfadj, "defect_norm_plus_at_smallest") + " < 1, Neumann " +
                   num(selfadj, "neumann_residual") + " <= 1e-3");
    }

    report(5, "cutoff-commutator", selfadj.at("commutator_slope").get<double>() >= 0.8,
           "slope " + num(selfadj, "commutator_slope") + " >= 0.8");

    {
        const bool ok = blocks.at("decay_exponent").get<double>() >= 2.0 &&
                        blocks.at("identity_far_block_max").get<double>() <= 1e-12;
        report(6, "block-decay", ok,
               "exponent " + num(blocks, "decay_exponent") + " >= 2, identity far blocks " +
                   num(blocks, "identity_far_block_max") + " <= 1e-12");
    }

    {
        bool ok = true;
        double worst = 0.0;
        for (const char* key : {"scaling_2_2_t1", "scaling_1_3_t0", "scaling_2_3_t0.5"}) {
            const double v = scaling.at(key).get<double>();
            worst = std::max(worst, v);
            ok = ok && v <= 1e-6;
        }
        report(7, "scaling-conjugation", ok, "worst defect " + format_double(worst) + " <= 1e-6");
    }

    {
        const bool ok = scaling.at("commutation_defect").get<double>() <= 1e-8 &&
                        scaling.at("adjoint_defect").get<double>() <= 1e-8 &&
                        scaling.at("weyl_symmetry_defect").get<double>() <= 1e-8;
        report(8, "quantization-relations", ok,
               "commutation " + num(scaling, "commutation_defect") + ", adjoint " +
                   num(scaling, "adjoint_defect") + ", Weyl symmetry " +
                   num(scaling, "weyl_symmetry_defect") + " <= 1e-8");
    }

    {
        const double ratio = chart.at("halving_ratio").get<double>();
        report(9, "chart-transfer", ratio >= 0.35 && ratio <= 0.65,
               "halving ratio " + format_double(ratio) + " in [0.35, 0.65], C = " +
                   num(chart, "transfer_constant"));
    }

    {
        const bool ok = exprs.at("fd_passes").get<int>() == 20 &&
                        exprs.at("mixed_partial_defect").get<double>() <= 1e-10;
        report(10, "expression-engine", ok,
               std::to_string(exprs.at("fd_passes").get<int>()) +
                   "/20 fd checks <= 1e-6, mixed partials " +
                   num(exprs, "mixed_partial_defect") + " <= 1e-10");
    }

    if (g_failures) {
        std::printf("acceptance: %d criterion(s) FAILED\n", g_failures);
        return 1;
    }
    std::printf("acceptance: all 10 criteria passed\n");
    return 0;
}
