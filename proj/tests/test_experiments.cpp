#include "doctest.h"

#include <cstdio>
#include <fstream>

#include "endcalc/experiments.hpp"

using namespace endcalc;

TEST_CASE("experiment config round-trips through text") {
    ExperimentConfig cfg;
    cfg.experiment = "residual-scaling";
    cfg.weight = "exp-windowed";
    cfg.n_r = 128;
    cfg.n_theta = 32;
    cfg.L_r = 12.0;
    cfg.r_origin = -6.0;
    cfg.hbars = {0.25, 0.125};
    cfg.z = Complex(-2.0, 0.5);
    cfg.n = 1;
    cfg.seed = 777;
    cfg.out_dir = "/tmp/somewhere";
    cfg.extras["rho0"] = "0.3";
    ExperimentConfig back = ExperimentConfig::from_text(cfg.to_text());
    CHECK(back.experiment == cfg.experiment);
    CHECK(back.weight == cfg.weight);
    CHECK(back.n_r == cfg.n_r);
    CHECK(back.n_theta == cfg.n_theta);
    CHECK(back.L_r == cfg.L_r);
    CHECK(back.r_origin == cfg.r_origin);
    CHECK(back.hbars == cfg.hbars);
    CHECK(back.z == cfg.z);
    CHECK(back.n == cfg.n);
    CHECK(back.seed == cfg.seed);
    CHECK(back.out_dir == cfg.out_dir);
    CHECK(back.extra_num("rho0", 0.0) == 0.3);

    // comments and overrides
    ExperimentConfig c2 = ExperimentConfig::from_text("n_r = 64 # inline comment\n# full\n");
    CHECK(c2.n_r == 64);
    c2.set("n_r", "32");
    CHECK(c2.n_r == 32);
}

TEST_CASE("experiment list is stable and machine-readable") {
    CHECK(experiment_names().size() == 7);
    const std::string text = list_experiments_text(false);
    for (const std::string& name : experiment_names())
        CHECK(text.find(name) != std::string::npos);
    const std::string js = list_experiments_text(true);
    CHECK(js.find("\"name\"") != std::string::npos);
    CHECK(js.find("residual-scaling") != std::string::npos);
}

TEST_CASE("expr-selftest experiment passes and is byte-deterministic") {
    ExperimentConfig cfg;
    cfg.experiment = "expr-selftest";
    cfg.out_dir = "/tmp/endcalc_test_selftest_a";
    ExperimentResult r1 = run_experiment(cfg);
    CHECK(r1.pass);
    cfg.out_dir = "/tmp/endcalc_test_selftest_b";
    ExperimentResult r2 = run_experiment(cfg);
    CHECK(r1.results_csv == r2.results_csv);
    CHECK(r1.summary_json == r2.summary_json);
    // artifacts on disk
    std::ifstream csv("/tmp/endcalc_test_selftest_a/results.csv");
    CHECK(csv.good());
    std::string first;
    std::getline(csv, first);
    CHECK(first == "index,variable,rel_err");
}

TEST_CASE("unknown experiment is rejected") {
    ExperimentConfig cfg;
    cfg.experiment = "nope";
    CHECK_THROWS_AS(run_experiment(cfg), Error);
}

TEST_CASE("l2-bound experiment: norms stay under the calibrated constant") {
    ExperimentConfig cfg;
    cfg.experiment = "l2-bound";
    cfg.out_dir = "/tmp/endcalc_test_l2bound";
    ExperimentResult r = run_experiment(cfg);
    CHECK(r.pass);
    CHECK(r.summary_json.find("calibrated_constant") != std::string::npos);
}
