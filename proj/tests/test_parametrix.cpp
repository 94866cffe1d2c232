#include "doctest.h"

#include <cmath>

#include "endcalc/parametrix.hpp"

using namespace endcalc;

namespace {

Expr vr() { return var(Var::R); }
Expr vth() { return var(Var::Theta); }
Expr vrho() { return var(Var::Rho); }
Expr veta() { return var(Var::Eta); }
Expr vz() { return var(Var::Z); }

SampleWindow win6() {
    SampleWindow w;
    w.r_lo = -6.0;
    w.r_hi = 6.0;
    return w;
}

DiffOp dr2_plus_c() {
    DiffOp p(2, WeightFunction::one());
    p.set_coeff(2, 0, 0, constant(1.0));
    p.set_coeff(0, 2, 0, constant(1.0));
    p.set_coeff(0, 0, 0, 0.4 * exp_e(constant(-0.25) * vr() * vr()));
    return p;
}

DiffOp warped() {
    return warped_laplacian(WeightFunction::sqrt1pr2(), constant(1.0), win6());
}

}  // namespace

TEST_CASE("compose_diffop_symbol: exact binomial structure") {
    DiffOp dr2(2, WeightFunction::one());
    dr2.set_coeff(2, 0, 0, constant(1.0));

    // a independent of r: single term rho^2 a
    Expr a_th = sin_e(vth()) * veta();
    SymbolSeries s1 = compose_diffop_symbol(dr2, a_th);
    REQUIRE(s1.terms.size() == 1);
    CHECK(struct_equal(s1.terms[0], ipow(vrho(), 2) * a_th));

    // a = sin r: exactly three terms rho^2 a, -2i rho cos r, sin r
    SymbolSeries s2 = compose_diffop_symbol(dr2, sin_e(vr()));
    REQUIRE(s2.terms.size() == 3);
    CHECK(struct_equal(s2.terms[0], ipow(vrho(), 2) * sin_e(vr())));
    CHECK(struct_equal(s2.terms[1], constant(Complex(0.0, -2.0)) * vrho() * cos_e(vr())));
    CHECK(struct_equal(s2.terms[2], sin_e(vr())));

    // leading-term law sigma(P) a over a small corpus
    for (const DiffOp& p : {dr2_plus_c(), warped()}) {
        Expr sig = p.principal_symbol().expr;
        for (const Expr& a : {ipow(vz() - vrho() * vrho(), -1), sin_e(vr()) * vrho(),
                              exp_e(constant(-1.0) * vrho() * vrho())}) {
            SymbolSeries s = compose_diffop_symbol(p, a);
            CHECK(struct_equal(s.terms[0], normalize(sig * a)));
        }
    }
}

TEST_CASE("build_parametrix: constant coefficients terminate at b0") {
    DiffOp flat = flat_laplacian();
    Parametrix par = build_parametrix(flat, Complex(-1.0, 0.0), 2, win6());
    REQUIRE(par.series.terms.size() == 3);
    Expr b0 = ipow(vz() - ipow(vrho(), 2) - ipow(veta(), 2), -1);
    CHECK(struct_equal(par.series.terms[0], b0));
    CHECK(is_zero_expr(par.series.terms[1]));
    CHECK(is_zero_expr(par.series.terms[2]));
    CHECK(is_zero_expr(par.remainder));
    CHECK(par.series.orders[0] == -2.0);
    CHECK(par.series.orders[2] == -4.0);
}

TEST_CASE("build_parametrix: b1 equals -e1 (z - sigma)^-1 via the second path") {
    DiffOp p = dr2_plus_c();
    Parametrix par = build_parametrix(p, Complex(-1.0, 0.0), 2, win6());
    Expr sigma = p.principal_symbol().expr;
    Expr inv = ipow(vz() - sigma, -1);
    // e1 is the hbar^1 coefficient of (z - P) # b0, i.e. minus the grade-1
    // part of the exact composition P # b0
    SymbolSeries comp = compose_diffop_symbol(p, inv);
    REQUIRE(comp.terms.size() >= 2);
    Expr b1_expected = normalize(comp.terms[1] * inv);
    CHECK(struct_equal(par.series.terms[1], b1_expected));
}

TEST_CASE("symbolic cancellation: defect grades 1..N vanish structurally") {
    const Complex z(-1.0, 0.0);
    for (const DiffOp& p : {flat_laplacian(), dr2_plus_c(), warped()}) {
        Parametrix par = build_parametrix(p, z, 2, win6());
        std::vector<Expr> defect = defect_coefficients(p, par.series, 3);
        CHECK(is_zero_expr(defect[0]));
        CHECK(is_zero_expr(defect[1]));
        CHECK(is_zero_expr(defect[2]));
        // the remainder grade matches the recursion's reported remainder
        CHECK(struct_equal(defect[3], par.remainder));
    }
}

TEST_CASE("parametrix order bookkeeping and seminorm finiteness") {
    DiffOp p = warped();
    Parametrix par = build_parametrix(p, Complex(-1.0, 0.0), 2, win6());
    SampleWindow w = win6();
    w.n_r = 9;
    w.n_p = 17;
    for (std::size_t j = 0; j < par.series.terms.size(); ++j) {
        CHECK(par.series.orders[j] == -2.0 - double(j));
        if (is_zero_expr(par.series.terms[j])) continue;
        Symbol weighted{par.series.terms[j], par.series.orders[j], p.weight()};
        const double sn =
            seminorm_estimate(weighted, 0, w, 1.0, Complex(-1.0, 0.0));
        CHECK(std::isfinite(sn));
        CHECK(sn > 0.0);
    }
}

TEST_CASE("node budget failure carries the achieved depth") {
    DiffOp p = warped();
    try {
        build_parametrix(p, Complex(-1.0, 0.0), 3, win6(), 50);
        FAIL("expected SeriesError");
    } catch (const SeriesError& e) {
        CHECK(e.achieved_n >= 1);
        CHECK(std::string(e.what()).find("series too deep") != std::string::npos);
    }
}

TEST_CASE("parametrix requires ellipticity at z") {
    CHECK_THROWS_AS(build_parametrix(flat_laplacian(), Complex(1.0, 0.0), 1, win6()),
                    EllipticityError);
}

TEST_CASE("residual: constant coefficients invert exactly on the lattice") {
    DiffOp flat = flat_laplacian();
    Parametrix par = build_parametrix(flat, Complex(-1.0, 0.0), 0, win6());
    ResidualConfig cfg;
    cfg.n_r = 64;
    cfg.n_theta = 16;
    ResidualReport rep =
        residual_report(flat, par.series, Complex(-1.0, 0.0), {0.25, 0.125}, cfg);
    for (const auto& row : rep.residuals)
        for (double r : row) CHECK(r <= 1e-9);
}

TEST_CASE("residual order grows with the truncation depth") {
    // potential-type operator: its grade-1 defect symbol is order one at the
    // field momenta, so the slopes walk the clean N + 1 ladder
    DiffOp p = dr2_plus_c();
    const Complex z(-1.0, 0.0);
    ResidualConfig cfg;
    cfg.n_r = 128;
    cfg.n_theta = 16;
    cfg.n_fields = 2;
    cfg.rho0 = 0.25;  // fixed semiclassical frequency across hbar
    cfg.field_modes = 1;
    const std::vector<double> hbars{0.125, 0.0625, 0.03125};
    Parametrix p0 = build_parametrix(p, z, 0, win6());
    Parametrix p1 = build_parametrix(p, z, 1, win6());
    ResidualReport r0 = residual_report(p, p0.series, z, hbars, cfg);
    ResidualReport r1 = residual_report(p, p1.series, z, hbars, cfg);
    CHECK(r0.slope >= 0.8);
    CHECK(r0.slope <= 1.5);
    CHECK(r1.slope >= 1.8);
    // residuals themselves shrink when the series deepens
    for (std::size_t i = 0; i < hbars.size(); ++i)
        CHECK(r1.residuals[i][0] < r0.residuals[i][0]);
}

TEST_CASE("selfadjoint pipeline: constant coefficients") {
    DiffOp flat = flat_laplacian();
    ResidualConfig cfg;
    cfg.n_r = 32;
    cfg.n_theta = 8;
    SelfAdjointReport rep =
        selfadjoint_pipeline(flat, {0.25, 0.125}, 0, cfg, 3, win6());
    CHECK(rep.symmetry_defect <= 1e-10);
    for (double n : rep.norm_plus) CHECK(n <= 1e-9);
    for (double n : rep.norm_minus) CHECK(n <= 1e-9);
    CHECK(rep.hbar0_found);
    CHECK(rep.hbar0 == 0.25);
    CHECK(rep.neumann_final <= 1e-8);
}

TEST_CASE("selfadjoint pipeline: warped Laplacian smoke") {
    DiffOp p = warped();
    ResidualConfig cfg;
    cfg.n_r = 64;
    cfg.n_theta = 8;
    SelfAdjointReport rep = selfadjoint_pipeline(p, {0.125, 0.0625}, 1, cfg, 12, win6());
    CHECK(rep.symmetry_defect <= 1e-8);
    CHECK(rep.hbar0_found);
    // defect norms decrease with hbar (10% slack for estimator noise)
    CHECK(rep.norm_plus[1] <= 1.1 * rep.norm_plus[0]);
    CHECK(rep.neumann_final <= 1e-3);
    // Neumann residuals decrease monotonically until the numerical floor
    for (std::size_t k = 1; k < rep.neumann_residuals.size(); ++k) {
        if (rep.neumann_residuals[k] < 1e-12) break;
        CHECK(rep.neumann_residuals[k] <= rep.neumann_residuals[k - 1] * 1.05);
    }
}

TEST_CASE("cutoff commutator is small and shrinks with delta") {
    DiffOp p = warped_laplacian(WeightFunction::sqrt1pr2(), constant(1.0), SampleWindow{0.0, 16.0});
    Parametrix par = build_parametrix(p, Complex(0.0, 1.0), 1, SampleWindow{0.0, 16.0});
    ResidualConfig cfg;
    cfg.r_origin = 0.0;
    cfg.L_r = 16.0;
    cfg.n_r = 64;
    cfg.n_theta = 8;
    CommutatorReport rep = cutoff_commutator(p, par.series, {0.4, 0.2, 0.1}, 0.125, cfg);
    CHECK(rep.norms[0] > rep.norms[2]);
    CHECK(rep.slope >= 0.8);
}
