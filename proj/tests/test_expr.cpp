#include "doctest.h"

#include <cmath>
#include <vector>

#include "endcalc/expr.hpp"
#include "endcalc/rnf.hpp"

using namespace endcalc;

namespace {

const FuncDef* expf_def() {
    return register_function(FuncDef{
        "expf",
        [](Complex x) { return std::exp(x); },
        [](const Expr& u) { return func(find_function("expf"), u); },
    });
}

const FuncDef* norule_def() {
    return register_function(FuncDef{
        "norule",
        [](Complex x) { return x; },
        nullptr,
    });
}

Expr vr() { return var(Var::R); }
Expr vth() { return var(Var::Theta); }
Expr vrho() { return var(Var::Rho); }
Expr veta() { return var(Var::Eta); }
Expr vz() { return var(Var::Z); }

// 20 expressions touching every node kind; all finite on the sample domain.
std::vector<Expr> fd_corpus() {
    const FuncDef* f = expf_def();
    std::vector<Expr> c;
    c.push_back(ipow(vrho(), 3));
    c.push_back(vrho() * vrho() + veta() * veta());
    c.push_back(sin_e(vth()));
    c.push_back(cos_e(vth()) * sin_e(vr()));
    c.push_back(exp_e(vr()) * vrho());
    c.push_back(log_e(constant(1.0) + vr() * vr()));
    c.push_back(ipow(vz() - vrho() * vrho(), -1));
    c.push_back(ipow(vz() - vrho() * vrho(), -2));
    c.push_back(ipow(constant(1.0) + vrho() * vrho() + veta() * veta(), -1));
    c.push_back(func(f, vr()));
    c.push_back(log_e(func(f, vr())));
    c.push_back(ipow(func(f, vr()), -1) * veta());
    c.push_back(exp_e(constant(-1.0) * vrho() * vrho()));
    c.push_back(sin_e(vth()) * ipow(constant(2.0) + cos_e(vth()), -1));
    c.push_back(vr() * vth() * vrho() * veta());
    c.push_back(ipow(vr() + constant(2.0), 2) * ipow(veta() + constant(3.0), -1));
    c.push_back(exp_e(sin_e(vth())));
    c.push_back(constant(Complex(0.0, 1.0)) * vrho() + vr());
    c.push_back(log_e(constant(2.0) + sin_e(vr())));
    c.push_back((vz() - vrho() * vrho()) * ipow(constant(1.0) + vr() * vr(), -1));
    return c;
}

Point sample_point(Rng& rng) {
    Point p;
    p.r = 0.3 + rng.next_double();
    p.theta = 0.2 + 2.0 * rng.next_double();
    p.rho = rng.next_sym();
    p.eta = rng.next_sym();
    p.hbar = 0.25 + 0.5 * rng.next_double();
    p.z = Complex(-1.0 - rng.next_double(), 0.3);
    return p;
}

}  // namespace

TEST_CASE("diff: polynomial and registered-function rules") {
    // d/drho rho^2 = 2 rho
    Expr d = diff(ipow(vrho(), 2), Var::Rho);
    CHECK(struct_equal(d, 2.0 * vrho()));

    // d/dr log f(r) with f = exp collapses to 1
    const FuncDef* f = expf_def();
    Expr lf = log_e(func(f, vr()));
    CHECK(struct_equal(diff(lf, Var::R), constant(1.0)));

    // d/drho (z - rho^2)^-1 = 2 rho (z - rho^2)^-2, checked by central differences
    Expr res = ipow(vz() - vrho() * vrho(), -1);
    Point pt;
    pt.rho = 0.7;
    pt.z = Complex(-1.0, 0.0);
    FdReport rep = fd_check(res, Var::Rho, pt, 1e-5);
    CHECK(rep.rel_err <= 1e-6);
    Expr expected = 2.0 * vrho() * ipow(vz() - vrho() * vrho(), -2);
    CHECK(struct_equal(diff(res, Var::Rho), expected));
}

TEST_CASE("diff: missing derivative rule") {
    Expr e = func(norule_def(), vr());
    CHECK_THROWS_AS(diff(e, Var::R), DiffError);
    CHECK_THROWS_WITH_AS(diff(e, Var::R), doctest::Contains("missing derivative rule"), DiffError);
}

TEST_CASE("eval: examples and singularities") {
    Point p;
    p.rho = 3.0;
    p.eta = 4.0;
    CHECK(eval(vrho() * vrho() + veta() * veta(), p) == Complex(25.0, 0.0));

    Point q;
    q.rho = 0.0;
    q.z = Complex(-1.0, 0.0);
    CHECK(eval(ipow(vz() - vrho() * vrho(), -1), q) == Complex(-1.0, 0.0));

    Point s;
    s.r = 1.0;
    s.eta = 2.0;
    Complex v = eval(ipow(exp_e(vr()), -1) * veta(), s);
    CHECK(std::abs(v - Complex(2.0 / std::exp(1.0), 0.0)) < 1e-15);
    CHECK(std::abs(v.real() - 0.7357588823) < 1e-9);

    Point z0;  // pole of rho^-1 at rho=0
    CHECK_THROWS_AS(eval(ipow(vrho(), -1), z0), EvalError);
    Point ln;  // log of nonpositive real
    ln.r = -2.0;
    CHECK_THROWS_AS(eval(log_e(vr()), ln), EvalError);
}

TEST_CASE("normalize: folding, collection, idempotence") {
    CHECK(struct_equal(normalize(constant(0.0) * vrho() + veta()), veta()));
    CHECK(struct_equal(normalize(vrho() * vrho()), ipow(vrho(), 2)));
    CHECK(struct_equal(normalize((constant(1.0) + constant(1.0)) * vr()), 2.0 * vr()));

    // cancellation of reciprocals against their bases
    Expr s = vz() - vrho() * vrho();
    CHECK(is_zero_expr(s * ipow(s, -1) - constant(1.0)));

    std::vector<Expr> corpus = fd_corpus();
    Rng rng(7);
    for (const Expr& e : corpus) {
        Expr n1 = normalize(e);
        Expr n2 = normalize(n1);
        CHECK(to_text(n1) == to_text(n2));
        // eval equality at a sample point
        Point p = sample_point(rng);
        Complex a = eval(e, p), b = eval(n1, p);
        CHECK(std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)));
    }
}

TEST_CASE("fd_check: named examples") {
    Point p1;
    p1.rho = 1.0;
    CHECK(fd_check(ipow(vrho(), 3), Var::Rho, p1, 1e-5).rel_err <= 1e-9);

    Point p2;
    p2.theta = 0.3;
    FdReport r2 = fd_check(sin_e(vth()), Var::Theta, p2, 1e-5);
    CHECK(std::abs(r2.symbolic - Complex(std::cos(0.3), 0.0)) < 1e-15);
    CHECK(std::abs(r2.symbolic.real() - 0.9553364891) < 1e-9);
    CHECK(r2.rel_err <= 1e-9);

    Point p3;
    p3.rho = 0.5;
    p3.z = Complex(-1.0, 0.0);
    CHECK(fd_check(ipow(vz() - vrho() * vrho(), -2), Var::Rho, p3, 1e-5).rel_err <= 1e-6);
}

TEST_CASE("fd corpus: 20 expressions, all node kinds, rel err <= 1e-6") {
    std::vector<Expr> corpus = fd_corpus();
    REQUIRE(corpus.size() == 20);
    Rng rng(42);
    int checked = 0;
    for (const Expr& e : corpus) {
        for (Var v : {Var::R, Var::Theta, Var::Rho, Var::Eta}) {
            if (!free_vars(e).count(v)) continue;
            Point p = sample_point(rng);
            FdReport rep = fd_check(e, v, p, 1e-5);
            CHECK(rep.rel_err <= 1e-6);
            ++checked;
        }
    }
    CHECK(checked >= 20);
}

TEST_CASE("mixed partials commute at 100 random points") {
    std::vector<Expr> corpus = fd_corpus();
    Rng rng(12345);
    for (int trial = 0; trial < 100; ++trial) {
        const Expr& e = corpus[trial % corpus.size()];
        auto vars = free_vars(e);
        std::vector<Var> vs(vars.begin(), vars.end());
        if (vs.size() < 2) continue;
        Var u = vs[trial % vs.size()];
        Var v = vs[(trial + 1) % vs.size()];
        Point p = sample_point(rng);
        Complex duv = eval(diff(diff(e, u), v), p);
        Complex dvu = eval(diff(diff(e, v), u), p);
        CHECK(std::abs(duv - dvu) <= 1e-10 * std::max(1.0, std::abs(duv)));
    }
}

TEST_CASE("diff linearity") {
    Rng rng(99);
    std::vector<Expr> corpus = fd_corpus();
    for (int trial = 0; trial < 20; ++trial) {
        const Expr& e1 = corpus[trial % corpus.size()];
        const Expr& e2 = corpus[(trial + 7) % corpus.size()];
        const double a = rng.next_sym() * 3.0;
        Expr lhs = diff(a * e1 + e2, Var::Rho);
        Expr rhs = a * diff(e1, Var::Rho) + diff(e2, Var::Rho);
        Point p = sample_point(rng);
        Complex lv = eval(lhs, p), rv = eval(rhs, p);
        CHECK(std::abs(lv - rv) <= 1e-12 * std::max(1.0, std::abs(lv)));
    }
}

TEST_CASE("text form round-trips") {
    expf_def();
    std::vector<Expr> corpus = fd_corpus();
    Rng rng(5);
    for (const Expr& e : corpus) {
        Expr back = parse_expr(to_text(e));
        CHECK(struct_equal(e, back));
        // canonical forms serialize identically
        CHECK(to_text(normalize(e)) == to_text(normalize(back)));
    }
    // complex constants
    Expr c = constant(Complex(1.5, -2.25)) * vrho();
    CHECK(struct_equal(c, parse_expr(to_text(c))));
}

TEST_CASE("subst: simultaneous substitution") {
    // bisymbol-style swap r -> r + rp, rp -> r - rp must be simultaneous
    Expr e = vr() * var(Var::RPrime);
    std::map<Var, Expr> m;
    m[Var::R] = vr() + var(Var::RPrime);
    m[Var::RPrime] = vr() - var(Var::RPrime);
    Expr s = subst(e, m);
    Expr expected = (vr() + var(Var::RPrime)) * (vr() - var(Var::RPrime));
    CHECK(struct_equal(s, expected));
}

TEST_CASE("normal form cancels equal terms exactly") {
    // the pattern the parametrix recursion relies on: e + (z-s)*(-e*(z-s)^-1) == 0
    Expr sigma = vrho() * vrho() + veta() * veta();
    Expr zs = vz() - sigma;
    Expr e = sin_e(vr()) * vrho() + 3.25 * ipow(vr(), 2) * ipow(zs, -2);
    Expr combo = e + zs * (constant(-1.0) * e * ipow(zs, -1));
    CHECK(is_zero_expr(combo));
}
