#include "doctest.h"

#include <cmath>

#include "endcalc/symbols.hpp"

using namespace endcalc;

namespace {

Expr vr() { return var(Var::R); }
Expr vth() { return var(Var::Theta); }
Expr vrho() { return var(Var::Rho); }
Expr veta() { return var(Var::Eta); }

Symbol sym(Expr e, double order, WeightFunction w = WeightFunction::one()) {
    return Symbol{std::move(e), order, std::move(w)};
}

// elliptic model symbol rho^2 + (f^-1 eta)^2
Expr model_sigma(const WeightFunction& w) {
    return vrho() * vrho() + ipow(w.expr(), -2) * veta() * veta();
}

}  // namespace

TEST_CASE("weight functions satisfy their claimed bounds") {
    auto one = WeightFunction::one();
    auto rep1 = one.check(-8.0, 8.0);
    CHECK(rep1.ok);
    CHECK(rep1.min_f == 1.0);

    auto con = WeightFunction::sqrt1pr2();
    auto rep2 = con.check(-8.0, 8.0);
    CHECK(rep2.ok);
    CHECK(rep2.min_f >= 1.0);
    CHECK(con(0.0) == 1.0);
    CHECK(std::abs(con(1.0) - std::sqrt(2.0)) < 1e-15);

    auto hyp = WeightFunction::exp_windowed(16.0, 8.0);
    auto rep3 = hyp.check(0.0, 16.0);
    CHECK(rep3.ok);
    CHECK(rep3.min_f >= 1.0);
    // slope of log f is 1 at the window center
    Expr dlog = diff(log_e(hyp.expr()), Var::R);
    Point pc;
    pc.r = 8.0;
    CHECK(std::abs(eval(dlog, pc) - Complex(1.0, 0.0)) < 1e-12);
}

TEST_CASE("seminorm_estimate: named examples") {
    SampleWindow win;
    win.r_lo = -4.0;
    win.r_hi = 4.0;

    // constant symbol: exactly 1 for every derivative budget
    CHECK(seminorm_estimate(sym(constant(1.0), 0.0), 0, win) == 1.0);
    CHECK(seminorm_estimate(sym(constant(1.0), 0.0), 3, win) == 1.0);

    // |rho| / <rho (+) eta> approaches 1 on the sample grid
    double s = seminorm_estimate(sym(vrho(), 1.0), 0, win);
    CHECK(s >= 0.9);
    CHECK(s <= 1.0 + 1e-12);

    // resolvent-type symbol of order -2 at z = -1: ratio is exactly 1 everywhere
    auto w = WeightFunction::sqrt1pr2();
    Expr res = ipow(var(Var::Z) - model_sigma(w), -1);
    double s2 = seminorm_estimate(Symbol{res, -2.0, w}, 0, win, 1.0, Complex(-1.0, 0.0));
    CHECK(s2 >= 0.5);
    CHECK(s2 <= 1.0 + 1e-12);

    // submultiplicative at N=0 for order-additive products
    Symbol a = sym(vrho() * ipow(constant(1.0) + vr() * vr(), -1), 1.0);
    Symbol b = sym(veta(), 1.0);
    Symbol ab = sym(a.expr * b.expr, 2.0);
    double sa = seminorm_estimate(a, 0, win);
    double sb = seminorm_estimate(b, 0, win);
    double sab = seminorm_estimate(ab, 0, win);
    CHECK(sab <= sa * sb + 1e-12);
}

TEST_CASE("bisymbol B-class seminorm is finite for the test corpus") {
    auto w = WeightFunction::sqrt1pr2();
    SampleWindow win;
    win.n_r = 5;
    win.n_theta = 4;
    win.n_p = 9;
    Bisymbol b1{var(Var::RPrime) * vrho(), 1.0, 0.5, w};
    double v = bisymbol_seminorm_estimate(b1, 1, win);
    CHECK(std::isfinite(v));
    CHECK(v > 0.0);
}

TEST_CASE("bisymbol_expansion: structural cases") {
    auto w = WeightFunction::one();

    // no q' dependence: term0 = a(q, p), all later terms vanish at t = 1
    Expr cq = sin_e(vr());
    Expr dp = exp_e(constant(-1.0) * vrho() * vrho());
    Bisymbol b0{cq * dp, 0.0, 1.0, w};
    SymbolSeries s0 = bisymbol_expansion(b0, 3);
    CHECK(struct_equal(s0.terms[0], cq * dp));
    for (int j = 1; j <= 3; ++j) CHECK(is_zero_expr(s0.terms[j]));

    // term0 of s(q, p) equals s for every t (no primes in the amplitude)
    for (double t : {0.0, 0.25, 0.5, 1.0}) {
        Bisymbol bs{cq * dp + vrho() * vr(), 1.0, t, w};
        SymbolSeries ss = bisymbol_expansion(bs, 2);
        CHECK(struct_equal(ss.terms[0], bs.expr));
    }

    // a(q,p,q') = r' rho at t = 0 reduces exactly to r rho
    Bisymbol br{var(Var::RPrime) * vrho(), 1.0, 0.0, w};
    SymbolSeries sr = bisymbol_expansion(br, 3);
    CHECK(struct_equal(sr.terms[0], vr() * vrho()));
    for (int j = 1; j <= 3; ++j) CHECK(is_zero_expr(sr.terms[j]));

    // at t = 1 the same amplitude acquires the -i hbar correction
    Bisymbol br1{var(Var::RPrime) * vrho(), 1.0, 1.0, w};
    SymbolSeries sr1 = bisymbol_expansion(br1, 2);
    CHECK(struct_equal(sr1.terms[0], vr() * vrho()));
    CHECK(struct_equal(sr1.terms[1], constant(Complex(0.0, -1.0))));
    CHECK(is_zero_expr(sr1.terms[2]));
}

TEST_CASE("bisymbol_expansion against quadrature of the reduction integral") {
    // b^t(r, rho) = (2 pi hbar)^-1 int a(r + (1-t)r', rho + rho', r - t r')
    //                               e^{+i rho' r' / hbar} dr' drho'
    // for a theta-independent Schwartz amplitude, compared against the
    // truncated expansion. The truncation error must scale like hbar^{J+1}.
    // (Phase sign fixed by the kernel identity Op(a) = Op^t(b^t); with the
    // opposite sign the J>=1 error scales like hbar^1 instead of hbar^{J+1}.)
    auto w = WeightFunction::one();
    Expr amp = exp_e(constant(-1.0) * var(Var::RPrime) * var(Var::RPrime)) *
               exp_e(constant(-1.0) * vrho() * vrho());
    const double t = 0.5;
    Bisymbol bi{amp, 0.0, t, w};
    SymbolSeries series = bisymbol_expansion(bi, 2);

    auto quad_bt = [&](double r, double rho, double hbar) {
        const double rp_max = 10.0, pp_max = 10.0;
        const int n_rp = 1600, n_pp = 1400;
        const double drp = 2.0 * rp_max / n_rp, dpp = 2.0 * pp_max / n_pp;
        Complex acc(0.0, 0.0);
        for (int i = 0; i <= n_rp; ++i) {
            const double rp = -rp_max + i * drp;
            const double wr = (i == 0 || i == n_rp) ? 0.5 : 1.0;
            // inner integral over rho' of exp(-(rho+rho')^2) e^{-i rho' rp / hbar}
            Complex inner(0.0, 0.0);
            for (int k = 0; k <= n_pp; ++k) {
                const double pp = -pp_max + k * dpp;
                const double wk = (k == 0 || k == n_pp) ? 0.5 : 1.0;
                const double g = std::exp(-(rho + pp) * (rho + pp));
                inner += wk * g * std::exp(Complex(0.0, pp * rp / hbar));
            }
            inner *= dpp;
            const double spatial = std::exp(-(r - t * rp) * (r - t * rp));
            acc += wr * spatial * inner * drp;
        }
        return acc / (2.0 * kPi * hbar);
    };

    auto series_value = [&](double r, double rho, double hbar, int j_max) {
        Complex v(0.0, 0.0);
        double hj = 1.0;
        for (int j = 0; j <= j_max; ++j) {
            Point pt;
            pt.r = r;
            pt.rho = rho;
            pt.hbar = hbar;
            v += hj * eval(series.terms[j], pt);
            hj *= hbar;
        }
        return v;
    };

    const double r = 0.3, rho = 0.4;
    double err[2];
    int idx = 0;
    for (double hbar : {0.25, 0.125}) {
        const Complex q = quad_bt(r, rho, hbar);
        const Complex s2 = series_value(r, rho, hbar, 2);
        err[idx++] = std::abs(q - s2);
        // sanity: expansion with more terms is closer than with fewer
        CHECK(std::abs(q - series_value(r, rho, hbar, 0)) > std::abs(q - s2));
    }
    // J = 2 truncation: error O(hbar^3), so halving hbar cuts it by ~8
    CHECK(err[1] <= 0.3 * err[0]);
    CHECK(err[0] < 0.05);
}

TEST_CASE("sharp products: structural laws") {
    auto w = WeightFunction::one();
    Symbol chi = sym(vr(), 0.0);
    Symbol rho_sym = sym(vrho(), 1.0);
    Symbol a2 = sym(sin_e(vr()) * vrho() + cos_e(vth()) * veta(), 1.0);

    // t = 1: chi #^1 a is exactly [chi a, 0, 0, 0]
    for (const Symbol& a : {rho_sym, a2}) {
        SymbolSeries s = sharp_left(chi, a, 1.0, 3);
        CHECK(struct_equal(s.terms[0], chi.expr * a.expr));
        for (int j = 1; j <= 3; ++j) CHECK(is_zero_expr(s.terms[j]));
    }
    // t = 0: a #^0 chi is exactly [a chi, 0, 0, 0]
    for (const Symbol& a : {rho_sym, a2}) {
        SymbolSeries s = sharp_right(a, chi, 0.0, 3);
        CHECK(struct_equal(s.terms[0], a.expr * chi.expr));
        for (int j = 1; j <= 3; ++j) CHECK(is_zero_expr(s.terms[j]));
    }
    // chi == 1: [a, 0, ...] for all t
    Symbol chi1 = sym(constant(1.0), 0.0);
    for (double t : {0.0, 0.5, 1.0}) {
        SymbolSeries s = sharp_left(chi1, rho_sym, t, 2);
        CHECK(struct_equal(s.terms[0], rho_sym.expr));
        CHECK(is_zero_expr(s.terms[1]));
        SymbolSeries sr = sharp_right(rho_sym, chi1, t, 2);
        CHECK(struct_equal(sr.terms[0], rho_sym.expr));
        CHECK(is_zero_expr(sr.terms[1]));
    }

    // chi = r, a = rho, t = 0: term1 = i
    SymbolSeries sl = sharp_left(chi, rho_sym, 0.0, 2);
    CHECK(struct_equal(sl.terms[0], vr() * vrho()));
    CHECK(struct_equal(sl.terms[1], constant(Complex(0.0, 1.0))));

    // a = rho, chi = r, t = 1: term1 = -i (left-quantized D then multiply)
    SymbolSeries sr = sharp_right(rho_sym, chi, 1.0, 2);
    CHECK(struct_equal(sr.terms[0], vr() * vrho()));
    CHECK(struct_equal(sr.terms[1], constant(Complex(0.0, -1.0))));
}

TEST_CASE("sharp products match the closed one-step formulas") {
    // term_j = (K^j / j!) (d_q' . d_p)^j (a(q,p) chi(q'))|_{q'=q},
    // K = i(1-t) on the left, K = -i t on the right.
    auto w = WeightFunction::one();
    Symbol chi = sym(sin_e(vr()) + vr() * vr(), 0.0);
    Symbol a = sym(vrho() * vrho() * cos_e(vr()) + veta() * vrho(), 2.0);
    for (double t : {0.0, 0.3, 1.0}) {
        SymbolSeries left = sharp_left(chi, a, t, 3);
        SymbolSeries right = sharp_right(a, chi, t, 3);
        std::map<Var, Expr> primed{{Var::R, var(Var::RPrime)}, {Var::Theta, var(Var::ThetaPrime)}};
        std::map<Var, Expr> unprime{{Var::RPrime, vr()}, {Var::ThetaPrime, vth()}};
        Expr g = a.expr * subst(chi.expr, primed);
        Complex kl(0.0, 1.0 - t), kr(0.0, -t);
        Complex klj(1.0, 0.0), krj(1.0, 0.0);
        double fact = 1.0;
        for (int j = 0; j <= 3; ++j) {
            if (j > 0) {
                g = diff(diff(g, Var::RPrime), Var::Rho) + diff(diff(g, Var::ThetaPrime), Var::Eta);
                fact *= j;
                klj *= kl;
                krj *= kr;
            }
            Expr base = subst(g, unprime);
            CHECK(struct_equal(left.terms[j], constant(klj / fact) * base));
            CHECK(struct_equal(right.terms[j], constant(krj / fact) * base));
        }
    }
}

TEST_CASE("chart transfer: identity, dilation oracle, round trip") {
    auto w = WeightFunction::one();

    Symbol a = sym(sin_e(vth()) * veta() + vrho() * vrho(), 2.0);
    Symbol same = chart_transfer_leading(a, identity_arc_map());
    CHECK(struct_equal(same.expr, a.expr));

    // dilation phi(theta) = 2 theta: eta -> eta * 2, theta -> theta / 2
    AngularMap dil;
    dil.name = "dilation2";
    dil.fwd = [](const Expr& u) { return 2.0 * u; };
    dil.inv = [](const Expr& u) { return 0.5 * u; };
    dil.dfwd = [](const Expr&) { return constant(2.0); };
    Symbol eta_sym = sym(veta(), 1.0);
    Symbol moved = chart_transfer_leading(eta_sym, dil);
    // pushforward of eta under (theta, eta) -> (2 theta, eta / 2) is eta / ... :
    // evaluating at (theta, eta) must give a(theta / 2, 2 eta) = 2 eta
    for (int i = 0; i < 10; ++i) {
        Point pt;
        pt.theta = -1.0 + 0.2 * i;
        pt.eta = -2.0 + 0.45 * i;
        CHECK(std::abs(eval(moved.expr, pt) - Complex(2.0 * pt.eta, 0.0)) < 1e-13);
    }

    // symbols independent of (theta, eta) are unchanged by any map
    Symbol radial = sym(exp_e(vr()) * vrho(), 1.0);
    Symbol moved2 = chart_transfer_leading(radial, moebius_arc_map(0.4));
    CHECK(struct_equal(moved2.expr, radial.expr));

    // transfer then inverse transfer is the identity pointwise
    AngularMap mo = moebius_arc_map(0.35);
    Symbol fwd = chart_transfer_leading(a, mo);
    Symbol back = chart_transfer_leading(fwd, mo.inverse());
    Rng rng(17);
    for (int i = 0; i < 50; ++i) {
        Point pt;
        pt.theta = 2.4 * rng.next_sym();
        pt.eta = 3.0 * rng.next_sym();
        pt.rho = 2.0 * rng.next_sym();
        pt.r = rng.next_sym();
        Complex va = eval(a.expr, pt), vb = eval(back.expr, pt);
        CHECK(std::abs(va - vb) <= 1e-10 * std::max(1.0, std::abs(va)));
    }

    // Moebius map round-trips pointwise
    CHECK(std::abs(mo.apply_inverse(mo.apply(0.7)) - 0.7) < 1e-13);
}

TEST_CASE("resolvent symbol and margin checks") {
    auto w = WeightFunction::sqrt1pr2();
    SampleWindow win;
    Symbol sigma{model_sigma(w), 2.0, w};

    Symbol res = resolvent_symbol(sigma, Complex(-1.0, 0.0), win);
    CHECK(res.order == -2.0);
    Point origin;
    origin.z = Complex(-1.0, 0.0);
    CHECK(std::abs(eval(res.expr, origin) - Complex(-1.0, 0.0)) < 1e-15);

    // rho^2 + eta^2 with z = i: margin >= 1/sqrt(2) at every sample
    Symbol flat{model_sigma(WeightFunction::one()), 2.0, WeightFunction::one()};
    CHECK_NOTHROW(resolvent_symbol(flat, Complex(0.0, 1.0), win));

    // z inside the symbol range fails
    CHECK_THROWS_AS(resolvent_symbol(flat, Complex(1.0, 0.0), win), EllipticityError);

    // imaginary z: margin at the p-origin sample is at least |Im z| scaled
    CHECK_NOTHROW(resolvent_symbol(sigma, Complex(0.0, 0.5), win));
}

TEST_CASE("delta_n bounds") {
    auto w = WeightFunction::one();
    SampleWindow win;
    Symbol sigma{model_sigma(w), 2.0, w};

    // z = -1: the ratio is exactly 1 at every sample
    ResolventBound b0 = delta_n_bound(sigma, Complex(-1.0, 0.0), 0, win);
    CHECK(b0.delta_n == doctest::Approx(1.0).epsilon(1e-12));

    // z = -4: sup (1+s)/(4+s) approaches 1 from below
    ResolventBound b4 = delta_n_bound(sigma, Complex(-4.0, 0.0), 0, win);
    CHECK(b4.delta_n >= 0.9);
    CHECK(b4.delta_n <= 1.0);

    // monotone in N and window size
    ResolventBound b1 = delta_n_bound(sigma, Complex(-4.0, 0.0), 1, win);
    ResolventBound b2 = delta_n_bound(sigma, Complex(-4.0, 0.0), 2, win);
    CHECK(b1.delta_n >= b4.delta_n);
    CHECK(b2.delta_n >= b1.delta_n);
    SampleWindow wide = win;
    wide.r_lo = -8.0;
    wide.r_hi = 8.0;
    wide.p_max = 12.0;
    ResolventBound bw = delta_n_bound(sigma, Complex(-4.0, 0.0), 0, wide);
    CHECK(bw.delta_n >= b4.delta_n - 1e-12);
}

TEST_CASE("symbol and series text round-trip") {
    auto w = WeightFunction::sqrt1pr2();
    Symbol s{model_sigma(w), 2.0, w};
    Symbol back = symbol_from_text(symbol_to_text(s), w);
    CHECK(struct_equal(back.expr, s.expr));
    CHECK(back.order == s.order);

    Bisymbol bi{var(Var::RPrime) * vrho(), 1.0, 1.0, w};
    SymbolSeries series = bisymbol_expansion(bi, 2);
    series.z = Complex(-1.0, 0.5);
    SymbolSeries sback = series_from_text(series_to_text(series), w);
    REQUIRE(sback.terms.size() == series.terms.size());
    CHECK(sback.z == series.z);
    for (std::size_t i = 0; i < series.terms.size(); ++i)
        CHECK(struct_equal(sback.terms[i], series.terms[i]));
}

TEST_CASE("bisymbol text round-trip") {
    auto w = WeightFunction::one();
    Bisymbol b{var(Var::RPrime) * vrho() + sin_e(var(Var::ThetaPrime)), 1.0, 0.5, w};
    Bisymbol back = bisymbol_from_text(bisymbol_to_text(b), w);
    CHECK(struct_equal(back.expr, b.expr));
    CHECK(back.order == b.order);
    CHECK(back.t == b.t);
}
