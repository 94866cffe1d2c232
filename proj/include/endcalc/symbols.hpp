#pragma once

#include <optional>
#include <string>
#include <vector>

#include "endcalc/expr.hpp"
#include "endcalc/grid_eval.hpp"

namespace endcalc {

/// Weight function f: R -> [1, inf) normalizing angular derivatives.
class WeightFunction {
  public:
    WeightFunction();  // f == 1

    static WeightFunction one();
    static WeightFunction sqrt1pr2();
    /// exp-type weight shaped to the periodic window [center - L/2, center + L/2]:
    /// f = exp(A (1 + sin(w (r - center)))), A = L/(2 pi), w = 2 pi / L.
    /// Slope of log f is 1 at the window center and f >= 1 everywhere.
    static WeightFunction exp_windowed(double window_length, double center);

    /// Builds a weight by name: "one" | "sqrt1pr2" | "exp-windowed".
    static WeightFunction by_name(const std::string& name, double window_length, double center);

    const std::string& name() const { return name_; }
    const Expr& expr() const { return f_; }
    double operator()(double r) const;
    const std::vector<std::pair<int, double>>& claimed_log_bounds() const { return bounds_; }

    struct CheckReport {
        bool ok = true;
        double min_f = 0.0;
        std::vector<double> observed;  // max |d^j log f| per claimed bound
    };
    /// Samples f >= 1 and |d^j log f| <= claimed bound over [r_lo, r_hi].
    CheckReport check(double r_lo, double r_hi, int samples = 257) const;

  private:
    std::string name_;
    Expr f_;
    std::vector<std::pair<int, double>> bounds_;
};

struct Symbol {
    Expr expr;
    double order = 0.0;
    WeightFunction weight;
};

/// Amplitude a(q, p, q') with q' carried by the primed variables.
struct Bisymbol {
    Expr expr;
    double order = 0.0;
    double t = 1.0;
    WeightFunction weight;
};

/// Truncated semiclassical series b_0 + hbar b_1 + ... + hbar^N b_N.
struct SymbolSeries {
    std::vector<Expr> terms;
    std::vector<double> orders;
    WeightFunction weight;
    Complex z{0.0, 0.0};
    double t = 1.0;
};

struct ResolventBound {
    Complex z{0.0, 0.0};
    int n = 0;
    double delta_n = 0.0;
};

/// Deterministic sample region for seminorm and margin estimates.
struct SampleWindow {
    double r_lo = -4.0, r_hi = 4.0;
    int n_r = 17;
    int n_theta = 9;  // theta in [0, 2pi)
    double p_max = 8.0;
    int n_p = 33;

    std::vector<double> r_samples() const;
    std::vector<double> theta_samples() const;
    std::vector<double> p_samples() const;
};

/// Grid maximum of f^(-|a'|+|b'|) <rho (+) f^-1 eta>^(-m+|b|) |d_q^a d_p^b sym|
/// over |a|+|b| <= n_derivs. A lower bound on the true seminorm.
double seminorm_estimate(const Symbol& a, int n_derivs, const SampleWindow& win,
                         double hbar = 1.0, Complex z = Complex(0.0, 0.0));

/// B-class variant for bisymbols (derivatives also in q'), sampled with
/// q' ranging over the same window as q.
double bisymbol_seminorm_estimate(const Bisymbol& a, int n_derivs, const SampleWindow& win,
                                  double hbar = 1.0, Complex z = Complex(0.0, 0.0));

/// Expansion of a bisymbol into a t-symbol series: term j is
/// (i^j / j!) (d_p . d_q')^j a(q + (1-t)q', p, q - t q')|_{q'=0}.
SymbolSeries bisymbol_expansion(const Bisymbol& a, int j_max);

/// Series of chi #^t a for chi = chi(q) (multiplication from the left).
SymbolSeries sharp_left(const Symbol& chi, const Symbol& a, double t, int j_max);
/// Series of a #^t chi (multiplication from the right).
SymbolSeries sharp_right(const Symbol& a, const Symbol& chi, double t, int j_max);

/// Diffeomorphism of an angular arc with closed-form derivative and inverse,
/// given as expression builders (u is an arbitrary argument expression).
struct AngularMap {
    std::string name;
    std::function<Expr(const Expr&)> fwd;   // phi(u)
    std::function<Expr(const Expr&)> inv;   // phi^-1(u)
    std::function<Expr(const Expr&)> dfwd;  // (dphi/dtheta)(u)
    double arc_lo = -kPi, arc_hi = kPi;

    AngularMap inverse() const;
    double apply(double theta) const;
    double apply_inverse(double theta) const;
    double deriv(double theta) const;
};

AngularMap identity_arc_map();
/// Circle Moebius map phi(theta) = 2 atan(k tan(theta/2)), k = (1-a)/(1+a),
/// a in (-1, 1); inverse is the map with parameter -a.
AngularMap moebius_arc_map(double a);

/// Leading-order pushforward under (theta, eta) -> (phi(theta), eta / phi'(theta)).
Symbol chart_transfer_leading(const Symbol& a, const AngularMap& map);

/// (z - sigma)^-1 as a Symbol of order -m; fails if the sampled ellipticity
/// margin min |z - sigma| <rho (+) f^-1 eta>^-m is not positive.
Symbol resolvent_symbol(const Symbol& sigma, Complex z, const SampleWindow& win);

/// Grid-sampled Delta_N(z) = sum_{l<=N} sup <.>^{m(l+1)} / |z - sigma|^{l+1}.
ResolventBound delta_n_bound(const Symbol& sigma, Complex z, int n, const SampleWindow& win);

// Text form ------------------------------------------------------------------

std::string symbol_to_text(const Symbol& s);
Symbol symbol_from_text(const std::string& text, const WeightFunction& weight);
std::string bisymbol_to_text(const Bisymbol& s);
Bisymbol bisymbol_from_text(const std::string& text, const WeightFunction& weight);
std::string series_to_text(const SymbolSeries& s);
SymbolSeries series_from_text(const std::string& text, const WeightFunction& weight);

}  // namespace endcalc
