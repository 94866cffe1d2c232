#pragma once

#include <map>

#include "endcalc/grid.hpp"
#include "endcalc/symbols.hpp"

namespace endcalc {

/// Semiclassical differential operator in the normalized frame:
///   P u = sum_{|alpha| <= m} p_alpha(hbar; r, theta)
///         (f(r)^-1 hbar D_theta)^{alpha'} (hbar D_r)^{alpha_0} u,
/// with hbar-polynomial coefficients p_alpha = sum_j hbar^j p_{alpha,j}.
/// Derivatives act spectrally on the grid; coefficients act pointwise.
class DiffOp {
  public:
    DiffOp(int order, WeightFunction weight) : order_(order), weight_(std::move(weight)) {}

    /// Sets p_{alpha, hbar_deg} for alpha = (a0, a1). Silently drops exact zeros.
    void set_coeff(int a0, int a1, int hbar_deg, const Expr& c);
    int order() const { return order_; }
    const WeightFunction& weight() const { return weight_; }
    /// alpha -> hbar-graded coefficient list (index = hbar degree)
    const std::map<std::pair<int, int>, std::vector<Expr>>& coeffs() const { return coeffs_; }

    HalfDensityField apply(const HalfDensityField& u) const;
    /// Exact discrete adjoint (reversed composition of multiplier and
    /// pointwise-coefficient adjoints).
    HalfDensityField apply_adjoint(const HalfDensityField& u) const;

    Symbol principal_symbol() const;

    struct BfReport {
        bool ok = true;
        double worst = 0.0;  // largest weighted-derivative magnitude seen
    };
    /// Samples (f^-1 d_theta)^{a'} d_r^{a0} p_{alpha,j} for |a| <= 2 over the
    /// window; fails on non-finite values or magnitudes above `bound`.
    BfReport check_bf(const SampleWindow& win, double bound = 1e6) const;

  private:
    int order_;
    WeightFunction weight_;
    std::map<std::pair<int, int>, std::vector<Expr>> coeffs_;
};

struct EllipticityReport {
    Complex z{0.0, 0.0};
    double c_lower = 0.0;
    double c_upper = 0.0;
    bool elliptic = false;
    Point worst;  // sample attaining c_lower
};

/// Grid min/max of |z - sigma(P)| <rho (+) f^-1 eta>^-m over the window.
EllipticityReport check_elliptic(const DiffOp& p, Complex z, const SampleWindow& win);

/// i^-1 hbar L_X for X = X1 d_r + f^-1 Y1 d_theta acting on half-densities:
/// first-order coefficients X1, Y1 plus the hbar-level divergence term
/// -(i/2)(d_r X1 + f^-1 d_theta Y1).
DiffOp lie_derivative(const Expr& x1, const Expr& y1, const WeightFunction& f,
                      const SampleWindow& bf_window);

/// -hbar^2 Laplacian of g = dr^2 + f(r)^2 h(theta) dtheta^2 on half-densities
/// (dimension 2). Layers: principal rho^2 + h^-1 (f^-1 eta)^2; an hbar
/// first-order angular term when h is not constant; and the hbar^2 potential
///   -V = (1/4)(d_r log f)^2 + (1/2) d_r^2 log f + f^-2 ((7/16) h^-3 h'^2
///        - (1/4) h^-2 h'').
DiffOp warped_laplacian(const WeightFunction& f, const Expr& h, const SampleWindow& bf_window);

/// Constant-coefficient model operator (hbar D_r)^2 + (hbar D_theta)^2.
DiffOp flat_laplacian();

// Text form: header (order, weight name) plus one line per (alpha, hbar
// degree, expression) triple.
std::string diffop_to_text(const DiffOp& p);
DiffOp diffop_from_text(const std::string& text, const WeightFunction& weight);

}  // namespace endcalc
