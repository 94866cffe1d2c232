#pragma once

#include "endcalc/diffops.hpp"
#include "endcalc/quantize.hpp"

namespace endcalc {

/// Exact hbar-graded expansion of
///   sum_alpha p_alpha(hbar; q) f^{-|alpha'|} (p + hbar D_q)^alpha a,
/// the symbol of P Op^1(a). A finite hbar-polynomial; grade 0 is sigma(P) a.
SymbolSeries compose_diffop_symbol(const DiffOp& p, const Expr& a,
                                   Complex z = Complex(0.0, 0.0), double a_order = 0.0);

/// hbar-coefficients of the full defect (z - P) # b - 1 computed from scratch
/// by the exact composition, grades 0..max_grade. For a correctly built
/// parametrix the grades 1..N are structurally zero.
std::vector<Expr> defect_coefficients(const DiffOp& p, const SymbolSeries& b, int max_grade);

struct Parametrix {
    SymbolSeries series;  // terms b_0..b_N of orders -m-j, t = 1
    Expr remainder;       // e_{N+1,0}: leading hbar-coefficient of the residual defect
    int achieved_n = -1;
};

/// The recursion b_0 = (z - sigma)^-1, b_{j+1} = -e_{j+1,0} (z - sigma)^-1
/// with the defect tracked exactly in the symbol algebra.
Parametrix build_parametrix(const DiffOp& p, Complex z, int n,
                            const SampleWindow& elliptic_window,
                            std::size_t node_budget = 200000);

struct ResidualConfig {
    double r_origin = -8.0;
    double L_r = 16.0;
    int n_r = 64;
    int n_theta = 16;
    int n_fields = 3;
    std::uint64_t seed = 12345;
    /// Radial modulation e^{i rho0 r / hbar} (snapped to the dual lattice) so
    /// test fields carry a fixed semiclassical frequency; 0 disables it.
    double rho0 = 0.0;
    /// Random radial modes on top of the field envelope (-1: fill the band).
    /// Small values keep the quantized symbol tables clear of aliasing.
    int field_modes = 2;
};

struct ResidualReport {
    std::vector<double> hbars;
    std::vector<std::vector<double>> residuals;  // [hbar index][field index]
    double slope = 0.0;
    double fit_residual = 0.0;
};

/// Per hbar and test field: ||(z - P) Op^1(sum hbar^l b_l) u - u|| / ||u||,
/// with the log-log slope over hbar.
ResidualReport residual_report(const DiffOp& p, const SymbolSeries& b, Complex z,
                               const std::vector<double>& hbars, const ResidualConfig& cfg);

struct SelfAdjointReport {
    double symmetry_defect = 0.0;
    std::vector<double> hbars;
    std::vector<double> norm_plus;   // ||R_{+i}|| estimates per hbar
    std::vector<double> norm_minus;  // ||R_{-i}||
    double hbar0 = 0.0;              // largest hbar with both estimates < 1
    bool hbar0_found = false;
    std::vector<double> neumann_residuals;  // ||(+i - P) w_K - u|| / ||u|| per K at hbar_neumann
    double hbar_neumann = 0.0;
    double neumann_final = 0.0;
};

/// Essential self-adjointness pipeline: symmetry check, parametrices at
/// z = +-i, resolvent-defect norms per hbar, and Neumann inversion of 1 + R.
SelfAdjointReport selfadjoint_pipeline(const DiffOp& p, const std::vector<double>& hbars,
                                       int n_series, const ResidualConfig& cfg,
                                       int neumann_k = 20,
                                       const SampleWindow& elliptic_window = SampleWindow{});

struct CommutatorReport {
    std::vector<double> deltas;
    std::vector<double> norms;  // ||[P, chi(delta r~)] Op^1(b) v||
    double slope = 0.0;
};

/// Cutoff commutator decay: chi is a smooth plateau cutoff, r~ = r - r_origin.
CommutatorReport cutoff_commutator(const DiffOp& p, const SymbolSeries& b,
                                   const std::vector<double>& deltas, double hbar,
                                   const ResidualConfig& cfg);

}  // namespace endcalc
