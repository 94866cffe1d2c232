#pragma once

#include <functional>

#include "endcalc/grid.hpp"
#include "endcalc/grid_eval.hpp"
#include "endcalc/symbols.hpp"

namespace endcalc {

/// Discretized Op^t_hbar(a) on a fixed grid, hbar taken from the grid and z
/// substituted at construction:
///   (Op^t u)(q) = (n_r n_theta)^-1 sum_p sum_q' a(tq + (1-t)q', p)
///                 e^{i p (q - q') / hbar} u(q').
/// t = 1 and t = 0 run through DFT fast paths with the symbol table on the
/// grid x dual lattice; generic t does the direct double spatial sum.
/// The discrete adjoint is exactly Op^{1-t}(conj a).
class QuantizedOp {
  public:
    QuantizedOp(const Expr& symbol, std::shared_ptr<const Grid> grid, double t,
                Complex z = Complex(0.0, 0.0));
    /// Sums hbar^j terms of the series; t and z are taken from the series.
    QuantizedOp(const SymbolSeries& series, std::shared_ptr<const Grid> grid);

    HalfDensityField apply(const HalfDensityField& u) const;
    HalfDensityField apply_adjoint(const HalfDensityField& u) const;

    const std::shared_ptr<const Grid>& grid() const { return grid_; }
    double t() const { return t_; }

  private:
    void init(const Expr& symbol, Complex z);
    void fill_row(std::size_t iq, Complex* row) const;  // A(q_iq, .) over the dual lattice
    HalfDensityField apply_left(const HalfDensityField& u, bool conj_table) const;   // t = 1 form
    HalfDensityField apply_right(const HalfDensityField& u, bool conj_table) const;  // t = 0 form
    HalfDensityField apply_generic(const HalfDensityField& u, double t, bool conj_table) const;

    std::shared_ptr<const Grid> grid_;
    double t_ = 1.0;
    std::shared_ptr<Dft> dft_;
    std::unique_ptr<GridEvaluator> eval_;      // q-grid x dual lattice (t in {0,1})
    std::unique_ptr<GridEvaluator> eval_mid_;  // spatial-pair midpoints (generic t)
    std::vector<Complex> table_;               // cached rows when within budget
    std::vector<Complex> prow_;                // q-independent symbols: single row
    bool multiplier_ = false;
};

HalfDensityField apply_op(const Expr& symbol, double t, const HalfDensityField& u,
                          Complex z = Complex(0.0, 0.0));
HalfDensityField apply_op(const SymbolSeries& series, const HalfDensityField& u);

/// Direct triple-sum quantization of a bisymbol a(q, p, q') (primed variables
/// carry q'). Test oracle; pointwise evaluation, small grids only.
HalfDensityField apply_op_bisymbol(const Expr& a, const HalfDensityField& u,
                                   Complex z = Complex(0.0, 0.0));

using FieldOp = std::function<HalfDensityField(const HalfDensityField&)>;

/// Power iteration on A*A from random starts; returns the largest Rayleigh
/// quotient square root seen (a lower bound on the operator norm).
double op_norm_estimate(const FieldOp& apply, const FieldOp& apply_adjoint,
                        std::shared_ptr<const Grid> grid, int trials = 2, int iters = 15,
                        std::uint64_t seed = 1);

struct BlockNormTable {
    std::vector<int> js, ks;
    std::vector<std::vector<double>> norms;  // norms[ji][ki] = ||psi_j Op psi_k||
};

/// Operator-norm estimates of the cutoff blocks psi_j Op^t(a) psi_k.
BlockNormTable block_norm_table(const Expr& symbol, double t, Complex z,
                                std::shared_ptr<const Grid> grid, const PartitionOfUnity& pou,
                                const std::vector<int>& js, const std::vector<int>& ks,
                                int trials = 1, int iters = 12, std::uint64_t seed = 3);

/// Decay exponent fit: slope of -log norm versus log <j-k>, using row maxima
/// over |j-k|, ignoring entries below `floor_rel` times the diagonal maximum.
LineFit block_decay_fit(const BlockNormTable& table, double floor_rel = 1e-13);

struct ScalingMap {
    int j = 0;
    int k = 0;
    double t = 1.0;
    double factor = 1.0;  // f(t j + (1 - t) k)

    static ScalingMap make(const WeightFunction& f, int j, int k, double t);
};

/// Separable test symbol a(q, p) = radial(r, rho) * angular(theta, eta).
struct SeparableSymbol {
    Expr radial;
    Expr angular;
};

struct QuadratureSpec {
    double r_lo = -2.0, r_hi = 7.0;
    int n_r = 160;
    double theta_half_width = 2.0;  // base angular window half-width
    int n_theta = 96;
    double rho_max = 4.0;
    int n_rho = 80;
    double eta_max = 4.0;
    int n_eta = 80;
};

struct ScalingCheck {
    double u_norm = 0.0;
    double lhs_norm = 0.0;
    double rhs_norm = 0.0;
    double diff_rel = 0.0;           // ||lhs - rhs|| / ||u||
    double unitarity_defect = 0.0;   // | ||Theta^* u|| - ||u|| | / ||u||
};

/// Direct-quadrature check of the scaling conjugation identity
///   (Theta_jk)_* psi_j Op^t(a) psi_k (Theta_jk)^* = psi_j Op^t((Theta~_jk)_* a) psi_k
/// on a non-periodic window, with u given in closed form.
ScalingCheck scaling_conjugate(const SeparableSymbol& a, const ScalingMap& map,
                               const PartitionOfUnity& pou, double hbar,
                               const QuadratureSpec& quad,
                               const std::function<Complex(double, double)>& u);

/// One-dimensional angular t-quantization by direct quadrature on an arc
/// (chart machinery): out[m] = Op^t(sym) u at out_pts[m], with u sampled on a
/// uniform quadrature grid over [in_lo, in_hi]. The eta point count is raised
/// automatically until aliased kernel images clear the arc span.
std::vector<Complex> apply_theta_op(const Expr& sym, double t, double hbar,
                                    const std::vector<double>& out_pts, double in_lo,
                                    double in_hi, int n_in, double eta_max, int n_eta,
                                    const std::function<Complex(double)>& u);

}  // namespace endcalc
