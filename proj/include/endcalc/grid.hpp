#pragma once

#include <memory>
#include <string>
#include <vector>

#include "endcalc/common.hpp"
#include "endcalc/expr.hpp"

namespace endcalc {

/// Periodic computational window: r in [r_origin, r_origin + L_r), theta in
/// [0, 2pi). Dual lattice: rho = (2 pi hbar / L_r) k, eta = hbar l with
/// signed indices k in [-n_r/2, n_r/2), l in [-n_theta/2, n_theta/2), so the
/// phase exp(i p (q - q') / hbar) is exactly periodic on the grid.
struct Grid {
    double r_origin = 0.0;
    double L_r = 16.0;
    int n_r = 64;
    int n_theta = 16;
    double hbar = 0.125;

    /// Validates power-of-two sizes >= 8 and eta coverage hbar*n_theta/2 >= eta_need.
    static std::shared_ptr<const Grid> make(double r_origin, double L_r, int n_r, int n_theta,
                                            double hbar, double eta_need = 0.0);

    double dr() const { return L_r / n_r; }
    double dtheta() const { return 2.0 * kPi / n_theta; }
    double r(int i) const { return r_origin + i * dr(); }
    double theta(int j) const { return j * dtheta(); }
    static int signed_freq(int k, int n) { return k < (n + 1) / 2 ? k : k - n; }
    double rho(int k) const { return 2.0 * kPi * hbar / L_r * signed_freq(k, n_r); }
    double eta(int l) const { return hbar * signed_freq(l, n_theta); }
    std::size_t size() const { return std::size_t(n_r) * n_theta; }
    /// quadrature weight dr * dtheta (equal-weight trapezoid on the torus)
    double cell() const { return dr() * dtheta(); }
};

/// Coefficient v of a half-density v |dr dtheta|^(1/2), sampled on a Grid.
/// Layout: v[i * n_theta + j].
struct HalfDensityField {
    std::shared_ptr<const Grid> grid;
    std::vector<Complex> v;

    explicit HalfDensityField(std::shared_ptr<const Grid> g)
        : grid(std::move(g)), v(grid->size(), Complex(0.0, 0.0)) {}
    HalfDensityField() = default;
};

double l2_norm(const HalfDensityField& u);
/// Conjugate-linear in the second slot: <u, v> = sum u conj(v) dq.
Complex inner(const HalfDensityField& u, const HalfDensityField& w);

HalfDensityField operator+(const HalfDensityField& a, const HalfDensityField& b);
HalfDensityField operator-(const HalfDensityField& a, const HalfDensityField& b);
HalfDensityField operator*(Complex c, const HalfDensityField& a);

/// Semiclassical DFT pair on the grid:
///   forward: uhat(p) = sum_q u(q) exp(-i p q / hbar)
///   inverse: u(q) = (1 / (n_r n_theta)) sum_p uhat(p) exp(+i p q / hbar)
/// Twiddles include the r_origin phase so p and q refer to true coordinates.
class Dft {
  public:
    explicit Dft(const Grid& g);
    void forward(const std::vector<Complex>& in, std::vector<Complex>& out) const;
    void inverse(const std::vector<Complex>& in, std::vector<Complex>& out) const;
    /// exp(-i (rho_k r_i + eta_l theta_j) / hbar)
    Complex twiddle(int i, int j, int k, int l) const { return wr_[k][i] * wt_[l][j]; }

  private:
    int n_r_, n_theta_;
    std::vector<std::vector<Complex>> wr_, wt_;  // [freq][space]
};

/// Random band-limited test field: trigonometric modes with |freq| below a
/// third of the Nyquist index, shaped by a degree-12 cosine-power envelope in
/// r that vanishes below 1e-12 within 10% margins of the window. Normalized
/// to unit L2 norm. Deterministic in the seed. `extra_r_modes` caps the
/// random radial modes on top of the envelope degree (-1: fill the band);
/// small caps keep symbol-table products far from the Nyquist fold.
HalfDensityField random_band_limited_field(std::shared_ptr<const Grid> grid, std::uint64_t seed,
                                           int extra_r_modes = -1);

/// Margin maximum: max |v| over the 10% bands at both r-window ends.
double margin_max(const HalfDensityField& u);

/// Zeroes the top third of both dual-lattice axes.
void band_limit(HalfDensityField& u);

// Binary field I/O: 32-byte header (magic "HDF1", u32 n_r, u32 n_theta,
// f32 L_r, f32 r_origin, f32 hbar, 8 reserved bytes), then n_r * n_theta
// complex64 values (float32 re, im pairs), row-major in r, little-endian.
void write_field(const std::string& path, const HalfDensityField& u);
HalfDensityField read_field(const std::string& path);

/// Partition of unity from the bump exp(-1/(1-r^2)) on (-1,1): members
/// psi_j(r) = psi(r - j) / sum_k psi(r - k), so sum_j psi_j == 1 exactly.
class PartitionOfUnity {
  public:
    PartitionOfUnity();
    double member(int j, double r) const;
    std::vector<double> member_on_grid(int j, const Grid& g) const;
    const Expr& base_expr() const { return base_; }
    /// raw un-normalized bump value psi(x)
    static double bump(double x);

  private:
    Expr base_;
};

}  // namespace endcalc
