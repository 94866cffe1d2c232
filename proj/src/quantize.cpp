#include "endcalc/quantize.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace endcalc {

namespace {
constexpr std::size_t kTableBudget = std::size_t(1) << 25;  // cached entries (512 MiB)

ProductGrid lattice_grid(const Grid& g) {
    ProductGrid pg;
    pg.r.resize(g.n_r);
    pg.theta.resize(g.n_theta);
    pg.rho.resize(g.n_r);
    pg.eta.resize(g.n_theta);
    for (int i = 0; i < g.n_r; ++i) pg.r[i] = g.r(i);
    for (int j = 0; j < g.n_theta; ++j) pg.theta[j] = g.theta(j);
    for (int k = 0; k < g.n_r; ++k) pg.rho[k] = g.rho(k);
    for (int l = 0; l < g.n_theta; ++l) pg.eta[l] = g.eta(l);
    return pg;
}

ProductGrid midpoint_grid(const Grid& g, double t) {
    ProductGrid pg;
    pg.r.resize(std::size_t(g.n_r) * g.n_r);
    pg.theta.resize(std::size_t(g.n_theta) * g.n_theta);
    pg.rho.resize(g.n_r);
    pg.eta.resize(g.n_theta);
    for (int i = 0; i < g.n_r; ++i)
        for (int i2 = 0; i2 < g.n_r; ++i2)
            pg.r[std::size_t(i) * g.n_r + i2] = t * g.r(i) + (1.0 - t) * g.r(i2);
    for (int j = 0; j < g.n_theta; ++j)
        for (int j2 = 0; j2 < g.n_theta; ++j2)
            pg.theta[std::size_t(j) * g.n_theta + j2] = t * g.theta(j) + (1.0 - t) * g.theta(j2);
    for (int k = 0; k < g.n_r; ++k) pg.rho[k] = g.rho(k);
    for (int l = 0; l < g.n_theta; ++l) pg.eta[l] = g.eta(l);
    return pg;
}

Expr series_to_expr(const SymbolSeries& s) {
    std::vector<Expr> terms;
    for (std::size_t j = 0; j < s.terms.size(); ++j)
        terms.push_back(ipow(var(Var::Hbar), int(j)) * s.terms[j]);
    return sum(std::move(terms));
}
}  // namespace

QuantizedOp::QuantizedOp(const Expr& symbol, std::shared_ptr<const Grid> grid, double t, Complex z)
    : grid_(std::move(grid)), t_(t) {
    init(symbol, z);
}

QuantizedOp::QuantizedOp(const SymbolSeries& series, std::shared_ptr<const Grid> grid)
    : grid_(std::move(grid)), t_(series.t) {
    init(series_to_expr(series), series.z);
}

void QuantizedOp::init(const Expr& symbol, Complex z) {
    const Grid& g = *grid_;
    dft_ = std::make_shared<Dft>(g);
    if (t_ == 1.0 || t_ == 0.0) {
        eval_ = std::make_unique<GridEvaluator>(symbol, lattice_grid(g), g.hbar, z);
        const std::size_t nq = g.size(), np = g.size();
        if (!eval_->depends_on_q()) {
            multiplier_ = true;
            prow_.resize(np);
            eval_->eval_q_row(0, 0, prow_.data());
        } else if (nq * np <= kTableBudget) {
            table_.resize(nq * np);
            parallel_for(std::size_t(g.n_r), [&](std::size_t i) {
                for (int j = 0; j < g.n_theta; ++j) {
                    const std::size_t iq = i * g.n_theta + j;
                    eval_->eval_q_row(i, j, table_.data() + iq * np);
                }
            });
        }
    } else {
        eval_mid_ = std::make_unique<GridEvaluator>(symbol, midpoint_grid(g, t_), g.hbar, z);
    }
}

void QuantizedOp::fill_row(std::size_t iq, Complex* row) const {
    const Grid& g = *grid_;
    const std::size_t np = g.size();
    if (multiplier_) {
        std::copy(prow_.begin(), prow_.end(), row);
    } else if (!table_.empty()) {
        std::copy(table_.begin() + iq * np, table_.begin() + (iq + 1) * np, row);
    } else {
        eval_->eval_q_row(iq / g.n_theta, iq % g.n_theta, row);
    }
}

HalfDensityField QuantizedOp::apply_left(const HalfDensityField& u, bool conj_table) const {
    const Grid& g = *grid_;
    const std::size_t np = g.size();
    std::vector<Complex> uhat;
    dft_->forward(u.v, uhat);
    HalfDensityField out(grid_);
    const double scale = 1.0 / double(np);
    parallel_for(std::size_t(g.n_r), [&](std::size_t i) {
        std::vector<Complex> row(np);
        for (int j = 0; j < g.n_theta; ++j) {
            fill_row(i * g.n_theta + j, row.data());
            Complex acc(0.0, 0.0);
            for (int k = 0; k < g.n_r; ++k)
                for (int l = 0; l < g.n_theta; ++l) {
                    // conj(twiddle) = e^{+i p q / hbar}
                    const Complex ph = std::conj(dft_->twiddle(int(i), j, k, l));
                    const std::size_t ip = std::size_t(k) * g.n_theta + l;
                    const Complex a = conj_table ? std::conj(row[ip]) : row[ip];
                    acc += a * ph * uhat[ip];
                }
            out.v[i * g.n_theta + j] = acc * scale;
        }
    });
    return out;
}

HalfDensityField QuantizedOp::apply_right(const HalfDensityField& u, bool conj_table) const {
    const Grid& g = *grid_;
    const std::size_t nq = g.size(), np = g.size();
    std::vector<Complex> vhat(np, Complex(0.0, 0.0));
    {
        std::vector<Complex> row(np);
        for (std::size_t iq = 0; iq < nq; ++iq) {
            const Complex uq = u.v[iq];
            if (uq == Complex(0.0, 0.0)) continue;
            fill_row(iq, row.data());
            const int i = int(iq / g.n_theta), j = int(iq % g.n_theta);
            for (int k = 0; k < g.n_r; ++k)
                for (int l = 0; l < g.n_theta; ++l) {
                    const std::size_t ip = std::size_t(k) * g.n_theta + l;
                    const Complex a = conj_table ? std::conj(row[ip]) : row[ip];
                    vhat[ip] += a * dft_->twiddle(i, j, k, l) * uq;
                }
        }
    }
    HalfDensityField out(grid_);
    dft_->inverse(vhat, out.v);
    return out;
}

HalfDensityField QuantizedOp::apply_generic(const HalfDensityField& u, double t,
                                            bool conj_table) const {
    const Grid& g = *grid_;
    const std::size_t np = g.size();
    HalfDensityField out(grid_);
    const double scale = 1.0 / double(np);
    // out(q) = scale * sum_{q'} u(q') * sum_p A(s(q,q'), p) e^{i p (q - q')/hbar}
    parallel_for(std::size_t(g.n_r), [&](std::size_t i) {
        std::vector<Complex> row(np);
        for (int j = 0; j < g.n_theta; ++j) {
            Complex acc(0.0, 0.0);
            for (int i2 = 0; i2 < g.n_r; ++i2) {
                // midpoint axes are indexed (out, in) at parameter t_, so the
                // adjoint (parameter 1 - t_) reads the transposed entry
                const std::size_t mr = (t == t_) ? (i * g.n_r + i2) : (std::size_t(i2) * g.n_r + i);
                for (int j2 = 0; j2 < g.n_theta; ++j2) {
                    const std::size_t iq2 = std::size_t(i2) * g.n_theta + j2;
                    const Complex uq = u.v[iq2];
                    if (uq == Complex(0.0, 0.0)) continue;
                    const std::size_t mt =
                        (t == t_) ? (std::size_t(j) * g.n_theta + j2)
                                  : (std::size_t(j2) * g.n_theta + j);
                    eval_mid_->eval_q_row(mr, mt, row.data());
                    Complex inner(0.0, 0.0);
                    for (int k = 0; k < g.n_r; ++k)
                        for (int l = 0; l < g.n_theta; ++l) {
                            const std::size_t ip = std::size_t(k) * g.n_theta + l;
                            const Complex ph = std::conj(dft_->twiddle(int(i), j, k, l)) *
                                               dft_->twiddle(i2, j2, k, l);
                            const Complex a = conj_table ? std::conj(row[ip]) : row[ip];
                            inner += a * ph;
                        }
                    acc += inner * uq;
                }
            }
            out.v[i * g.n_theta + j] = acc * scale;
        }
    });
    return out;
}

HalfDensityField QuantizedOp::apply(const HalfDensityField& u) const {
    if (u.grid->n_r != grid_->n_r || u.grid->n_theta != grid_->n_theta ||
        u.grid->hbar != grid_->hbar)
        throw GridError("apply: field grid does not match operator grid");
    if (t_ == 1.0) return apply_left(u, false);
    if (t_ == 0.0) return apply_right(u, false);
    return apply_generic(u, t_, false);
}

HalfDensityField QuantizedOp::apply_adjoint(const HalfDensityField& u) const {
    if (t_ == 1.0) return apply_right(u, true);   // Op^0(conj a)
    if (t_ == 0.0) return apply_left(u, true);    // Op^1(conj a)
    return apply_generic(u, 1.0 - t_, true);
}

HalfDensityField apply_op(const Expr& symbol, double t, const HalfDensityField& u, Complex z) {
    return QuantizedOp(symbol, u.grid, t, z).apply(u);
}

HalfDensityField apply_op(const SymbolSeries& series, const HalfDensityField& u) {
    return QuantizedOp(series, u.grid).apply(u);
}

HalfDensityField apply_op_bisymbol(const Expr& a, const HalfDensityField& u, Complex z) {
    const Grid& g = *u.grid;
    const rnf::Rational ra = rnf::rat_subst_const(
        rnf::to_rational(a), {{Var::Hbar, Complex(g.hbar, 0.0)}, {Var::Z, z}});
    Dft dft(g);
    HalfDensityField out(u.grid);
    const double scale = 1.0 / double(g.size());
    parallel_for(std::size_t(g.n_r), [&](std::size_t i) {
        Point pt;
        pt.hbar = g.hbar;
        pt.z = z;
        for (int j = 0; j < g.n_theta; ++j) {
            pt.r = g.r(int(i));
            pt.theta = g.theta(j);
            Complex acc(0.0, 0.0);
            for (int i2 = 0; i2 < g.n_r; ++i2)
                for (int j2 = 0; j2 < g.n_theta; ++j2) {
                    const Complex uq = u.v[std::size_t(i2) * g.n_theta + j2];
                    if (uq == Complex(0.0, 0.0)) continue;
                    pt.r_prime = g.r(i2);
                    pt.theta_prime = g.theta(j2);
                    Complex inner(0.0, 0.0);
                    for (int k = 0; k < g.n_r; ++k)
                        for (int l = 0; l < g.n_theta; ++l) {
                            pt.rho = g.rho(k);
                            pt.eta = g.eta(l);
                            const Complex ph = std::conj(dft.twiddle(int(i), j, k, l)) *
                                               dft.twiddle(i2, j2, k, l);
                            inner += rnf::rat_eval(ra, pt) * ph;
                        }
                    acc += inner * uq;
                }
            out.v[i * g.n_theta + j] = acc * scale;
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// operator norms

double op_norm_estimate(const FieldOp& apply, const FieldOp& apply_adjoint,
                        std::shared_ptr<const Grid> grid, int trials, int iters,
                        std::uint64_t seed) {
    double best = 0.0;
    for (int tr = 0; tr < trials; ++tr) {
        Rng rng(seed + std::uint64_t(tr) * 7919);
        HalfDensityField v(grid);
        for (auto& c : v.v) c = rng.next_complex();
        double nv = l2_norm(v);
        if (nv == 0.0) continue;
        for (auto& c : v.v) c /= nv;
        double lambda = 0.0;
        for (int it = 0; it < iters; ++it) {
            HalfDensityField w = apply(v);
            const double nw = l2_norm(w);
            lambda = nw * nw;  // ||A v||^2 with ||v|| = 1
            if (nw == 0.0) break;
            HalfDensityField x = apply_adjoint(w);
            const double nx = l2_norm(x);
            if (nx == 0.0) break;
            for (auto& c : x.v) c /= nx;
            v = std::move(x);
        }
        best = std::max(best, std::sqrt(lambda));
    }
    return best;
}

BlockNormTable block_norm_table(const Expr& symbol, double t, Complex z,
                                std::shared_ptr<const Grid> grid, const PartitionOfUnity& pou,
                                const std::vector<int>& js, const std::vector<int>& ks,
                                int trials, int iters, std::uint64_t seed) {
    const Grid& g = *grid;
    for (int j : js)
        if (j - 1 < g.r_origin - 1e-9 || j + 1 > g.r_origin + g.L_r + 1e-9)
            throw GridError("block_norm_table: psi_" + std::to_string(j) +
                            " support escapes the r-window");
    for (int k : ks)
        if (k - 1 < g.r_origin - 1e-9 || k + 1 > g.r_origin + g.L_r + 1e-9)
            throw GridError("block_norm_table: psi_" + std::to_string(k) +
                            " support escapes the r-window");
    auto op = std::make_shared<QuantizedOp>(symbol, grid, t, z);
    BlockNormTable out;
    out.js = js;
    out.ks = ks;
    out.norms.assign(js.size(), std::vector<double>(ks.size(), 0.0));
    for (std::size_t ji = 0; ji < js.size(); ++ji) {
        const auto pj = pou.member_on_grid(js[ji], g);
        for (std::size_t ki = 0; ki < ks.size(); ++ki) {
            const auto pk = pou.member_on_grid(ks[ki], g);
            FieldOp fwd = [&, op](const HalfDensityField& u) {
                HalfDensityField y = u;
                for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] *= pk[i];
                y = op->apply(y);
                for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] *= pj[i];
                return y;
            };
            FieldOp adj = [&, op](const HalfDensityField& u) {
                HalfDensityField y = u;
                for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] *= pj[i];
                y = op->apply_adjoint(y);
                for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] *= pk[i];
                return y;
            };
            out.norms[ji][ki] = op_norm_estimate(fwd, adj, grid, trials, iters, seed);
        }
    }
    return out;
}

LineFit block_decay_fit(const BlockNormTable& table, double floor_rel) {
    // max norm per separation d = |j - k|
    std::map<int, double> by_sep;
    double diag = 0.0;
    for (std::size_t ji = 0; ji < table.js.size(); ++ji)
        for (std::size_t ki = 0; ki < table.ks.size(); ++ki) {
            const int d = std::abs(table.js[ji] - table.ks[ki]);
            by_sep[d] = std::max(by_sep[d], table.norms[ji][ki]);
            if (d == 0) diag = std::max(diag, table.norms[ji][ki]);
        }
    std::vector<double> x, y;
    for (const auto& [d, n] : by_sep) {
        if (d == 0) continue;
        if (n < floor_rel * diag) continue;
        x.push_back(std::log(std::sqrt(1.0 + double(d) * double(d))));
        y.push_back(-std::log(n));
    }
    return fit_line(x, y);
}

// ---------------------------------------------------------------------------
// scaling conjugation via direct quadrature

ScalingMap ScalingMap::make(const WeightFunction& f, int j, int k, double t) {
    ScalingMap m;
    m.j = j;
    m.k = k;
    m.t = t;
    m.factor = f(t * j + (1.0 - t) * k);
    if (!(m.factor >= 1.0 - 1e-12))
        throw Error("scaling map: factor f(tj+(1-t)k) = " + format_double(m.factor) + " < 1");
    return m;
}

namespace {

struct Quad1D {
    std::vector<double> x, w;
    Quad1D() = default;
    Quad1D(double lo, double hi, int n) {
        x.resize(n);
        w.resize(n);
        const double h = (hi - lo) / (n - 1);
        for (int i = 0; i < n; ++i) {
            x[i] = lo + i * h;
            w[i] = (i == 0 || i == n - 1) ? 0.5 * h : h;
        }
    }
};

// kernel K[out][in] of the 1-d t-quantization with symbol S(x, xi):
// (1/2 pi hbar) int S(t x + (1-t) x', xi) e^{i xi (x - x')/hbar} dxi, times
// the input quadrature weight.
std::vector<std::vector<Complex>> quant_kernel(const Expr& sym, Var xvar, Var xivar, double t,
                                               double hbar, const std::vector<double>& x_out,
                                               const Quad1D& x_in, const Quad1D& xi) {
    // spatial step must resolve the fastest xi phase
    const double dx_in = x_in.x.size() > 1 ? x_in.x[1] - x_in.x[0] : 0.0;
    const double xi_max = std::max(std::abs(xi.x.front()), std::abs(xi.x.back()));
    if (dx_in * xi_max / hbar > 0.85 * kPi)
        throw GridError("scaling quadrature: phase undersampled (dx * xi_max / hbar = " +
                        format_double(dx_in * xi_max / hbar) + ")");
    // xi step must keep the aliased kernel images outside the spatial span
    const double dxi = xi.x.size() > 1 ? xi.x[1] - xi.x[0] : 0.0;
    double span = 0.0;
    for (double xo : x_out) {
        span = std::max(span, std::abs(xo - x_in.x.front()));
        span = std::max(span, std::abs(xo - x_in.x.back()));
    }
    if (dxi > 0.0 && 2.0 * kPi * hbar / dxi < 1.15 * span)
        throw GridError("scaling quadrature: xi step aliases within the window (ghost spacing " +
                        format_double(2.0 * kPi * hbar / dxi) + " < span " + format_double(span) +
                        ")");
    std::vector<std::vector<Complex>> kernel(x_out.size(),
                                             std::vector<Complex>(x_in.x.size()));
    if (t == 1.0) {
        // symbol values depend on the output point only: tabulate once
        parallel_for(x_out.size(), [&](std::size_t a) {
            Point pt;
            std::vector<Complex> srow(xi.x.size());
            for (std::size_t m = 0; m < xi.x.size(); ++m) {
                switch (xvar) {
                    case Var::R: pt.r = x_out[a]; break;
                    default: pt.theta = x_out[a]; break;
                }
                switch (xivar) {
                    case Var::Rho: pt.rho = xi.x[m]; break;
                    default: pt.eta = xi.x[m]; break;
                }
                srow[m] = xi.w[m] * eval(sym, pt);
            }
            for (std::size_t b = 0; b < x_in.x.size(); ++b) {
                Complex acc(0.0, 0.0);
                for (std::size_t m = 0; m < xi.x.size(); ++m) {
                    const double phase = xi.x[m] * (x_out[a] - x_in.x[b]) / hbar;
                    acc += srow[m] * Complex(std::cos(phase), std::sin(phase));
                }
                kernel[a][b] = acc * (x_in.w[b] / (2.0 * kPi * hbar));
            }
        });
        return kernel;
    }
    parallel_for(x_out.size(), [&](std::size_t a) {
        Point pt;
        for (std::size_t b = 0; b < x_in.x.size(); ++b) {
            const double mid = t * x_out[a] + (1.0 - t) * x_in.x[b];
            Complex acc(0.0, 0.0);
            for (std::size_t m = 0; m < xi.x.size(); ++m) {
                switch (xvar) {
                    case Var::R: pt.r = mid; break;
                    default: pt.theta = mid; break;
                }
                switch (xivar) {
                    case Var::Rho: pt.rho = xi.x[m]; break;
                    default: pt.eta = xi.x[m]; break;
                }
                const double phase = xi.x[m] * (x_out[a] - x_in.x[b]) / hbar;
                acc += xi.w[m] * eval(sym, pt) * Complex(std::cos(phase), std::sin(phase));
            }
            kernel[a][b] = acc * (x_in.w[b] / (2.0 * kPi * hbar));
        }
    });
    return kernel;
}

using Matrix = std::vector<std::vector<Complex>>;

// out[a][c] = sum_{b,d} Kr[a][b] Kt[c][d] U[b][d]
Matrix apply_kernels(const Matrix& kr, const Matrix& kt, const Matrix& u) {
    const std::size_t na = kr.size(), nb = kr[0].size();
    const std::size_t nc = kt.size(), nd = kt[0].size();
    Matrix mid(nb, std::vector<Complex>(nc, Complex(0.0, 0.0)));
    for (std::size_t b = 0; b < nb; ++b)
        for (std::size_t c = 0; c < nc; ++c) {
            Complex acc(0.0, 0.0);
            for (std::size_t d = 0; d < nd; ++d) acc += kt[c][d] * u[b][d];
            mid[b][c] = acc;
        }
    Matrix out(na, std::vector<Complex>(nc, Complex(0.0, 0.0)));
    for (std::size_t a = 0; a < na; ++a)
        for (std::size_t b = 0; b < nb; ++b) {
            const Complex k = kr[a][b];
            if (k == Complex(0.0, 0.0)) continue;
            for (std::size_t c = 0; c < nc; ++c) out[a][c] += k * mid[b][c];
        }
    return out;
}

double quad_norm(const Matrix& u, const Quad1D& qr, const Quad1D& qt) {
    double s = 0.0;
    for (std::size_t a = 0; a < u.size(); ++a)
        for (std::size_t c = 0; c < u[a].size(); ++c)
            s += std::norm(u[a][c]) * qr.w[a] * qt.w[c];
    return std::sqrt(s);
}

}  // namespace

ScalingCheck scaling_conjugate(const SeparableSymbol& a, const ScalingMap& map,
                               const PartitionOfUnity& pou, double hbar,
                               const QuadratureSpec& quad,
                               const std::function<Complex(double, double)>& u) {
    const double F = map.factor;
    const double t = map.t;
    ScalingCheck out;

    // enough xi points to keep aliased kernel images outside the span
    auto xi_points = [&](double range_half, double span, int base_n) {
        const double d_max = 2.0 * kPi * hbar / (1.3 * span);
        return std::max(base_n, 1 + int(std::ceil(2.0 * range_half / d_max)));
    };
    const double thw = quad.theta_half_width;
    const Quad1D qr(quad.r_lo, quad.r_hi, quad.n_r);
    const Quad1D qth(-thw, thw, quad.n_theta);
    const Quad1D qrho(-quad.rho_max, quad.rho_max,
                      xi_points(quad.rho_max, quad.r_hi - quad.r_lo, quad.n_rho));
    const Quad1D qeta(-quad.eta_max, quad.eta_max,
                      xi_points(quad.eta_max, 2.0 * F * thw, quad.n_eta));

    // ---- rhs: psi_j Op^t(a_F) psi_k u on the base window, where the
    // conjugated angular symbol is a_F(theta, eta) = B(F theta, eta / F):
    // with the pullback (Theta^* v)(theta) = F^{-1/2} v(theta / F) used on the
    // lhs, the exact change of variables gives this orientation of the
    // canonical map. Its eta support grows by F, so the angular quadrature is
    // refined by the same factor.
    std::map<Var, Expr> tsub{{Var::Theta, F * var(Var::Theta)},
                             {Var::Eta, (1.0 / F) * var(Var::Eta)}};
    Expr ang_scaled = subst(a.angular, tsub);
    // point counts deliberately offset from the lhs grids so the two sides
    // are independent discretizations rather than exact rescalings
    const Quad1D qeta_s(-quad.eta_max * F, quad.eta_max * F,
                        17 + xi_points(quad.eta_max * F, 2.0 * thw, quad.n_eta));
    const int n_theta_fine = 13 + int(std::ceil((quad.n_theta - 1) * F));
    const Quad1D qth_fine(-thw, thw, n_theta_fine);

    Matrix u_base(qr.x.size(), std::vector<Complex>(qth.x.size()));
    for (std::size_t i = 0; i < qr.x.size(); ++i)
        for (std::size_t j = 0; j < qth.x.size(); ++j)
            u_base[i][j] = u(qr.x[i], qth.x[j]);
    out.u_norm = quad_norm(u_base, qr, qth);

    Matrix rhs_in(qr.x.size(), std::vector<Complex>(qth_fine.x.size()));
    for (std::size_t i = 0; i < qr.x.size(); ++i) {
        const double pk = pou.member(map.k, qr.x[i]);
        for (std::size_t j = 0; j < qth_fine.x.size(); ++j)
            rhs_in[i][j] = pk * u(qr.x[i], qth_fine.x[j]);
    }
    Matrix kr = quant_kernel(a.radial, Var::R, Var::Rho, t, hbar, qr.x, qr, qrho);
    Matrix kt_rhs =
        quant_kernel(ang_scaled, Var::Theta, Var::Eta, t, hbar, qth.x, qth_fine, qeta_s);
    Matrix rhs = apply_kernels(kr, kt_rhs, rhs_in);
    for (std::size_t i = 0; i < qr.x.size(); ++i) {
        const double pj = pou.member(map.j, qr.x[i]);
        for (auto& c : rhs[i]) c *= pj;
    }

    // ---- lhs: Theta_* psi_j Op^t(a) psi_k Theta^* u, evaluated on the same
    // output samples. Inner computation runs on the dilated angular window.
    const Quad1D qth_wide(-quad.theta_half_width * F, quad.theta_half_width * F,
                          1 + int(std::ceil((quad.n_theta - 1) * F)));
    Matrix u1(qr.x.size(), std::vector<Complex>(qth_wide.x.size()));
    for (std::size_t i = 0; i < qr.x.size(); ++i) {
        const double pk = pou.member(map.k, qr.x[i]);
        for (std::size_t j = 0; j < qth_wide.x.size(); ++j)
            u1[i][j] = pk * u(qr.x[i], qth_wide.x[j] / F) / std::sqrt(F);
    }
    {
        // unitarity of the pullback
        double n1 = 0.0;
        for (std::size_t i = 0; i < qr.x.size(); ++i)
            for (std::size_t j = 0; j < qth_wide.x.size(); ++j) {
                const double uv = std::norm(u(qr.x[i], qth_wide.x[j] / F) / std::sqrt(F));
                n1 += uv * qr.w[i] * qth_wide.w[j];
            }
        out.unitarity_defect = std::abs(std::sqrt(n1) - out.u_norm) / out.u_norm;
    }
    // output angular samples for the inner op: F * theta_out
    std::vector<double> th_out_scaled(qth.x.size());
    for (std::size_t j = 0; j < qth.x.size(); ++j) th_out_scaled[j] = F * qth.x[j];
    Matrix kt_lhs =
        quant_kernel(a.angular, Var::Theta, Var::Eta, t, hbar, th_out_scaled, qth_wide, qeta);
    Matrix lhs = apply_kernels(kr, kt_lhs, u1);
    for (std::size_t i = 0; i < qr.x.size(); ++i) {
        const double pj = pou.member(map.j, qr.x[i]);
        for (std::size_t j = 0; j < qth.x.size(); ++j) lhs[i][j] *= pj * std::sqrt(F);
    }

    Matrix diff = lhs;
    for (std::size_t i = 0; i < diff.size(); ++i)
        for (std::size_t j = 0; j < diff[i].size(); ++j) diff[i][j] -= rhs[i][j];
    out.lhs_norm = quad_norm(lhs, qr, qth);
    out.rhs_norm = quad_norm(rhs, qr, qth);
    out.diff_rel = quad_norm(diff, qr, qth) / out.u_norm;
    return out;
}

std::vector<Complex> apply_theta_op(const Expr& sym, double t, double hbar,
                                    const std::vector<double>& out_pts, double in_lo,
                                    double in_hi, int n_in, double eta_max, int n_eta,
                                    const std::function<Complex(double)>& u) {
    // raise the eta count until ghost images clear the span
    double span = 0.0;
    for (double xo : out_pts) {
        span = std::max(span, std::abs(xo - in_lo));
        span = std::max(span, std::abs(xo - in_hi));
    }
    const double d_max = 2.0 * kPi * hbar / (1.3 * std::max(span, 1e-9));
    n_eta = std::max(n_eta, 1 + int(std::ceil(2.0 * eta_max / d_max)));
    const Quad1D qin(in_lo, in_hi, n_in);
    const Quad1D qeta(-eta_max, eta_max, n_eta);
    auto kernel = quant_kernel(sym, Var::Theta, Var::Eta, t, hbar, out_pts, qin, qeta);
    std::vector<Complex> uin(qin.x.size());
    for (std::size_t j = 0; j < uin.size(); ++j) uin[j] = u(qin.x[j]);
    std::vector<Complex> out(out_pts.size(), Complex(0.0, 0.0));
    for (std::size_t m = 0; m < out.size(); ++m) {
        Complex acc(0.0, 0.0);
        for (std::size_t j = 0; j < uin.size(); ++j) acc += kernel[m][j] * uin[j];
        out[m] = acc;
    }
    return out;
}

}  // namespace endcalc
