#include "endcalc/symbols.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace endcalc {

// ---------------------------------------------------------------------------
// weight functions

namespace {

const FuncDef* jbr_def() {
    return register_function(FuncDef{
        "jbr",  // <x> = sqrt(1 + x^2)
        [](Complex x) { return std::sqrt(Complex(1.0, 0.0) + x * x); },
        [](const Expr& u) { return u * ipow(func(find_function("jbr"), u), -1); },
    });
}

}  // namespace

WeightFunction::WeightFunction() : name_("one"), f_(constant(1.0)) {}

WeightFunction WeightFunction::one() { return WeightFunction(); }

WeightFunction WeightFunction::sqrt1pr2() {
    WeightFunction w;
    w.name_ = "sqrt1pr2";
    w.f_ = func(jbr_def(), var(Var::R));
    w.bounds_ = {{1, 0.5}, {2, 1.0}, {3, 1.5}, {4, 6.5}};
    return w;
}

WeightFunction WeightFunction::exp_windowed(double window_length, double center) {
    WeightFunction w;
    w.name_ = "exp-windowed";
    const double omega = 2.0 * kPi / window_length;
    const double amp = window_length / (2.0 * kPi);
    w.f_ = exp_e(amp * (constant(1.0) + sin_e(omega * (var(Var::R) - center))));
    w.bounds_.clear();
    for (int j = 1; j <= 4; ++j)
        w.bounds_.emplace_back(j, amp * std::pow(omega, j) * 1.0000001);
    return w;
}

WeightFunction WeightFunction::by_name(const std::string& name, double window_length,
                                       double center) {
    if (name == "one") return one();
    if (name == "sqrt1pr2") return sqrt1pr2();
    if (name == "exp-windowed") return exp_windowed(window_length, center);
    throw Error("unknown weight function '" + name + "'");
}

double WeightFunction::operator()(double r) const {
    Point pt;
    pt.r = r;
    return eval(f_, pt).real();
}

WeightFunction::CheckReport WeightFunction::check(double r_lo, double r_hi, int samples) const {
    CheckReport rep;
    rep.min_f = 1e300;
    Expr logf = log_e(f_);
    std::vector<Expr> derivs;
    Expr cur = logf;
    int max_j = 0;
    for (const auto& [j, bound] : bounds_) max_j = std::max(max_j, j);
    for (int j = 1; j <= max_j; ++j) {
        cur = normalize(diff(cur, Var::R));
        derivs.push_back(cur);
    }
    rep.observed.assign(bounds_.size(), 0.0);
    for (int i = 0; i < samples; ++i) {
        Point pt;
        pt.r = r_lo + (r_hi - r_lo) * double(i) / double(samples - 1);
        rep.min_f = std::min(rep.min_f, eval(f_, pt).real());
        for (std::size_t b = 0; b < bounds_.size(); ++b) {
            const double v = std::abs(eval(derivs[bounds_[b].first - 1], pt));
            rep.observed[b] = std::max(rep.observed[b], v);
        }
    }
    rep.ok = rep.min_f >= 1.0 - 1e-12;
    for (std::size_t b = 0; b < bounds_.size(); ++b)
        rep.ok = rep.ok && rep.observed[b] <= bounds_[b].second + 1e-12;
    return rep;
}

// ---------------------------------------------------------------------------
// sample windows

std::vector<double> SampleWindow::r_samples() const {
    std::vector<double> out(n_r);
    for (int i = 0; i < n_r; ++i)
        out[i] = n_r == 1 ? r_lo : r_lo + (r_hi - r_lo) * double(i) / double(n_r - 1);
    return out;
}

std::vector<double> SampleWindow::theta_samples() const {
    std::vector<double> out(n_theta);
    for (int i = 0; i < n_theta; ++i) out[i] = 2.0 * kPi * double(i) / double(n_theta);
    return out;
}

std::vector<double> SampleWindow::p_samples() const {
    std::vector<double> out(n_p);
    for (int i = 0; i < n_p; ++i)
        out[i] = n_p == 1 ? 0.0 : -p_max + 2.0 * p_max * double(i) / double(n_p - 1);
    return out;
}

// ---------------------------------------------------------------------------
// seminorms

namespace {

double bracket(double rho, double feta) { return std::sqrt(1.0 + rho * rho + feta * feta); }

struct DerivIndex {
    int a0, a1, b0, b1;
    int total() const { return a0 + a1 + b0 + b1; }
};

std::vector<DerivIndex> deriv_indices(int n) {
    std::vector<DerivIndex> out;
    for (int a0 = 0; a0 <= n; ++a0)
        for (int a1 = 0; a0 + a1 <= n; ++a1)
            for (int b0 = 0; a0 + a1 + b0 <= n; ++b0)
                for (int b1 = 0; a0 + a1 + b0 + b1 <= n; ++b1)
                    out.push_back({a0, a1, b0, b1});
    return out;
}

// derivative cache keyed by (a0, a1, b0, b1), derived incrementally
class DerivTable {
  public:
    explicit DerivTable(rnf::Rational base) { cache_[{0, 0, 0, 0}] = std::move(base); }

    const rnf::Rational& get(int a0, int a1, int b0, int b1) {
        const std::array<int, 4> key{a0, a1, b0, b1};
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        rnf::Rational d;
        if (b1 > 0)
            d = rnf::rat_diff(get(a0, a1, b0, b1 - 1), Var::Eta);
        else if (b0 > 0)
            d = rnf::rat_diff(get(a0, a1, b0 - 1, b1), Var::Rho);
        else if (a1 > 0)
            d = rnf::rat_diff(get(a0, a1 - 1, b0, b1), Var::Theta);
        else
            d = rnf::rat_diff(get(a0 - 1, a1, b0, b1), Var::R);
        return cache_.emplace(key, std::move(d)).first->second;
    }

  private:
    std::map<std::array<int, 4>, rnf::Rational> cache_;
};

}  // namespace

double seminorm_estimate(const Symbol& a, int n_derivs, const SampleWindow& win, double hbar,
                         Complex z) {
    if (n_derivs > 4) throw Error("seminorm_estimate: derivative budget is N <= 4");
    DerivTable table(rnf::to_rational(a.expr));
    ProductGrid grid{win.r_samples(), win.theta_samples(), win.p_samples(), win.p_samples()};
    std::vector<double> fvals(grid.r.size());
    for (std::size_t i = 0; i < grid.r.size(); ++i) fvals[i] = a.weight(grid.r[i]);

    double best = 0.0;
    std::vector<Complex> row(grid.rho.size() * grid.eta.size());
    for (const DerivIndex& d : deriv_indices(n_derivs)) {
        GridEvaluator ev(table.get(d.a0, d.a1, d.b0, d.b1), grid, hbar, z);
        for (std::size_t ir = 0; ir < grid.r.size(); ++ir) {
            const double f = fvals[ir];
            const double fw = std::pow(f, double(-d.a1 + d.b1));
            for (std::size_t it = 0; it < grid.theta.size(); ++it) {
                ev.eval_q_row(ir, it, row.data());
                for (std::size_t ik = 0; ik < grid.rho.size(); ++ik)
                    for (std::size_t il = 0; il < grid.eta.size(); ++il) {
                        const double br = bracket(grid.rho[ik], grid.eta[il] / f);
                        const double w =
                            fw * std::pow(br, -(a.order - double(d.b0 + d.b1)));
                        const double v = std::abs(row[ik * grid.eta.size() + il]) * w;
                        best = std::max(best, v);
                    }
            }
        }
    }
    return best;
}

double bisymbol_seminorm_estimate(const Bisymbol& a, int n_derivs, const SampleWindow& win,
                                  double hbar, Complex z) {
    if (n_derivs > 2) throw Error("bisymbol_seminorm_estimate: derivative budget is N <= 2");
    // enumerate (alpha, beta, gamma) with |.| <= n over 6 slots; reuse the
    // 4-slot table twice by chaining primed derivatives outside the table.
    rnf::Rational base = rnf::to_rational(a.expr);
    double best = 0.0;
    const auto rs = win.r_samples();
    const auto ths = win.theta_samples();
    const auto ps = win.p_samples();
    const int step = std::max(1, win.n_p / 9);  // coarser p sampling for the 6d sweep

    for (int g0 = 0; g0 <= n_derivs; ++g0)
        for (int g1 = 0; g0 + g1 <= n_derivs; ++g1) {
            rnf::Rational cur = base;
            for (int i = 0; i < g0; ++i) cur = rnf::rat_diff(cur, Var::RPrime);
            for (int i = 0; i < g1; ++i) cur = rnf::rat_diff(cur, Var::ThetaPrime);
            DerivTable table(cur);
            for (const DerivIndex& d : deriv_indices(n_derivs - g0 - g1)) {
                const rnf::Rational& expr = table.get(d.a0, d.a1, d.b0, d.b1);
                for (double r : rs)
                    for (double rp : rs)
                        for (double th : ths)
                            for (std::size_t ik = 0; ik < ps.size(); ik += step)
                                for (std::size_t il = 0; il < ps.size(); il += step) {
                                    Point pt;
                                    pt.r = r;
                                    pt.theta = th;
                                    pt.r_prime = rp;
                                    pt.theta_prime = th;  // sampled along q'
                                    pt.rho = ps[ik];
                                    pt.eta = ps[il];
                                    pt.hbar = hbar;
                                    pt.z = z;
                                    const double fm = a.weight(a.t * r + (1.0 - a.t) * rp);
                                    const double br = bracket(pt.rho, pt.eta / fm);
                                    const double w =
                                        std::pow(fm, double(-d.a1 + d.b1 - g1)) *
                                        std::pow(br, -(a.order - double(d.b0 + d.b1)));
                                    best = std::max(best,
                                                    std::abs(rnf::rat_eval(expr, pt)) * w);
                                }
            }
        }
    return best;
}

// ---------------------------------------------------------------------------
// bisymbol expansion and sharp products

SymbolSeries bisymbol_expansion(const Bisymbol& a, int j_max) {
    if (j_max > 4) throw Error("bisymbol_expansion: truncation is J <= 4");
    const Expr r = var(Var::R), th = var(Var::Theta);
    const Expr rp = var(Var::RPrime), tp = var(Var::ThetaPrime);
    std::map<Var, Expr> shift;
    shift[Var::R] = r + (1.0 - a.t) * rp;
    shift[Var::Theta] = th + (1.0 - a.t) * tp;
    shift[Var::RPrime] = r - a.t * rp;
    shift[Var::ThetaPrime] = th - a.t * tp;
    rnf::Rational cur = rnf::to_rational(subst(a.expr, shift));

    const std::map<Var, Complex> at_zero{{Var::RPrime, 0.0}, {Var::ThetaPrime, 0.0}};
    SymbolSeries out;
    out.weight = a.weight;
    out.t = a.t;
    double fact = 1.0;
    Complex ipow_j(1.0, 0.0);
    for (int j = 0; j <= j_max; ++j) {
        if (j > 0) {
            cur = rnf::rat_add(rnf::rat_diff(rnf::rat_diff(cur, Var::Rho), Var::RPrime),
                               rnf::rat_diff(rnf::rat_diff(cur, Var::Eta), Var::ThetaPrime));
            fact *= double(j);
            ipow_j *= Complex(0.0, 1.0);
        }
        rnf::Rational term = rnf::rat_subst_const(cur, at_zero);
        term = rnf::rat_mul(term, rnf::rat_const(ipow_j / fact));
        out.terms.push_back(rnf::to_expr(term));
        out.orders.push_back(a.order - double(j));
    }
    return out;
}

namespace {
void require_spatial(const Symbol& chi) {
    auto vars = free_vars(chi.expr);
    if (vars.count(Var::Rho) || vars.count(Var::Eta))
        throw Error("sharp product: cutoff must not depend on (rho, eta)");
}
}  // namespace

SymbolSeries sharp_left(const Symbol& chi, const Symbol& a, double t, int j_max) {
    require_spatial(chi);
    std::map<Var, Expr> mid;
    mid[Var::R] = t * var(Var::R) + (1.0 - t) * var(Var::RPrime);
    mid[Var::Theta] = t * var(Var::Theta) + (1.0 - t) * var(Var::ThetaPrime);
    Bisymbol c{chi.expr * subst(a.expr, mid), a.order, t, a.weight};
    SymbolSeries s = bisymbol_expansion(c, j_max);
    s.weight = a.weight;
    return s;
}

SymbolSeries sharp_right(const Symbol& a, const Symbol& chi, double t, int j_max) {
    require_spatial(chi);
    std::map<Var, Expr> mid;
    mid[Var::R] = t * var(Var::R) + (1.0 - t) * var(Var::RPrime);
    mid[Var::Theta] = t * var(Var::Theta) + (1.0 - t) * var(Var::ThetaPrime);
    std::map<Var, Expr> prime;
    prime[Var::R] = var(Var::RPrime);
    prime[Var::Theta] = var(Var::ThetaPrime);
    Bisymbol c{subst(a.expr, mid) * subst(chi.expr, prime), a.order, t, a.weight};
    SymbolSeries s = bisymbol_expansion(c, j_max);
    s.weight = a.weight;
    return s;
}

// ---------------------------------------------------------------------------
// angular maps

AngularMap AngularMap::inverse() const {
    AngularMap out;
    out.name = name + "-inv";
    out.fwd = inv;
    out.inv = fwd;
    // d(phi^-1)/dtheta (u) = 1 / phi'(phi^-1(u))
    const auto self_inv = inv;
    const auto self_dfwd = dfwd;
    out.dfwd = [self_inv, self_dfwd](const Expr& u) { return ipow(self_dfwd(self_inv(u)), -1); };
    out.arc_lo = arc_lo;
    out.arc_hi = arc_hi;
    return out;
}

namespace {
double eval_theta_fn(const std::function<Expr(const Expr&)>& fn, double theta) {
    Point pt;
    pt.theta = theta;
    return eval(fn(var(Var::Theta)), pt).real();
}
}  // namespace

double AngularMap::apply(double theta) const { return eval_theta_fn(fwd, theta); }
double AngularMap::apply_inverse(double theta) const { return eval_theta_fn(inv, theta); }
double AngularMap::deriv(double theta) const { return eval_theta_fn(dfwd, theta); }

AngularMap identity_arc_map() {
    AngularMap m;
    m.name = "identity";
    m.fwd = [](const Expr& u) { return u; };
    m.inv = [](const Expr& u) { return u; };
    m.dfwd = [](const Expr&) { return constant(1.0); };
    return m;
}

AngularMap moebius_arc_map(double a) {
    if (!(a > -1.0 && a < 1.0)) throw Error("moebius_arc_map: parameter must be in (-1, 1)");
    const double k = (1.0 - a) / (1.0 + a);
    const double ki = (1.0 + a) / (1.0 - a);
    auto make_def = [](double kk, const std::string& fname) {
        return register_function(FuncDef{
            fname,
            [kk](Complex x) {
                const double th = x.real();
                return Complex(2.0 * std::atan2(kk * std::sin(th / 2.0), std::cos(th / 2.0)),
                               0.0);
            },
            // dphi/dtheta = 2k / ((1+k^2) + (1-k^2) cos theta)
            [kk](const Expr& u) {
                return 2.0 * kk * ipow(constant(1.0 + kk * kk) + (1.0 - kk * kk) * cos_e(u), -1);
            },
        });
    };
    char buf[64];
    std::snprintf(buf, sizeof buf, "moebius(%.12g)", a);
    const std::string fname = buf;
    std::snprintf(buf, sizeof buf, "moebius(%.12g)", -a);
    const FuncDef* fdef = make_def(k, fname);
    const FuncDef* idef = make_def(ki, buf);
    AngularMap m;
    m.name = fname;
    m.fwd = [fdef](const Expr& u) { return func(fdef, u); };
    m.inv = [idef](const Expr& u) { return func(idef, u); };
    m.dfwd = [k](const Expr& u) {
        return 2.0 * k * ipow(constant(1.0 + k * k) + (1.0 - k * k) * cos_e(u), -1);
    };
    return m;
}

Symbol chart_transfer_leading(const Symbol& a, const AngularMap& map) {
    // diffeomorphism check over the arc
    const int samples = 65;
    for (int i = 0; i < samples; ++i) {
        const double th = map.arc_lo + (map.arc_hi - map.arc_lo) * double(i) / double(samples - 1);
        const double d = map.deriv(th);
        if (!(d > 0.0))
            throw Error("not a diffeomorphism: nonpositive derivative at theta=" +
                        format_double(th));
    }
    Expr thin = map.inv(var(Var::Theta));
    std::map<Var, Expr> repl;
    repl[Var::Theta] = thin;
    repl[Var::Eta] = var(Var::Eta) * map.dfwd(thin);
    Symbol out;
    out.expr = normalize(subst(a.expr, repl));
    out.order = a.order;
    out.weight = a.weight;
    return out;
}

// ---------------------------------------------------------------------------
// resolvent symbol and Delta_N

namespace {
double ellipticity_margin(const Symbol& sigma, Complex z, const SampleWindow& win,
                          Point* worst_out) {
    GridEvaluator ev(sigma.expr,
                     ProductGrid{win.r_samples(), win.theta_samples(), win.p_samples(),
                                 win.p_samples()},
                     1.0, z);
    const auto rs = win.r_samples();
    const auto ths = win.theta_samples();
    const auto ps = win.p_samples();
    double margin = 1e300;
    Point worst;
    std::vector<Complex> row(ps.size() * ps.size());
    for (std::size_t ir = 0; ir < rs.size(); ++ir) {
        const double f = sigma.weight(rs[ir]);
        for (std::size_t it = 0; it < ths.size(); ++it) {
            ev.eval_q_row(ir, it, row.data());
            for (std::size_t ik = 0; ik < ps.size(); ++ik)
                for (std::size_t il = 0; il < ps.size(); ++il) {
                    const double br = bracket(ps[ik], ps[il] / f);
                    const double m =
                        std::abs(z - row[ik * ps.size() + il]) * std::pow(br, -sigma.order);
                    if (m < margin) {
                        margin = m;
                        worst = Point{rs[ir], ths[it], ps[ik], ps[il], 0, 0, 1.0, z};
                    }
                }
        }
    }
    if (worst_out) *worst_out = worst;
    return margin;
}
}  // namespace

Symbol resolvent_symbol(const Symbol& sigma, Complex z, const SampleWindow& win) {
    Point worst;
    const double margin = ellipticity_margin(sigma, z, win, &worst);
    if (!(margin > 1e-14))
        throw EllipticityError("z too close to symbol range: margin " + format_double(margin) +
                               " at (r=" + format_double(worst.r) +
                               ", theta=" + format_double(worst.theta) +
                               ", rho=" + format_double(worst.rho) +
                               ", eta=" + format_double(worst.eta) + ")");
    Symbol out;
    out.expr = ipow(var(Var::Z) - sigma.expr, -1);
    out.order = -sigma.order;
    out.weight = sigma.weight;
    return out;
}

ResolventBound delta_n_bound(const Symbol& sigma, Complex z, int n, const SampleWindow& win) {
    Point worst;
    const double margin = ellipticity_margin(sigma, z, win, &worst);
    if (!(margin > 1e-14))
        throw EllipticityError("z too close to symbol range: margin " + format_double(margin));
    GridEvaluator ev(sigma.expr,
                     ProductGrid{win.r_samples(), win.theta_samples(), win.p_samples(),
                                 win.p_samples()},
                     1.0, z);
    const auto rs = win.r_samples();
    const auto ths = win.theta_samples();
    const auto ps = win.p_samples();
    std::vector<double> sup(n + 1, 0.0);
    std::vector<Complex> row(ps.size() * ps.size());
    for (std::size_t ir = 0; ir < rs.size(); ++ir) {
        const double f = sigma.weight(rs[ir]);
        for (std::size_t it = 0; it < ths.size(); ++it) {
            ev.eval_q_row(ir, it, row.data());
            for (std::size_t ik = 0; ik < ps.size(); ++ik)
                for (std::size_t il = 0; il < ps.size(); ++il) {
                    const double br = bracket(ps[ik], ps[il] / f);
                    const double dist = std::abs(z - row[ik * ps.size() + il]);
                    for (int l = 0; l <= n; ++l) {
                        const double v =
                            std::pow(br, sigma.order * double(l + 1)) / std::pow(dist, l + 1);
                        sup[l] = std::max(sup[l], v);
                    }
                }
        }
    }
    ResolventBound out;
    out.z = z;
    out.n = n;
    for (int l = 0; l <= n; ++l) out.delta_n += sup[l];
    return out;
}

// ---------------------------------------------------------------------------
// text form

std::string symbol_to_text(const Symbol& s) {
    std::ostringstream os;
    os << "symbol v1\norder " << format_double(s.order) << "\nweight " << s.weight.name()
       << "\nexpr " << to_text(s.expr) << "\n";
    return os.str();
}

namespace {
std::string read_field(std::istringstream& is, const std::string& key) {
    std::string k;
    is >> k;
    if (k != key) throw Error("symbol text: expected '" + key + "', got '" + k + "'");
    std::string rest;
    std::getline(is, rest);
    const std::size_t start = rest.find_first_not_of(' ');
    return start == std::string::npos ? "" : rest.substr(start);
}
}  // namespace

Symbol symbol_from_text(const std::string& text, const WeightFunction& weight) {
    std::istringstream is(text);
    std::string head;
    std::getline(is, head);
    if (head != "symbol v1") throw Error("symbol text: bad header");
    Symbol out;
    out.order = std::stod(read_field(is, "order"));
    const std::string wname = read_field(is, "weight");
    if (wname != weight.name())
        throw Error("symbol text: weight mismatch: file has '" + wname + "'");
    out.weight = weight;
    out.expr = parse_expr(read_field(is, "expr"));
    return out;
}

std::string bisymbol_to_text(const Bisymbol& s) {
    std::ostringstream os;
    os << "bisymbol v1\norder " << format_double(s.order) << "\nt " << format_double(s.t)
       << "\nweight " << s.weight.name() << "\nexpr " << to_text(s.expr) << "\n";
    return os.str();
}

Bisymbol bisymbol_from_text(const std::string& text, const WeightFunction& weight) {
    std::istringstream is(text);
    std::string head;
    std::getline(is, head);
    if (head != "bisymbol v1") throw Error("bisymbol text: bad header");
    Bisymbol out;
    out.order = std::stod(read_field(is, "order"));
    out.t = std::stod(read_field(is, "t"));
    const std::string wname = read_field(is, "weight");
    if (wname != weight.name())
        throw Error("bisymbol text: weight mismatch: file has '" + wname + "'");
    out.weight = weight;
    out.expr = parse_expr(read_field(is, "expr"));
    return out;
}

std::string series_to_text(const SymbolSeries& s) {
    std::ostringstream os;
    os << "series v1\nweight " << s.weight.name() << "\nz " << format_double(s.z.real()) << " "
       << format_double(s.z.imag()) << "\nt " << format_double(s.t) << "\nnterms "
       << s.terms.size() << "\n";
    for (std::size_t i = 0; i < s.terms.size(); ++i)
        os << "order " << format_double(s.orders[i]) << "\nterm " << to_text(s.terms[i]) << "\n";
    return os.str();
}

SymbolSeries series_from_text(const std::string& text, const WeightFunction& weight) {
    std::istringstream is(text);
    std::string head;
    std::getline(is, head);
    if (head != "series v1") throw Error("series text: bad header");
    SymbolSeries out;
    const std::string wname = read_field(is, "weight");
    if (wname != weight.name())
        throw Error("series text: weight mismatch: file has '" + wname + "'");
    out.weight = weight;
    {
        std::istringstream zs(read_field(is, "z"));
        double re, im;
        zs >> re >> im;
        out.z = Complex(re, im);
    }
    out.t = std::stod(read_field(is, "t"));
    const int n = std::stoi(read_field(is, "nterms"));
    for (int i = 0; i < n; ++i) {
        out.orders.push_back(std::stod(read_field(is, "order")));
        out.terms.push_back(parse_expr(read_field(is, "term")));
    }
    return out;
}

}  // namespace endcalc
