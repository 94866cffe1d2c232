#include "endcalc/rnf.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <unordered_map>

namespace endcalc::rnf {

namespace {

Complex scrub(Complex c) {
    double re = c.real(), im = c.imag();
    if (re == 0.0) re = 0.0;  // normalizes -0.0
    if (im == 0.0) im = 0.0;
    return Complex(re, im);
}

std::uint64_t abs_bits(double x) {
    std::uint64_t u;
    std::memcpy(&u, &x, 8);
    return u & 0x7fffffffffffffffull;
}

// Magnitude-major order: stable under global negation of the whole
// contribution list, so folds of exactly negated lists negate exactly.
struct ContribLess {
    bool operator()(const Complex& a, const Complex& b) const {
        const std::uint64_t ar = abs_bits(a.real()), br = abs_bits(b.real());
        if (ar != br) return ar < br;
        const std::uint64_t ai = abs_bits(a.imag()), bi = abs_bits(b.imag());
        if (ai != bi) return ai < bi;
        const bool sar = std::signbit(a.real()), sbr = std::signbit(b.real());
        if (sar != sbr) return sbr;  // positive first
        return std::signbit(b.imag()) && !std::signbit(a.imag());
    }
};

Complex fold_contribs(std::vector<Complex>& v) {
    std::sort(v.begin(), v.end(), ContribLess{});
    Complex acc(0.0, 0.0);
    for (const Complex& c : v) acc += c;
    return scrub(acc);
}

int cmp_complex(const Complex& a, const Complex& b) {
    if (a.real() != b.real()) return a.real() < b.real() ? -1 : 1;
    if (a.imag() != b.imag()) return a.imag() < b.imag() ? -1 : 1;
    return 0;
}

Complex complex_int_pow(Complex base, int e, const char* what) {
    if (e == 0) return Complex(1.0, 0.0);
    const bool neg = e < 0;
    unsigned k = neg ? unsigned(-(long long)e) : unsigned(e);
    if (neg && base == Complex(0.0, 0.0))
        throw EvalError("singular evaluation: zero to negative power", what);
    Complex acc(1.0, 0.0), b = base;
    while (k) {
        if (k & 1u) acc *= b;
        b *= b;
        k >>= 1u;
    }
    return neg ? Complex(1.0, 0.0) / acc : acc;
}

}  // namespace

// ---------------------------------------------------------------------------
// ordering

int cmp(const Atom& a, const Atom& b) {
    if (a.kind != b.kind) return int(a.kind) < int(b.kind) ? -1 : 1;
    switch (a.kind) {
        case Atom::Kind::Variable:
            if (a.v != b.v) return int(a.v) < int(b.v) ? -1 : 1;
            return 0;
        case Atom::Kind::Func: {
            const int c = a.fn->name.compare(b.fn->name);
            if (c != 0) return c < 0 ? -1 : 1;
            return cmp(*a.arg, *b.arg);
        }
        default: return cmp(*a.arg, *b.arg);
    }
}

int cmp(const Monomial& a, const Monomial& b) {
    const std::size_t n = std::min(a.factors.size(), b.factors.size());
    for (std::size_t i = 0; i < n; ++i) {
        const int c = cmp(*a.factors[i].first, *b.factors[i].first);
        if (c != 0) return c;
        if (a.factors[i].second != b.factors[i].second)
            return a.factors[i].second < b.factors[i].second ? -1 : 1;
    }
    if (a.factors.size() != b.factors.size()) return a.factors.size() < b.factors.size() ? -1 : 1;
    return 0;
}

int cmp(const Poly& a, const Poly& b) {
    if (a.terms.size() != b.terms.size()) return a.terms.size() < b.terms.size() ? -1 : 1;
    for (std::size_t i = 0; i < a.terms.size(); ++i) {
        const int c = cmp(a.terms[i].first, b.terms[i].first);
        if (c != 0) return c;
    }
    for (std::size_t i = 0; i < a.terms.size(); ++i) {
        const int c = cmp_complex(a.terms[i].second, b.terms[i].second);
        if (c != 0) return c;
    }
    return 0;
}

int cmp(const Rational& a, const Rational& b) {
    const int c = cmp(a.num, b.num);
    if (c != 0) return c;
    if (a.den.size() != b.den.size()) return a.den.size() < b.den.size() ? -1 : 1;
    for (std::size_t i = 0; i < a.den.size(); ++i) {
        const int cb = cmp(a.den[i].first, b.den[i].first);
        if (cb != 0) return cb;
        if (a.den[i].second != b.den[i].second) return a.den[i].second < b.den[i].second ? -1 : 1;
    }
    return 0;
}

namespace {
struct MonoLess {
    bool operator()(const Monomial& a, const Monomial& b) const { return cmp(a, b) < 0; }
};

using Contribs = std::map<Monomial, std::vector<Complex>, MonoLess>;

Poly finalize(Contribs&& cs) {
    Poly out;
    out.terms.reserve(cs.size());
    for (auto& [m, list] : cs) {
        Complex c = fold_contribs(list);
        if (c != Complex(0.0, 0.0)) out.terms.emplace_back(m, c);
    }
    return out;
}
}  // namespace

// ---------------------------------------------------------------------------
// polynomial arithmetic

Complex Poly::const_value() const {
    return terms.empty() ? Complex(0.0, 0.0) : terms[0].second;
}

Poly poly_const(Complex c) {
    Poly p;
    c = scrub(c);
    if (c != Complex(0.0, 0.0)) p.terms.emplace_back(Monomial{}, c);
    return p;
}

Monomial mono_mul(const Monomial& a, const Monomial& b) {
    Monomial out;
    out.factors.reserve(a.factors.size() + b.factors.size());
    std::size_t i = 0, j = 0;
    while (i < a.factors.size() && j < b.factors.size()) {
        const int c = cmp(*a.factors[i].first, *b.factors[j].first);
        if (c < 0) {
            out.factors.push_back(a.factors[i++]);
        } else if (c > 0) {
            out.factors.push_back(b.factors[j++]);
        } else {
            const int e = a.factors[i].second + b.factors[j].second;
            if (e != 0) out.factors.emplace_back(a.factors[i].first, e);
            ++i;
            ++j;
        }
    }
    for (; i < a.factors.size(); ++i) out.factors.push_back(a.factors[i]);
    for (; j < b.factors.size(); ++j) out.factors.push_back(b.factors[j]);
    return out;
}

Poly poly_add(const Poly& a, const Poly& b) {
    Contribs cs;
    for (const auto& [m, c] : a.terms) cs[m].push_back(c);
    for (const auto& [m, c] : b.terms) cs[m].push_back(c);
    return finalize(std::move(cs));
}

Poly poly_neg(const Poly& a) {
    Poly out = a;
    for (auto& [m, c] : out.terms) c = scrub(-c);
    return out;
}

Poly poly_mul(const Poly& a, const Poly& b) {
    Contribs cs;
    for (const auto& [ma, ca] : a.terms)
        for (const auto& [mb, cb] : b.terms) cs[mono_mul(ma, mb)].push_back(ca * cb);
    return finalize(std::move(cs));
}

Poly poly_pow(const Poly& a, int k) {
    Poly acc = poly_const(Complex(1.0, 0.0));
    for (int i = 0; i < k; ++i) acc = poly_mul(acc, a);
    return acc;
}

// ---------------------------------------------------------------------------
// rational arithmetic

namespace {

Rational make_rational(Poly num, std::vector<std::pair<Poly, int>> den) {
    Rational out;
    if (num.is_zero()) {
        out.num = std::move(num);
        return out;
    }
    std::sort(den.begin(), den.end(),
              [](const auto& x, const auto& y) { return cmp(x.first, y.first) < 0; });
    // merge equal bases
    std::vector<std::pair<Poly, int>> merged;
    for (auto& [base, e] : den) {
        if (e == 0) continue;
        if (!merged.empty() && cmp(merged.back().first, base) == 0)
            merged.back().second += e;
        else
            merged.emplace_back(std::move(base), e);
    }
    std::erase_if(merged, [](const auto& f) { return f.second == 0; });
    out.num = std::move(num);
    out.den = std::move(merged);
    return out;
}

Rational rat_from_poly(Poly p) { return make_rational(std::move(p), {}); }

Rational rat_mono(AtomPtr atom, int e = 1) {
    Monomial m;
    m.factors.emplace_back(std::move(atom), e);
    Poly p;
    p.terms.emplace_back(std::move(m), Complex(1.0, 0.0));
    return rat_from_poly(std::move(p));
}

}  // namespace

Rational rat_const(Complex c) { return rat_from_poly(poly_const(c)); }

Rational rat_mul(const Rational& a, const Rational& b) {
    if (a.is_zero() || b.is_zero()) return Rational{};
    std::vector<std::pair<Poly, int>> den = a.den;
    den.insert(den.end(), b.den.begin(), b.den.end());
    return make_rational(poly_mul(a.num, b.num), std::move(den));
}

Rational rat_neg(const Rational& a) {
    Rational out = a;
    out.num = poly_neg(out.num);
    return out;
}

Rational rat_add(const Rational& a, const Rational& b) {
    if (a.is_zero()) return b;
    if (b.is_zero()) return a;
    // union denominator with max exponents
    std::vector<std::pair<const Poly*, int>> uni;
    {
        std::size_t i = 0, j = 0;
        while (i < a.den.size() && j < b.den.size()) {
            const int c = cmp(a.den[i].first, b.den[j].first);
            if (c < 0)
                uni.emplace_back(&a.den[i].first, a.den[i].second), ++i;
            else if (c > 0)
                uni.emplace_back(&b.den[j].first, b.den[j].second), ++j;
            else {
                uni.emplace_back(&a.den[i].first, std::max(a.den[i].second, b.den[j].second));
                ++i;
                ++j;
            }
        }
        for (; i < a.den.size(); ++i) uni.emplace_back(&a.den[i].first, a.den[i].second);
        for (; j < b.den.size(); ++j) uni.emplace_back(&b.den[j].first, b.den[j].second);
    }
    auto scale_up = [&](const Rational& r) {
        Poly acc = r.num;
        for (const auto& [base, e] : uni) {
            int have = 0;
            for (const auto& [rb, re] : r.den)
                if (cmp(rb, *base) == 0) {
                    have = re;
                    break;
                }
            for (int k = have; k < e; ++k) acc = poly_mul(acc, *base);
        }
        return acc;
    };
    Poly num = poly_add(scale_up(a), scale_up(b));
    std::vector<std::pair<Poly, int>> den;
    den.reserve(uni.size());
    for (const auto& [base, e] : uni) den.emplace_back(*base, e);
    return make_rational(std::move(num), std::move(den));
}

Rational rat_sub(const Rational& a, const Rational& b) { return rat_add(a, rat_neg(b)); }

Rational rat_sum(const std::vector<Rational>& ops) {
    std::vector<const Rational*> live;
    for (const Rational& r : ops)
        if (!r.is_zero()) live.push_back(&r);
    if (live.empty()) return Rational{};
    if (live.size() == 1) return *live[0];
    // union denominator with max exponents
    std::vector<std::pair<Poly, int>> uni;
    for (const Rational* r : live)
        for (const auto& [base, e] : r->den) {
            bool found = false;
            for (auto& [ub, ue] : uni)
                if (cmp(ub, base) == 0) {
                    ue = std::max(ue, e);
                    found = true;
                    break;
                }
            if (!found) uni.emplace_back(base, e);
        }
    std::sort(uni.begin(), uni.end(),
              [](const auto& x, const auto& y) { return cmp(x.first, y.first) < 0; });
    Contribs cs;
    for (const Rational* r : live) {
        // expanded product of the missing denominator factors
        Poly scale = poly_const(Complex(1.0, 0.0));
        for (const auto& [base, e] : uni) {
            int have = 0;
            for (const auto& [rb, re] : r->den)
                if (cmp(rb, base) == 0) {
                    have = re;
                    break;
                }
            for (int k = have; k < e; ++k) scale = poly_mul(scale, base);
        }
        // raw contributions num x scale, uncollapsed
        for (const auto& [mn, cn] : r->num.terms)
            for (const auto& [ms, csc] : scale.terms)
                cs[mono_mul(mn, ms)].push_back(cn * csc);
    }
    Poly num = finalize(std::move(cs));
    return make_rational(std::move(num), std::move(uni));
}

namespace {
Rational rat_inverse(const Rational& a) {
    if (a.is_zero()) throw EvalError("singular evaluation: inverse of zero expression", "1/0");
    // (num / prod base^e)^{-1} = prod base^e / num
    Poly top = poly_const(Complex(1.0, 0.0));
    for (const auto& [base, e] : a.den) top = poly_mul(top, poly_pow(base, e));
    Rational out = rat_from_poly(std::move(top));
    if (a.num.is_const()) {
        out.num = poly_mul(out.num, poly_const(Complex(1.0, 0.0) / a.num.const_value()));
    } else if (a.num.is_monomial()) {
        const auto& [m, c] = a.num.terms[0];
        Monomial inv;
        inv.factors.reserve(m.factors.size());
        for (const auto& [atom, e] : m.factors) inv.factors.emplace_back(atom, -e);
        Poly p;
        p.terms.emplace_back(std::move(inv), Complex(1.0, 0.0) / c);
        out.num = poly_mul(out.num, p);
    } else {
        std::vector<std::pair<Poly, int>> den = {{a.num, 1}};
        out = make_rational(std::move(out.num), std::move(den));
    }
    return out;
}
}  // namespace

Rational rat_ipow(const Rational& a, int k) {
    if (k == 0) return rat_const(Complex(1.0, 0.0));
    if (k < 0) return rat_ipow(rat_inverse(a), -k);
    if (a.is_zero()) return Rational{};
    std::vector<std::pair<Poly, int>> den = a.den;
    for (auto& [base, e] : den) e *= k;
    return make_rational(poly_pow(a.num, k), std::move(den));
}

// ---------------------------------------------------------------------------
// differentiation

namespace {

Rational atom_rat(const AtomPtr& a) { return rat_mono(a); }

Rational atom_diff(const AtomPtr& a, Var v);

Rational poly_diff(const Poly& p, Var v) {
    Rational acc;
    for (const auto& [m, c] : p.terms) {
        for (std::size_t fi = 0; fi < m.factors.size(); ++fi) {
            const auto& [atom, e] = m.factors[fi];
            Rational da = atom_diff(atom, v);
            if (da.is_zero()) continue;
            Monomial rest;
            rest.factors.reserve(m.factors.size());
            for (std::size_t fj = 0; fj < m.factors.size(); ++fj) {
                if (fj == fi) {
                    if (e != 1) rest.factors.emplace_back(atom, e - 1);
                } else {
                    rest.factors.push_back(m.factors[fj]);
                }
            }
            Poly restp;
            restp.terms.emplace_back(std::move(rest), scrub(c * double(e)));
            acc = rat_add(acc, rat_mul(rat_from_poly(std::move(restp)), da));
        }
    }
    return acc;
}

Rational atom_diff(const AtomPtr& a, Var v) {
    switch (a->kind) {
        case Atom::Kind::Variable:
            return a->v == v ? rat_const(Complex(1.0, 0.0)) : Rational{};
        case Atom::Kind::Exp: {
            Rational darg = rat_diff(*a->arg, v);
            if (darg.is_zero()) return Rational{};
            return rat_mul(atom_rat(a), darg);
        }
        case Atom::Kind::Log: {
            Rational darg = rat_diff(*a->arg, v);
            if (darg.is_zero()) return Rational{};
            return rat_mul(darg, rat_ipow(*a->arg, -1));
        }
        case Atom::Kind::Sin: {
            Rational darg = rat_diff(*a->arg, v);
            if (darg.is_zero()) return Rational{};
            auto cosat = std::make_shared<const Atom>(Atom{Atom::Kind::Cos, Var::R, nullptr, a->arg});
            return rat_mul(rat_mono(std::move(cosat)), darg);
        }
        case Atom::Kind::Cos: {
            Rational darg = rat_diff(*a->arg, v);
            if (darg.is_zero()) return Rational{};
            auto sinat = std::make_shared<const Atom>(Atom{Atom::Kind::Sin, Var::R, nullptr, a->arg});
            return rat_mul(rat_neg(rat_mono(std::move(sinat))), darg);
        }
        case Atom::Kind::Func: {
            Rational darg = rat_diff(*a->arg, v);
            if (darg.is_zero()) return Rational{};
            if (!a->fn->deriv)
                throw DiffError("missing derivative rule for function '" + a->fn->name + "'");
            Expr fprime = a->fn->deriv(to_expr(*a->arg));
            return rat_mul(to_rational(fprime), darg);
        }
    }
    throw Error("atom_diff: bad atom");
}

}  // namespace

Rational rat_diff(const Rational& a, Var v) {
    // d(num)/den
    Rational dnum = poly_diff(a.num, v);
    Rational acc;
    if (a.den.empty()) {
        acc = std::move(dnum);
    } else if (!dnum.is_zero()) {
        std::vector<std::pair<Poly, int>> den = dnum.den;
        den.insert(den.end(), a.den.begin(), a.den.end());
        acc = make_rational(std::move(dnum.num), std::move(den));
    }
    // quotient-rule terms: -k * num * dS / (den with S's exponent bumped)
    for (std::size_t i = 0; i < a.den.size(); ++i) {
        const auto& [S, k] = a.den[i];
        Rational dS = poly_diff(S, v);
        if (dS.is_zero()) continue;
        std::vector<std::pair<Poly, int>> den = a.den;
        den[i].second += 1;
        den.insert(den.end(), dS.den.begin(), dS.den.end());
        Poly num = poly_mul(a.num, poly_mul(poly_const(Complex(-double(k), 0.0)), dS.num));
        acc = rat_add(acc, make_rational(std::move(num), std::move(den)));
    }
    return acc;
}

// ---------------------------------------------------------------------------
// evaluation

namespace {
Complex atom_eval(const Atom& a, const Point& pt) {
    switch (a.kind) {
        case Atom::Kind::Variable: return pt.get(a.v);
        case Atom::Kind::Exp: return std::exp(rat_eval(*a.arg, pt));
        case Atom::Kind::Log: {
            Complex v = rat_eval(*a.arg, pt);
            if (v.imag() == 0.0 && v.real() <= 0.0)
                throw EvalError("singular evaluation: log of nonpositive real", "(log ...)");
            return std::log(v);
        }
        case Atom::Kind::Sin: return std::sin(rat_eval(*a.arg, pt));
        case Atom::Kind::Cos: return std::cos(rat_eval(*a.arg, pt));
        case Atom::Kind::Func: return a.fn->eval(rat_eval(*a.arg, pt));
    }
    throw Error("atom_eval: bad atom");
}

Complex poly_eval(const Poly& p, const Point& pt) {
    Complex acc(0.0, 0.0);
    for (const auto& [m, c] : p.terms) {
        Complex t = c;
        for (const auto& [atom, e] : m.factors) t *= complex_int_pow(atom_eval(*atom, pt), e, "atom power");
        acc += t;
    }
    return acc;
}
}  // namespace

Complex rat_eval(const Rational& a, const Point& pt) {
    Complex num = poly_eval(a.num, pt);
    for (const auto& [base, e] : a.den) {
        Complex bv = poly_eval(base, pt);
        if (bv == Complex(0.0, 0.0))
            throw EvalError("singular evaluation: denominator vanished", "(^ ... -k)");
        num /= complex_int_pow(bv, e, "denominator power");
    }
    return num;
}

// ---------------------------------------------------------------------------
// substitution of constants

namespace {
Rational subst_atom(const AtomPtr& a, const std::map<Var, Complex>& vals);

Rational subst_poly(const Poly& p, const std::map<Var, Complex>& vals) {
    Rational acc;
    for (const auto& [m, c] : p.terms) {
        Rational term = rat_const(c);
        for (const auto& [atom, e] : m.factors)
            term = rat_mul(term, rat_ipow(subst_atom(atom, vals), e));
        acc = rat_add(acc, term);
    }
    return acc;
}

Rational subst_atom(const AtomPtr& a, const std::map<Var, Complex>& vals) {
    switch (a->kind) {
        case Atom::Kind::Variable: {
            auto it = vals.find(a->v);
            if (it != vals.end()) return rat_const(it->second);
            return rat_mono(a);
        }
        default: {
            Rational arg = rat_subst_const(*a->arg, vals);
            if (cmp(arg, *a->arg) == 0) return rat_mono(a);
            if (arg.is_const()) {
                const Complex v = arg.num.const_value();
                switch (a->kind) {
                    case Atom::Kind::Exp: return rat_const(std::exp(v));
                    case Atom::Kind::Sin: return rat_const(std::sin(v));
                    case Atom::Kind::Cos: return rat_const(std::cos(v));
                    case Atom::Kind::Log:
                        if (!(v.imag() == 0.0 && v.real() <= 0.0)) return rat_const(std::log(v));
                        break;
                    case Atom::Kind::Func:
                        if (a->fn->eval) return rat_const(a->fn->eval(v));
                        break;
                    default: break;
                }
            }
            auto na = std::make_shared<const Atom>(
                Atom{a->kind, a->v, a->fn, std::make_shared<const Rational>(std::move(arg))});
            return rat_mono(std::move(na));
        }
    }
}
}  // namespace

Rational rat_subst_const(const Rational& a, const std::map<Var, Complex>& vals) {
    Rational acc = subst_poly(a.num, vals);
    for (const auto& [base, e] : a.den)
        acc = rat_mul(acc, rat_ipow(subst_poly(base, vals), -e));
    return acc;
}

std::size_t rat_size(const Rational& a) {
    std::size_t n = a.num.terms.size();
    for (const auto& [base, e] : a.den) n += base.terms.size();
    return n;
}

namespace {
void atom_free_vars(const Atom& a, std::set<Var>& out) {
    if (a.kind == Atom::Kind::Variable)
        out.insert(a.v);
    else
        rat_free_vars(*a.arg, out);
}
}  // namespace

void rat_free_vars(const Rational& a, std::set<Var>& out) {
    for (const auto& [m, c] : a.num.terms)
        for (const auto& [atom, e] : m.factors) atom_free_vars(*atom, out);
    for (const auto& [base, e] : a.den)
        for (const auto& [m, c] : base.terms)
            for (const auto& [atom, ae] : m.factors) atom_free_vars(*atom, out);
}

// ---------------------------------------------------------------------------
// conversion Expr <-> Rational

namespace {
Rational to_rational_impl(const Expr& e,
                          std::unordered_map<const ExprNode*, Rational>& memo) {
    auto it = memo.find(&e.node());
    if (it != memo.end()) return it->second;
    const ExprNode& n = e.node();
    Rational out;
    switch (n.kind) {
        case NodeKind::Const: out = rat_const(n.cval); break;
        case NodeKind::Variable: {
            auto atom = std::make_shared<const Atom>(Atom{Atom::Kind::Variable, n.v, nullptr, nullptr});
            out = rat_mono(std::move(atom));
            break;
        }
        case NodeKind::Sum: {
            for (const Expr& k : n.kids) out = rat_add(out, to_rational_impl(k, memo));
            break;
        }
        case NodeKind::Prod: {
            out = rat_const(Complex(1.0, 0.0));
            for (const Expr& k : n.kids) out = rat_mul(out, to_rational_impl(k, memo));
            break;
        }
        case NodeKind::IPow: out = rat_ipow(to_rational_impl(n.kids[0], memo), n.pexp); break;
        case NodeKind::Exp:
        case NodeKind::Log:
        case NodeKind::Sin:
        case NodeKind::Cos:
        case NodeKind::Func: {
            Rational arg = to_rational_impl(n.kids[0], memo);
            if (arg.is_const()) {
                const Complex v = arg.num.const_value();
                bool folded = true;
                switch (n.kind) {
                    case NodeKind::Exp: out = rat_const(std::exp(v)); break;
                    case NodeKind::Sin: out = rat_const(std::sin(v)); break;
                    case NodeKind::Cos: out = rat_const(std::cos(v)); break;
                    case NodeKind::Log:
                        if (!(v.imag() == 0.0 && v.real() <= 0.0))
                            out = rat_const(std::log(v));
                        else
                            folded = false;
                        break;
                    case NodeKind::Func:
                        if (n.fn->eval)
                            out = rat_const(n.fn->eval(v));
                        else
                            folded = false;
                        break;
                    default: folded = false; break;
                }
                if (folded) break;
            }
            Atom::Kind k = Atom::Kind::Exp;
            switch (n.kind) {
                case NodeKind::Exp: k = Atom::Kind::Exp; break;
                case NodeKind::Log: k = Atom::Kind::Log; break;
                case NodeKind::Sin: k = Atom::Kind::Sin; break;
                case NodeKind::Cos: k = Atom::Kind::Cos; break;
                case NodeKind::Func: k = Atom::Kind::Func; break;
                default: break;
            }
            auto atom = std::make_shared<const Atom>(
                Atom{k, Var::R, n.fn, std::make_shared<const Rational>(std::move(arg))});
            out = rat_mono(std::move(atom));
            break;
        }
    }
    memo.emplace(&e.node(), out);
    return out;
}

Expr atom_to_expr(const Atom& a) {
    switch (a.kind) {
        case Atom::Kind::Variable: return var(a.v);
        case Atom::Kind::Exp: return exp_e(to_expr(*a.arg));
        case Atom::Kind::Log: return log_e(to_expr(*a.arg));
        case Atom::Kind::Sin: return sin_e(to_expr(*a.arg));
        case Atom::Kind::Cos: return cos_e(to_expr(*a.arg));
        case Atom::Kind::Func: return func(a.fn, to_expr(*a.arg));
    }
    throw Error("atom_to_expr: bad atom");
}

Expr poly_to_expr(const Poly& p) {
    if (p.is_zero()) return constant(0.0);
    std::vector<Expr> terms;
    terms.reserve(p.terms.size());
    for (const auto& [m, c] : p.terms) {
        std::vector<Expr> factors;
        if (c != Complex(1.0, 0.0) || m.factors.empty()) factors.push_back(constant(c));
        for (const auto& [atom, e] : m.factors) factors.push_back(ipow(atom_to_expr(*atom), e));
        terms.push_back(prod(std::move(factors)));
    }
    return sum(std::move(terms));
}
}  // namespace

Rational to_rational(const Expr& e) {
    std::unordered_map<const ExprNode*, Rational> memo;
    return to_rational_impl(e, memo);
}

Expr to_expr(const Rational& r) {
    Expr numx = poly_to_expr(r.num);
    if (r.den.empty()) return numx;
    std::vector<Expr> factors;
    const bool num_is_one = r.num.is_const() && r.num.const_value() == Complex(1.0, 0.0);
    if (!num_is_one) factors.push_back(numx);
    for (const auto& [base, e] : r.den) factors.push_back(ipow(poly_to_expr(base), -e));
    return prod(std::move(factors));
}

}  // namespace endcalc::rnf
