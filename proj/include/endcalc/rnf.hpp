#pragma once

// Rational normal form backing Expr normalization and the parametrix algebra.
//
// An expression is held as   num / prod_i base_i^k_i   where num and the
// base_i are multivariate polynomials over "atoms" (variables and unary
// function applications with normalized arguments). Denominator bases are
// only ever created by negative integer powers of non-monomial expressions,
// so no polynomial factorization or gcd is needed: cancellations happen
// through exponent bookkeeping and exact coefficient arithmetic.
//
// All operations are deterministic: operand order inside commutative
// operations is canonicalized before accumulation, which makes the
// recursive parametrix defect cancel bit-exactly.

#include <memory>
#include <vector>

#include "endcalc/expr.hpp"

namespace endcalc::rnf {

struct Rational;
using RationalPtr = std::shared_ptr<const Rational>;

struct Atom {
    enum class Kind : std::uint8_t { Variable, Exp, Log, Sin, Cos, Func };
    Kind kind = Kind::Variable;
    Var v = Var::R;
    const FuncDef* fn = nullptr;
    RationalPtr arg;  // for non-Variable kinds
};
using AtomPtr = std::shared_ptr<const Atom>;

int cmp(const Atom& a, const Atom& b);

/// Sorted unique atom factors with nonzero integer exponents.
struct Monomial {
    std::vector<std::pair<AtomPtr, int>> factors;
    bool empty() const { return factors.empty(); }
};

int cmp(const Monomial& a, const Monomial& b);
Monomial mono_mul(const Monomial& a, const Monomial& b);

/// Terms sorted by monomial order; coefficients exactly nonzero.
struct Poly {
    std::vector<std::pair<Monomial, Complex>> terms;

    bool is_zero() const { return terms.empty(); }
    bool is_const() const { return terms.empty() || (terms.size() == 1 && terms[0].first.empty()); }
    Complex const_value() const;  // requires is_const()
    bool is_monomial() const { return terms.size() == 1; }
};

int cmp(const Poly& a, const Poly& b);
Poly poly_const(Complex c);
Poly poly_add(const Poly& a, const Poly& b);
Poly poly_neg(const Poly& a);
Poly poly_mul(const Poly& a, const Poly& b);
Poly poly_pow(const Poly& a, int k);  // k >= 0

struct Rational {
    Poly num;
    std::vector<std::pair<Poly, int>> den;  // sorted bases, exponents > 0

    bool is_zero() const { return num.is_zero(); }
    bool is_const() const { return den.empty() && num.is_const(); }
};

int cmp(const Rational& a, const Rational& b);
Rational rat_const(Complex c);
Rational rat_add(const Rational& a, const Rational& b);
/// Multi-operand sum folded in one pass: every scaled numerator contribution
/// enters a single per-monomial accumulation, so multisets of exactly
/// canceling products vanish bit-exactly even when pairwise partial sums
/// would round. The parametrix defect updates rely on this.
Rational rat_sum(const std::vector<Rational>& ops);
Rational rat_sub(const Rational& a, const Rational& b);
Rational rat_neg(const Rational& a);
Rational rat_mul(const Rational& a, const Rational& b);
Rational rat_ipow(const Rational& a, int k);
Rational rat_diff(const Rational& a, Var v);
Complex rat_eval(const Rational& a, const Point& pt);

/// Substitute hbar and/or z (or any variable) by complex constants.
Rational rat_subst_const(const Rational& a, const std::map<Var, Complex>& vals);

std::size_t rat_size(const Rational& a);  // total monomial count incl. den bases
void rat_free_vars(const Rational& a, std::set<Var>& out);

Rational to_rational(const Expr& e);
Expr to_expr(const Rational& r);

}  // namespace endcalc::rnf
