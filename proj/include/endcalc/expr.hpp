#pragma once

#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "endcalc/common.hpp"

namespace endcalc {

// Phase-space variables (r, theta) with duals (rho, eta), the primed copies
// used by bisymbols, the semiclassical parameter and the spectral parameter.
enum class Var : std::uint8_t { R, Theta, Rho, Eta, RPrime, ThetaPrime, Hbar, Z };

const char* var_name(Var v);

struct Point {
    double r = 0.0;
    double theta = 0.0;
    double rho = 0.0;
    double eta = 0.0;
    double r_prime = 0.0;
    double theta_prime = 0.0;
    double hbar = 1.0;
    Complex z{0.0, 0.0};

    Complex get(Var v) const;
};

class Expr;

/// A registered named function of one argument (used for weight functions and
/// chart maps). `deriv` maps the argument expression u to F'(u); absent rule
/// makes diff throw.
struct FuncDef {
    std::string name;
    std::function<Complex(Complex)> eval;
    std::function<Expr(const Expr&)> deriv;
};

/// Registers a function definition under its name and returns a stable handle.
/// Re-registering the same name returns the existing handle (definitions are
/// assumed identical).
const FuncDef* register_function(FuncDef def);
const FuncDef* find_function(const std::string& name);  // nullptr if unknown

enum class NodeKind : std::uint8_t { Const, Variable, Sum, Prod, IPow, Exp, Log, Sin, Cos, Func };

struct ExprNode;

/// Immutable expression DAG over (r, theta, rho, eta, r', theta'; hbar, z).
/// Value semantics: copying shares nodes. Safe to evaluate concurrently.
class Expr {
  public:
    Expr();  // constant 0
    explicit Expr(std::shared_ptr<const ExprNode> n) : node_(std::move(n)) {}
    const ExprNode& node() const { return *node_; }
    const std::shared_ptr<const ExprNode>& ptr() const { return node_; }

  private:
    std::shared_ptr<const ExprNode> node_;
};

struct ExprNode {
    NodeKind kind = NodeKind::Const;
    Complex cval{0.0, 0.0};        // Const
    Var v = Var::R;                // Variable
    int pexp = 1;                  // IPow exponent (may be negative)
    const FuncDef* fn = nullptr;   // Func
    std::vector<Expr> kids;
};

// Builders ------------------------------------------------------------------

Expr constant(Complex c);
Expr constant(double x);
Expr var(Var v);
Expr sum(std::vector<Expr> kids);
Expr prod(std::vector<Expr> kids);
Expr ipow(const Expr& base, int e);
Expr exp_e(const Expr& a);
Expr log_e(const Expr& a);
Expr sin_e(const Expr& a);
Expr cos_e(const Expr& a);
Expr func(const FuncDef* fn, const Expr& arg);

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr operator*(const Expr& a, const Expr& b);
Expr operator*(double a, const Expr& b);
Expr operator*(Complex a, const Expr& b);
Expr operator*(const Expr& a, double b);
Expr operator*(const Expr& a, Complex b);
Expr operator+(const Expr& a, double b);
Expr operator-(const Expr& a, double b);

// Operations ----------------------------------------------------------------

/// Exact partial derivative; named functions use their registered rule.
Expr diff(const Expr& e, Var v);

/// Pointwise evaluation. Throws EvalError on poles / log of nonpositive reals.
Complex eval(const Expr& e, const Point& pt);

/// Simultaneous substitution of variables by expressions.
Expr subst(const Expr& e, const std::map<Var, Expr>& repl);

/// Canonical form: constants folded, sums/products flattened and collected
/// over a rational normal form, operands in canonical order. Idempotent.
Expr normalize(const Expr& e);

/// Structural equality after normalization.
bool struct_equal(const Expr& a, const Expr& b);

/// True iff e normalizes to the zero expression.
bool is_zero_expr(const Expr& e);

std::size_t node_count(const Expr& e);
std::set<Var> free_vars(const Expr& e);

struct FdReport {
    Complex symbolic{};
    Complex numeric{};
    double rel_err = 0.0;
};

/// Central-difference check of diff along v at pt.
FdReport fd_check(const Expr& e, Var v, const Point& pt, double step);

// Text form -----------------------------------------------------------------
// Fully parenthesized s-expressions, round-trippable:
//   (+ e1 e2 ...) (* e1 e2 ...) (^ e k) (exp e) (log e) (sin e) (cos e)
//   (fn name e) variables by name, numbers as 1.5 or (c re im).

std::string to_text(const Expr& e);
Expr parse_expr(const std::string& text);

}  // namespace endcalc
