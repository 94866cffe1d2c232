#include "endcalc/expr.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <sstream>
#include <unordered_map>

#include "endcalc/rnf.hpp"

namespace endcalc {

const char* var_name(Var v) {
    switch (v) {
        case Var::R: return "r";
        case Var::Theta: return "theta";
        case Var::Rho: return "rho";
        case Var::Eta: return "eta";
        case Var::RPrime: return "rp";
        case Var::ThetaPrime: return "thetap";
        case Var::Hbar: return "hbar";
        case Var::Z: return "z";
    }
    return "?";
}

Complex Point::get(Var v) const {
    switch (v) {
        case Var::R: return r;
        case Var::Theta: return theta;
        case Var::Rho: return rho;
        case Var::Eta: return eta;
        case Var::RPrime: return r_prime;
        case Var::ThetaPrime: return theta_prime;
        case Var::Hbar: return hbar;
        case Var::Z: return z;
    }
    return 0.0;
}

// --------------------------------------------------------------------------
// Function registry

namespace {
std::mutex g_func_mutex;
std::unordered_map<std::string, std::unique_ptr<FuncDef>>& func_table() {
    static std::unordered_map<std::string, std::unique_ptr<FuncDef>> t;
    return t;
}
}  // namespace

const FuncDef* register_function(FuncDef def) {
    std::lock_guard<std::mutex> lock(g_func_mutex);
    auto& t = func_table();
    auto it = t.find(def.name);
    if (it != t.end()) return it->second.get();
    auto owned = std::make_unique<FuncDef>(std::move(def));
    const FuncDef* p = owned.get();
    t.emplace(p->name, std::move(owned));
    return p;
}

const FuncDef* find_function(const std::string& name) {
    std::lock_guard<std::mutex> lock(g_func_mutex);
    auto& t = func_table();
    auto it = t.find(name);
    return it == t.end() ? nullptr : it->second.get();
}

// --------------------------------------------------------------------------
// Builders

namespace {
Expr make_node(ExprNode n) { return Expr(std::make_shared<const ExprNode>(std::move(n))); }
}  // namespace

Expr::Expr() : node_(std::make_shared<const ExprNode>()) {}

Expr constant(Complex c) {
    ExprNode n;
    n.kind = NodeKind::Const;
    n.cval = c;
    return make_node(std::move(n));
}

Expr constant(double x) { return constant(Complex(x, 0.0)); }

Expr var(Var v) {
    ExprNode n;
    n.kind = NodeKind::Variable;
    n.v = v;
    return make_node(std::move(n));
}

Expr sum(std::vector<Expr> kids) {
    if (kids.empty()) return constant(0.0);
    if (kids.size() == 1) return kids[0];
    ExprNode n;
    n.kind = NodeKind::Sum;
    n.kids = std::move(kids);
    return make_node(std::move(n));
}

Expr prod(std::vector<Expr> kids) {
    if (kids.empty()) return constant(1.0);
    if (kids.size() == 1) return kids[0];
    ExprNode n;
    n.kind = NodeKind::Prod;
    n.kids = std::move(kids);
    return make_node(std::move(n));
}

Expr ipow(const Expr& base, int e) {
    if (e == 1) return base;
    ExprNode n;
    n.kind = NodeKind::IPow;
    n.pexp = e;
    n.kids = {base};
    return make_node(std::move(n));
}

namespace {
Expr unary(NodeKind k, const Expr& a) {
    ExprNode n;
    n.kind = k;
    n.kids = {a};
    return make_node(std::move(n));
}
}  // namespace

Expr exp_e(const Expr& a) { return unary(NodeKind::Exp, a); }
Expr log_e(const Expr& a) { return unary(NodeKind::Log, a); }
Expr sin_e(const Expr& a) { return unary(NodeKind::Sin, a); }
Expr cos_e(const Expr& a) { return unary(NodeKind::Cos, a); }

Expr func(const FuncDef* fn, const Expr& arg) {
    ExprNode n;
    n.kind = NodeKind::Func;
    n.fn = fn;
    n.kids = {arg};
    return make_node(std::move(n));
}

Expr operator+(const Expr& a, const Expr& b) { return sum({a, b}); }
Expr operator-(const Expr& a, const Expr& b) { return sum({a, constant(-1.0) * b}); }
Expr operator-(const Expr& a) { return constant(-1.0) * a; }
Expr operator*(const Expr& a, const Expr& b) { return prod({a, b}); }
Expr operator*(double a, const Expr& b) { return prod({constant(a), b}); }
Expr operator*(Complex a, const Expr& b) { return prod({constant(a), b}); }
Expr operator*(const Expr& a, double b) { return prod({a, constant(b)}); }
Expr operator*(const Expr& a, Complex b) { return prod({a, constant(b)}); }
Expr operator+(const Expr& a, double b) { return sum({a, constant(b)}); }
Expr operator-(const Expr& a, double b) { return sum({a, constant(-b)}); }

// --------------------------------------------------------------------------
// diff

Expr diff(const Expr& e, Var v) {
    const ExprNode& n = e.node();
    switch (n.kind) {
        case NodeKind::Const: return constant(0.0);
        case NodeKind::Variable: return constant(n.v == v ? 1.0 : 0.0);
        case NodeKind::Sum: {
            std::vector<Expr> kids;
            kids.reserve(n.kids.size());
            for (const Expr& k : n.kids) kids.push_back(diff(k, v));
            return sum(std::move(kids));
        }
        case NodeKind::Prod: {
            std::vector<Expr> terms;
            for (std::size_t i = 0; i < n.kids.size(); ++i) {
                std::vector<Expr> fac;
                for (std::size_t j = 0; j < n.kids.size(); ++j)
                    fac.push_back(i == j ? diff(n.kids[j], v) : n.kids[j]);
                terms.push_back(prod(std::move(fac)));
            }
            return sum(std::move(terms));
        }
        case NodeKind::IPow: {
            if (n.pexp == 0) return constant(0.0);
            return prod({constant(double(n.pexp)), ipow(n.kids[0], n.pexp - 1), diff(n.kids[0], v)});
        }
        case NodeKind::Exp: return prod({e, diff(n.kids[0], v)});
        case NodeKind::Log: return prod({ipow(n.kids[0], -1), diff(n.kids[0], v)});
        case NodeKind::Sin: return prod({cos_e(n.kids[0]), diff(n.kids[0], v)});
        case NodeKind::Cos: return prod({constant(-1.0), sin_e(n.kids[0]), diff(n.kids[0], v)});
        case NodeKind::Func: {
            if (!n.fn || !n.fn->deriv)
                throw DiffError("missing derivative rule for function '" +
                                std::string(n.fn ? n.fn->name : "?") + "'");
            return prod({n.fn->deriv(n.kids[0]), diff(n.kids[0], v)});
        }
    }
    throw Error("diff: bad node");
}

// --------------------------------------------------------------------------
// eval

namespace {

Complex ipow_value(Complex base, int e, const ExprNode* ctx) {
    if (e == 0) return Complex(1.0, 0.0);
    const bool neg = e < 0;
    unsigned k = neg ? unsigned(-(long long)e) : unsigned(e);
    if (neg && base == Complex(0.0, 0.0))
        throw EvalError("singular evaluation: zero to negative power",
                        ctx ? to_text(Expr(std::make_shared<const ExprNode>(*ctx))) : "?");
    Complex acc(1.0, 0.0);
    Complex b = base;
    while (k) {
        if (k & 1u) acc *= b;
        b *= b;
        k >>= 1u;
    }
    return neg ? Complex(1.0, 0.0) / acc : acc;
}

}  // namespace

Complex eval(const Expr& e, const Point& pt) {
    const ExprNode& n = e.node();
    switch (n.kind) {
        case NodeKind::Const: return n.cval;
        case NodeKind::Variable: return pt.get(n.v);
        case NodeKind::Sum: {
            Complex acc(0.0, 0.0);
            for (const Expr& k : n.kids) acc += eval(k, pt);
            return acc;
        }
        case NodeKind::Prod: {
            Complex acc(1.0, 0.0);
            for (const Expr& k : n.kids) acc *= eval(k, pt);
            return acc;
        }
        case NodeKind::IPow: return ipow_value(eval(n.kids[0], pt), n.pexp, &n);
        case NodeKind::Exp: return std::exp(eval(n.kids[0], pt));
        case NodeKind::Log: {
            Complex a = eval(n.kids[0], pt);
            if (a.imag() == 0.0 && a.real() <= 0.0)
                throw EvalError("singular evaluation: log of nonpositive real", to_text(e));
            return std::log(a);
        }
        case NodeKind::Sin: return std::sin(eval(n.kids[0], pt));
        case NodeKind::Cos: return std::cos(eval(n.kids[0], pt));
        case NodeKind::Func: return n.fn->eval(eval(n.kids[0], pt));
    }
    throw Error("eval: bad node");
}

// --------------------------------------------------------------------------
// subst

namespace {
Expr subst_impl(const Expr& e, const std::map<Var, Expr>& repl,
                std::unordered_map<const ExprNode*, Expr>& memo) {
    auto it = memo.find(&e.node());
    if (it != memo.end()) return it->second;
    const ExprNode& n = e.node();
    Expr out = e;
    switch (n.kind) {
        case NodeKind::Const: break;
        case NodeKind::Variable: {
            auto rit = repl.find(n.v);
            if (rit != repl.end()) out = rit->second;
            break;
        }
        default: {
            std::vector<Expr> kids;
            kids.reserve(n.kids.size());
            bool changed = false;
            for (const Expr& k : n.kids) {
                Expr nk = subst_impl(k, repl, memo);
                changed = changed || nk.ptr() != k.ptr();
                kids.push_back(std::move(nk));
            }
            if (changed) {
                ExprNode copy = n;
                copy.kids = std::move(kids);
                out = Expr(std::make_shared<const ExprNode>(std::move(copy)));
            }
            break;
        }
    }
    memo.emplace(&e.node(), out);
    return out;
}
}  // namespace

Expr subst(const Expr& e, const std::map<Var, Expr>& repl) {
    std::unordered_map<const ExprNode*, Expr> memo;
    return subst_impl(e, repl, memo);
}

// --------------------------------------------------------------------------
// normalize and friends (rational normal form backend)

Expr normalize(const Expr& e) { return rnf::to_expr(rnf::to_rational(e)); }

bool struct_equal(const Expr& a, const Expr& b) {
    return rnf::cmp(rnf::to_rational(a), rnf::to_rational(b)) == 0;
}

bool is_zero_expr(const Expr& e) { return rnf::to_rational(e).is_zero(); }

namespace {
void count_nodes(const ExprNode* n, std::unordered_map<const ExprNode*, bool>& seen,
                 std::size_t& count) {
    if (seen.count(n)) return;
    seen.emplace(n, true);
    ++count;
    for (const Expr& k : n->kids) count_nodes(&k.node(), seen, count);
}

void collect_vars(const ExprNode* n, std::unordered_map<const ExprNode*, bool>& seen,
                  std::set<Var>& out) {
    if (seen.count(n)) return;
    seen.emplace(n, true);
    if (n->kind == NodeKind::Variable) out.insert(n->v);
    for (const Expr& k : n->kids) collect_vars(&k.node(), seen, out);
}
}  // namespace

std::size_t node_count(const Expr& e) {
    std::unordered_map<const ExprNode*, bool> seen;
    std::size_t count = 0;
    count_nodes(&e.node(), seen, count);
    return count;
}

std::set<Var> free_vars(const Expr& e) {
    std::unordered_map<const ExprNode*, bool> seen;
    std::set<Var> out;
    collect_vars(&e.node(), seen, out);
    return out;
}

FdReport fd_check(const Expr& e, Var v, const Point& pt, double step) {
    if (!(step > 0.0)) throw Error("fd_check: step must be positive");
    FdReport rep;
    rep.symbolic = eval(diff(e, v), pt);
    auto shift = [&](double h) {
        Point q = pt;
        switch (v) {
            case Var::R: q.r += h; break;
            case Var::Theta: q.theta += h; break;
            case Var::Rho: q.rho += h; break;
            case Var::Eta: q.eta += h; break;
            case Var::RPrime: q.r_prime += h; break;
            case Var::ThetaPrime: q.theta_prime += h; break;
            case Var::Hbar: q.hbar += h; break;
            case Var::Z: q.z += h; break;
        }
        return eval(e, q);
    };
    rep.numeric = (shift(step) - shift(-step)) / (2.0 * step);
    rep.rel_err = std::abs(rep.symbolic - rep.numeric) / std::max(1.0, std::abs(rep.symbolic));
    return rep;
}

// --------------------------------------------------------------------------
// text form

namespace {
void to_text_impl(const Expr& e, std::string& out) {
    const ExprNode& n = e.node();
    switch (n.kind) {
        case NodeKind::Const: {
            if (n.cval.imag() == 0.0) {
                out += format_double(n.cval.real());
            } else {
                out += "(c ";
                out += format_double(n.cval.real());
                out += ' ';
                out += format_double(n.cval.imag());
                out += ')';
            }
            return;
        }
        case NodeKind::Variable: out += var_name(n.v); return;
        case NodeKind::Sum:
        case NodeKind::Prod: {
            out += n.kind == NodeKind::Sum ? "(+" : "(*";
            for (const Expr& k : n.kids) {
                out += ' ';
                to_text_impl(k, out);
            }
            out += ')';
            return;
        }
        case NodeKind::IPow: {
            out += "(^ ";
            to_text_impl(n.kids[0], out);
            out += ' ';
            out += std::to_string(n.pexp);
            out += ')';
            return;
        }
        case NodeKind::Exp:
        case NodeKind::Log:
        case NodeKind::Sin:
        case NodeKind::Cos: {
            out += n.kind == NodeKind::Exp   ? "(exp "
                   : n.kind == NodeKind::Log ? "(log "
                   : n.kind == NodeKind::Sin ? "(sin "
                                             : "(cos ";
            to_text_impl(n.kids[0], out);
            out += ')';
            return;
        }
        case NodeKind::Func: {
            out += "(fn ";
            out += n.fn->name;
            out += ' ';
            to_text_impl(n.kids[0], out);
            out += ')';
            return;
        }
    }
}

struct Parser {
    const std::string& s;
    std::size_t i = 0;

    explicit Parser(const std::string& text) : s(text) {}

    void skip_ws() {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\n' || s[i] == '\t' || s[i] == '\r')) ++i;
    }

    std::string token() {
        skip_ws();
        std::size_t start = i;
        while (i < s.size() && s[i] != ' ' && s[i] != '(' && s[i] != ')' && s[i] != '\n' &&
               s[i] != '\t' && s[i] != '\r')
            ++i;
        return s.substr(start, i - start);
    }

    void expect(char c) {
        skip_ws();
        if (i >= s.size() || s[i] != c)
            throw Error("parse error: expected '" + std::string(1, c) + "' at offset " +
                        std::to_string(i));
        ++i;
    }

    double number() {
        std::string t = token();
        std::size_t used = 0;
        double v = std::stod(t, &used);
        if (used != t.size()) throw Error("parse error: bad number '" + t + "'");
        return v;
    }

    Expr parse() {
        skip_ws();
        if (i >= s.size()) throw Error("parse error: empty input");
        if (s[i] != '(') {
            std::string t = token();
            for (Var v : {Var::R, Var::Theta, Var::Rho, Var::Eta, Var::RPrime, Var::ThetaPrime,
                          Var::Hbar, Var::Z})
                if (t == var_name(v)) return var(v);
            std::size_t used = 0;
            double num = std::stod(t, &used);
            if (used != t.size()) throw Error("parse error: unknown token '" + t + "'");
            return constant(num);
        }
        ++i;  // consume '('
        std::string head = token();
        Expr out;
        if (head == "+" || head == "*") {
            std::vector<Expr> kids;
            for (;;) {
                skip_ws();
                if (i < s.size() && s[i] == ')') break;
                kids.push_back(parse());
            }
            out = head == "+" ? sum(std::move(kids)) : prod(std::move(kids));
        } else if (head == "^") {
            Expr base = parse();
            skip_ws();
            std::string t = token();
            out = ipow(base, std::stoi(t));
        } else if (head == "c") {
            double re = number();
            double im = number();
            out = constant(Complex(re, im));
        } else if (head == "exp" || head == "log" || head == "sin" || head == "cos") {
            Expr a = parse();
            out = head == "exp"   ? exp_e(a)
                  : head == "log" ? log_e(a)
                  : head == "sin" ? sin_e(a)
                                  : cos_e(a);
        } else if (head == "fn") {
            std::string name = token();
            const FuncDef* fn = find_function(name);
            if (!fn) throw Error("parse error: unregistered function '" + name + "'");
            out = func(fn, parse());
        } else {
            throw Error("parse error: unknown head '" + head + "'");
        }
        expect(')');
        return out;
    }
};
}  // namespace

std::string to_text(const Expr& e) {
    std::string out;
    to_text_impl(e, out);
    return out;
}

Expr parse_expr(const std::string& text) {
    Parser p(text);
    Expr e = p.parse();
    p.skip_ws();
    if (p.i != text.size()) throw Error("parse error: trailing input");
    return e;
}

}  // namespace endcalc
