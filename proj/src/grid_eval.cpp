#include "endcalc/grid_eval.hpp"

#include <algorithm>
#include <map>

namespace endcalc {

namespace {

using rnf::Atom;
using rnf::AtomPtr;
using rnf::Monomial;
using rnf::Poly;
using rnf::Rational;

enum class AxisId : int { None = -1, R = 0, Theta = 1, Rho = 2, Eta = 3, Mixed = 4 };

AxisId axis_of_var(Var v) {
    switch (v) {
        case Var::R: return AxisId::R;
        case Var::Theta: return AxisId::Theta;
        case Var::Rho: return AxisId::Rho;
        case Var::Eta: return AxisId::Eta;
        default: return AxisId::Mixed;  // primes / leftovers unsupported here
    }
}

AxisId axis_of_atom(const Atom& a) {
    std::set<Var> vars;
    if (a.kind == Atom::Kind::Variable)
        vars.insert(a.v);
    else
        rnf::rat_free_vars(*a.arg, vars);
    if (vars.empty()) return AxisId::None;
    if (vars.size() > 1) return AxisId::Mixed;
    return axis_of_var(*vars.begin());
}

Complex atom_pow_at(const AtomPtr& atom, int e, double x, AxisId axis) {
    Point pt;
    switch (axis) {
        case AxisId::R: pt.r = x; break;
        case AxisId::Theta: pt.theta = x; break;
        case AxisId::Rho: pt.rho = x; break;
        case AxisId::Eta: pt.eta = x; break;
        default: break;
    }
    Monomial m;
    m.factors.emplace_back(atom, e);
    Poly p;
    p.terms.emplace_back(std::move(m), Complex(1.0, 0.0));
    return rnf::rat_eval(Rational{std::move(p), {}}, pt);
}

struct MonoLess {
    bool operator()(const Monomial& a, const Monomial& b) const { return rnf::cmp(a, b) < 0; }
};

}  // namespace

GridEvaluator::GridEvaluator(const Expr& a, ProductGrid grid, double hbar, Complex z)
    : GridEvaluator(rnf::to_rational(a), std::move(grid), hbar, z) {}

GridEvaluator::GridEvaluator(const rnf::Rational& a, ProductGrid grid, double hbar, Complex z)
    : grid_(std::move(grid)) {
    rational_ = rnf::rat_subst_const(a, {{Var::Hbar, Complex(hbar, 0.0)}, {Var::Z, z}});
    std::set<Var> vars;
    rnf::rat_free_vars(rational_, vars);
    if (vars.count(Var::RPrime) || vars.count(Var::ThetaPrime))
        throw Error("grid evaluator: primed variables not supported on product grids");
    build(rational_);
}

void GridEvaluator::build(const rnf::Rational& a) {
    r_tabs_.assign(1, std::vector<Complex>(grid_.r.size(), Complex(1.0, 0.0)));
    t_tabs_.assign(1, std::vector<Complex>(grid_.theta.size(), Complex(1.0, 0.0)));
    p_tabs_.assign(1, std::vector<Complex>(grid_.rho.size(), Complex(1.0, 0.0)));
    e_tabs_.assign(1, std::vector<Complex>(grid_.eta.size(), Complex(1.0, 0.0)));

    num_plan_ = plan_poly(a.num);
    if (!structured_) return;
    for (const auto& [base, e] : a.den) {
        den_plans_.emplace_back(plan_poly(base), e);
        if (!structured_) return;
    }
    depends_on_q_ = num_plan_.q_dependent;
    for (const auto& [plan, e] : den_plans_) depends_on_q_ = depends_on_q_ || plan.q_dependent;
}

GridEvaluator::PolyPlan GridEvaluator::plan_poly(const rnf::Poly& p) {
    PolyPlan plan;
    // axis-restricted monomial -> table id registries
    std::map<Monomial, int, MonoLess> reg[4];
    const std::vector<double>* axes[4] = {&grid_.r, &grid_.theta, &grid_.rho, &grid_.eta};
    std::vector<std::vector<Complex>>* tabs[4] = {&r_tabs_, &t_tabs_, &p_tabs_, &e_tabs_};

    auto table_id = [&](int axis, const Monomial& m) -> int {
        if (m.factors.empty()) return 0;
        auto it = reg[axis].find(m);
        if (it != reg[axis].end()) return it->second;
        std::vector<Complex> tab(axes[axis]->size(), Complex(1.0, 0.0));
        for (std::size_t i = 0; i < tab.size(); ++i) {
            Complex v(1.0, 0.0);
            for (const auto& [atom, e] : m.factors)
                v *= atom_pow_at(atom, e, (*axes[axis])[i], AxisId(axis));
            tab[i] = v;
        }
        tabs[axis]->push_back(std::move(tab));
        const int id = int(tabs[axis]->size()) - 1;
        reg[axis].emplace(m, id);
        return id;
    };

    std::map<std::pair<int, int>, std::size_t> group_index;
    for (const auto& [m, c] : p.terms) {
        Monomial part[4];
        for (const auto& [atom, e] : m.factors) {
            const AxisId ax = axis_of_atom(*atom);
            if (ax == AxisId::Mixed) {
                structured_ = false;
                return plan;
            }
            if (ax == AxisId::None) continue;  // constant atom; folded value handled below
            part[int(ax)].factors.emplace_back(atom, e);
        }
        Complex coeff = c;
        // constant atoms (no free variables) fold into the coefficient
        for (const auto& [atom, e] : m.factors)
            if (axis_of_atom(*atom) == AxisId::None)
                coeff *= atom_pow_at(atom, e, 0.0, AxisId::None);
        const int rid = table_id(0, part[0]);
        const int tid = table_id(1, part[1]);
        const int pid = table_id(2, part[2]);
        const int eid = table_id(3, part[3]);
        const auto key = std::make_pair(pid, eid);
        auto it = group_index.find(key);
        if (it == group_index.end()) {
            PolyPlan::Group g;
            g.p_tab = pid;
            g.e_tab = eid;
            plan.groups.push_back(std::move(g));
            it = group_index.emplace(key, plan.groups.size() - 1).first;
        }
        plan.groups[it->second].terms.emplace_back(coeff, std::make_pair(rid, tid));
        plan.q_dependent = plan.q_dependent || rid != 0 || tid != 0;
    }
    return plan;
}

void GridEvaluator::poly_row(const PolyPlan& plan, std::size_t ir, std::size_t it, Complex* out,
                             std::vector<Complex>& scratch) const {
    const std::size_t nk = grid_.rho.size(), nl = grid_.eta.size();
    std::fill(out, out + nk * nl, Complex(0.0, 0.0));
    scratch.resize(plan.groups.size());
    for (std::size_t g = 0; g < plan.groups.size(); ++g) {
        Complex cg(0.0, 0.0);
        for (const auto& [c, ids] : plan.groups[g].terms)
            cg += c * r_tabs_[ids.first][ir] * t_tabs_[ids.second][it];
        scratch[g] = cg;
    }
    for (std::size_t g = 0; g < plan.groups.size(); ++g) {
        const Complex cg = scratch[g];
        if (cg == Complex(0.0, 0.0)) continue;
        const auto& ptab = p_tabs_[plan.groups[g].p_tab];
        const auto& etab = e_tabs_[plan.groups[g].e_tab];
        for (std::size_t ik = 0; ik < nk; ++ik) {
            const Complex cp = cg * ptab[ik];
            Complex* row = out + ik * nl;
            for (std::size_t il = 0; il < nl; ++il) row[il] += cp * etab[il];
        }
    }
}

Complex GridEvaluator::poly_at(const PolyPlan& plan, std::size_t ir, std::size_t it,
                               std::size_t ik, std::size_t il) const {
    Complex acc(0.0, 0.0);
    for (const auto& g : plan.groups) {
        Complex cg(0.0, 0.0);
        for (const auto& [c, ids] : g.terms)
            cg += c * r_tabs_[ids.first][ir] * t_tabs_[ids.second][it];
        acc += cg * p_tabs_[g.p_tab][ik] * e_tabs_[g.e_tab][il];
    }
    return acc;
}

namespace {
Complex int_pow(Complex b, int e) {
    if (e == 0) return Complex(1.0, 0.0);
    bool neg = e < 0;
    unsigned k = neg ? unsigned(-(long long)e) : unsigned(e);
    Complex acc(1.0, 0.0);
    while (k) {
        if (k & 1u) acc *= b;
        b *= b;
        k >>= 1u;
    }
    return neg ? Complex(1.0, 0.0) / acc : acc;
}
}  // namespace

void GridEvaluator::eval_q_row(std::size_t ir, std::size_t it, Complex* out) const {
    const std::size_t np = n_p();
    if (!structured_) {
        Point pt;
        pt.r = grid_.r[ir];
        pt.theta = grid_.theta[it];
        const std::size_t nl = grid_.eta.size();
        for (std::size_t ik = 0; ik < grid_.rho.size(); ++ik) {
            pt.rho = grid_.rho[ik];
            for (std::size_t il = 0; il < nl; ++il) {
                pt.eta = grid_.eta[il];
                out[ik * nl + il] = rnf::rat_eval(rational_, pt);
            }
        }
        return;
    }
    std::vector<Complex> scratch;
    poly_row(num_plan_, ir, it, out, scratch);
    if (den_plans_.empty()) return;
    std::vector<Complex> drow(np);
    for (const auto& [plan, e] : den_plans_) {
        poly_row(plan, ir, it, drow.data(), scratch);
        for (std::size_t i = 0; i < np; ++i) {
            const Complex dv = int_pow(drow[i], e);
            if (dv == Complex(0.0, 0.0))
                throw EvalError("singular evaluation: denominator vanished on grid",
                                "grid row (" + std::to_string(ir) + "," + std::to_string(it) + ")");
            out[i] /= dv;
        }
    }
}

Complex GridEvaluator::eval_at(std::size_t ir, std::size_t it, std::size_t ik,
                               std::size_t il) const {
    if (!structured_) {
        Point pt;
        pt.r = grid_.r[ir];
        pt.theta = grid_.theta[it];
        pt.rho = grid_.rho[ik];
        pt.eta = grid_.eta[il];
        return rnf::rat_eval(rational_, pt);
    }
    Complex v = poly_at(num_plan_, ir, it, ik, il);
    for (const auto& [plan, e] : den_plans_) {
        const Complex dv = int_pow(poly_at(plan, ir, it, ik, il), e);
        if (dv == Complex(0.0, 0.0))
            throw EvalError("singular evaluation: denominator vanished on grid", "grid point");
        v /= dv;
    }
    return v;
}

}  // namespace endcalc
