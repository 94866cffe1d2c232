#pragma once

// Fast evaluation of normalized expressions over product grids
// {r_i} x {theta_j} x {rho_k} x {eta_l}.
//
// Works on the rational normal form: every atom whose variables lie on a
// single axis is tabulated once per axis; monomials sharing the same
// (rho, eta) factor tables are grouped so a full (rho, eta) row for fixed
// (r, theta) costs one multiply-add per group and lattice point. Expressions
// that mix axes inside one atom fall back to pointwise evaluation.

#include <vector>

#include "endcalc/expr.hpp"
#include "endcalc/rnf.hpp"

namespace endcalc {

struct ProductGrid {
    std::vector<double> r;
    std::vector<double> theta;
    std::vector<double> rho;
    std::vector<double> eta;
};

class GridEvaluator {
  public:
    /// `a` is evaluated with hbar and z fixed to the given values.
    GridEvaluator(const Expr& a, ProductGrid grid, double hbar, Complex z);
    GridEvaluator(const rnf::Rational& a, ProductGrid grid, double hbar, Complex z);

    bool structured() const { return structured_; }
    bool depends_on_q() const { return depends_on_q_; }
    std::size_t n_rho() const { return grid_.rho.size(); }
    std::size_t n_eta() const { return grid_.eta.size(); }
    std::size_t n_p() const { return grid_.rho.size() * grid_.eta.size(); }

    /// Fills out[ik * n_eta + il] with values at (r_i, theta_j, rho_k, eta_l).
    void eval_q_row(std::size_t ir, std::size_t it, Complex* out) const;

    Complex eval_at(std::size_t ir, std::size_t it, std::size_t ik, std::size_t il) const;

  private:
    struct PolyPlan {
        struct Group {
            int p_tab = 0;
            int e_tab = 0;
            std::vector<std::pair<Complex, std::pair<int, int>>> terms;  // coeff, (r_tab, t_tab)
        };
        std::vector<Group> groups;
        bool q_dependent = false;
    };

    void build(const rnf::Rational& a);
    PolyPlan plan_poly(const rnf::Poly& p);
    void poly_row(const PolyPlan& plan, std::size_t ir, std::size_t it, Complex* out,
                  std::vector<Complex>& scratch) const;
    Complex poly_at(const PolyPlan& plan, std::size_t ir, std::size_t it, std::size_t ik,
                    std::size_t il) const;

    ProductGrid grid_;
    rnf::Rational rational_;  // fallback path
    bool structured_ = true;
    bool depends_on_q_ = false;

    // axis tables: id 0 is the constant-1 table
    std::vector<std::vector<Complex>> r_tabs_, t_tabs_, p_tabs_, e_tabs_;
    PolyPlan num_plan_;
    std::vector<std::pair<PolyPlan, int>> den_plans_;
};

}  // namespace endcalc
