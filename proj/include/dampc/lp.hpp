#pragma once

#include "dampc/common.hpp"

namespace dampc {

enum class SolveStatus { Optimal, Infeasible, Unbounded };

const char* to_string(SolveStatus s);

// minimize cost'x  s.t.  A_in x <= b_in,  A_eq x = b_eq,  x free.
struct LpProblem {
    Vec cost;
    Mat A_eq;
    Vec b_eq;
    Mat A_in;
    Vec b_in;

    Eigen::Index num_vars() const { return cost.size(); }
    void check() const;
};

// Multipliers follow cost + A_in' y_in + A_eq' y_eq = 0 with y_in >= 0,
// so the dual objective is -(b_in' y_in + b_eq' y_eq).
struct LpResult {
    SolveStatus status = SolveStatus::Infeasible;
    Vec x;
    double objective = 0.0;
    Vec y_in;
    Vec y_eq;
    int iterations = 0;

    double dual_objective(const LpProblem& p) const;
};

// Dense two-phase simplex over the split-variable standard form. Entering
// columns use the largest reduced cost with lowest-index ties; after a run of
// degenerate pivots the rule switches to Bland's, so results are reproducible.
// Throws NumericalFailure on the iteration cap or an inaccurate final basis.
LpResult solve_lp(const LpProblem& p);

// Max primal infeasibility of x (inequality excess and equality mismatch).
double lp_residual(const LpProblem& p, const Vec& x);

}  // namespace dampc
