#pragma once

#include "dampc/lp.hpp"

namespace dampc {

// minimize 0.5 x'Px + q'x  s.t.  A_in x <= b_in,  A_eq x = b_eq.
struct QpProblem {
    Mat P;
    Vec q;
    Mat A_eq;
    Vec b_eq;
    Mat A_in;
    Vec b_in;

    Eigen::Index num_vars() const { return q.size(); }
    // Shapes, symmetry, and PSD up to -1e-8.
    void check() const;
};

// Multipliers follow P x + q + A_in' y_in + A_eq' y_eq = 0 with y_in >= 0.
struct QpResult {
    SolveStatus status = SolveStatus::Infeasible;
    Vec x;
    double objective = 0.0;
    Vec y_in;
    Vec y_eq;
    std::vector<Eigen::Index> active;  // inequality rows held at equality
    int iterations = 0;
};

struct KktResiduals {
    double stationarity = 0.0;
    double primal = 0.0;
    double dual = 0.0;
    double complementarity = 0.0;

    double max() const;
};

KktResiduals kkt_residuals(const QpProblem& p, const QpResult& r);

// Dual active-set (Goldfarb-Idnani) on P + eps*I, eps = 1e-9, followed by a
// polish of the final working set. Returns Infeasible as a status; throws
// NumericalFailure when the KKT contract (1e-6) cannot be met.
QpResult solve_qp(const QpProblem& p);

// Repeated solves of a strictly convex QP whose Hessian and constraints are
// fixed and only the linear term changes. The first solve runs the dual
// method; later solves run a primal active-set method from the previous
// optimum, on a Cholesky factor of H and a cached Gram matrix of L^-1 A'.
class ConvexQpWorkspace {
public:
    ConvexQpWorkspace(Mat H, Mat A_eq, Vec b_eq, Mat A_in, Vec b_in);

    QpResult solve(const Vec& g);
    void reset() { warm_ = false; }

    Eigen::Index num_vars() const { return H_.rows(); }
    const Mat& H() const { return H_; }
    const Mat& A_in() const { return A_in_; }
    const Vec& b_in() const { return b_in_; }
    const Mat& A_eq() const { return A_eq_; }
    const Vec& b_eq() const { return b_eq_; }
    int cold_solves() const { return cold_solves_; }

private:
    QpResult cold(const Vec& g);
    bool warm(const Vec& g, QpResult& out);
    const Vec& gram_column(Eigen::Index i);
    bool append_factor(Eigen::Index i);
    bool refactor();

    Mat H_, A_eq_, A_in_;
    Vec b_eq_, b_in_;
    Mat L_;      // H = L L'
    Mat V_;      // L^-1 [A_eq; A_in]'
    Vec b_all_;  // [b_eq; b_in]
    std::vector<Vec> gram_;
    std::vector<char> gram_ready_;
    std::vector<Eigen::Index> work_;  // combined row indices, equalities first
    Mat Lw_;                          // Cholesky of the working-set Gram block
    Vec x_;
    bool warm_ = false;
    int cold_solves_ = 0;
};

}  // namespace dampc
