#include "dampc/lp.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace dampc {

const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::Optimal: return "Optimal";
        case SolveStatus::Infeasible: return "Infeasible";
        case SolveStatus::Unbounded: return "Unbounded";
    }
    return "Unknown";
}

void LpProblem::check() const {
    const auto n = cost.size();
    if (n < 1) fail(ErrorKind::DimensionMismatch, "LP needs at least one variable");
    if (A_in.rows() != b_in.size() || (A_in.rows() > 0 && A_in.cols() != n))
        fail(ErrorKind::DimensionMismatch, "LP inequality block has inconsistent shape");
    if (A_eq.rows() != b_eq.size() || (A_eq.rows() > 0 && A_eq.cols() != n))
        fail(ErrorKind::DimensionMismatch, "LP equality block has inconsistent shape");
}

double LpResult::dual_objective(const LpProblem& p) const {
    double d = 0.0;
    if (p.b_in.size() > 0) d -= p.b_in.dot(y_in);
    if (p.b_eq.size() > 0) d -= p.b_eq.dot(y_eq);
    return d;
}

double lp_residual(const LpProblem& p, const Vec& x) {
    double r = 0.0;
    if (p.A_in.rows() > 0) r = std::max(r, (p.A_in * x - p.b_in).maxCoeff());
    if (p.A_eq.rows() > 0) r = std::max(r, inf_norm(p.A_eq * x - p.b_eq));
    return std::max(r, 0.0);
}

namespace {

constexpr double kPivotTol = 1e-11;
constexpr int kDegenerateSwitch = 50;

struct Tableau {
    // rows 0..m-1 constraints, row m objective (reduced costs, rhs = -objective)
    Mat T;
    std::vector<Eigen::Index> basis;
    Eigen::Index m = 0, cols = 0;

    double& rhs(Eigen::Index r) { return T(r, cols); }

    void pivot(Eigen::Index r, Eigen::Index c) {
        const double piv = T(r, c);
        T.row(r) /= piv;
        for (Eigen::Index i = 0; i <= m; ++i) {
            if (i == r) continue;
            const double f = T(i, c);
            if (f != 0.0) T.row(i) -= f * T.row(r);
        }
        T(r, c) = 1.0;
        basis[static_cast<std::size_t>(r)] = c;
    }

    void set_objective(const Vec& cost) {
        T.row(m).setZero();
        T.row(m).head(cost.size()) = cost.transpose();
        for (Eigen::Index r = 0; r < m; ++r) {
            const double cb = T(m, basis[static_cast<std::size_t>(r)]);
            if (cb != 0.0) T.row(m) -= cb * T.row(r);
        }
    }

    void remove_row(Eigen::Index r) {
        Mat next(m, cols + 1);
        Eigen::Index k = 0;
        for (Eigen::Index i = 0; i <= m; ++i)
            if (i != r) next.row(k++) = T.row(i);
        T = std::move(next);
        basis.erase(basis.begin() + r);
        --m;
    }
};

enum class PhaseOutcome { Optimal, Unbounded };

// Runs the primal simplex on the tableau, restricted to columns < allowed.
PhaseOutcome run_phase(Tableau& tab, Eigen::Index allowed, int& iterations, int cap) {
    int degenerate = 0;
    const double scale = 1.0 + tab.T.row(tab.m).head(allowed).cwiseAbs().maxCoeff();
    const double dtol = 1e-11 * scale;
    while (true) {
        if (iterations >= cap) fail(ErrorKind::NumericalFailure, "simplex iteration cap reached");
        Eigen::Index enter = -1;
        if (degenerate < kDegenerateSwitch) {
            double best = -dtol;
            for (Eigen::Index j = 0; j < allowed; ++j)
                if (tab.T(tab.m, j) < best) {
                    best = tab.T(tab.m, j);
                    enter = j;
                }
        } else {
            for (Eigen::Index j = 0; j < allowed; ++j)
                if (tab.T(tab.m, j) < -dtol) {
                    enter = j;
                    break;
                }
        }
        if (enter < 0) return PhaseOutcome::Optimal;

        Eigen::Index leave = -1;
        double best_ratio = std::numeric_limits<double>::infinity();
        for (Eigen::Index r = 0; r < tab.m; ++r) {
            const double a = tab.T(r, enter);
            if (a <= kPivotTol) continue;
            const double ratio = std::max(tab.rhs(r), 0.0) / a;
            if (leave < 0) {
                best_ratio = ratio;
                leave = r;
                continue;
            }
            const double slack = 1e-14 * (1.0 + best_ratio);
            const bool better = ratio < best_ratio - slack;
            const bool tie = !better && ratio <= best_ratio + slack;
            if (better ||
                (tie && tab.basis[static_cast<std::size_t>(r)] < tab.basis[static_cast<std::size_t>(leave)])) {
                best_ratio = ratio;
                leave = r;
            }
        }
        if (leave < 0) return PhaseOutcome::Unbounded;
        degenerate = best_ratio <= 1e-14 ? degenerate + 1 : 0;
        tab.pivot(leave, enter);
        ++iterations;
    }
}

}  // namespace

LpResult solve_lp(const LpProblem& p) {
    p.check();
    const Eigen::Index n = p.num_vars();
    const Eigen::Index mi = p.A_in.rows();
    const Eigen::Index me = p.A_eq.rows();
    const Eigen::Index m = mi + me;

    // Standard form columns: x+ (n), x- (n), slacks (mi), artificials.
    Mat A(m, 2 * n + mi);
    A.setZero();
    Vec b(m);
    Vec sign = Vec::Ones(m);
    for (Eigen::Index r = 0; r < mi; ++r) {
        A.block(r, 0, 1, n) = p.A_in.row(r);
        A.block(r, n, 1, n) = -p.A_in.row(r);
        A(r, 2 * n + r) = 1.0;
        b(r) = p.b_in(r);
    }
    for (Eigen::Index r = 0; r < me; ++r) {
        A.block(mi + r, 0, 1, n) = p.A_eq.row(r);
        A.block(mi + r, n, 1, n) = -p.A_eq.row(r);
        b(mi + r) = p.b_eq(r);
    }
    for (Eigen::Index r = 0; r < m; ++r)
        if (b(r) < 0.0) {
            sign(r) = -1.0;
            A.row(r) *= -1.0;
            b(r) = -b(r);
        }

    const Eigen::Index ns = 2 * n + mi;
    std::vector<Eigen::Index> art_rows;
    for (Eigen::Index r = 0; r < m; ++r)
        if (r >= mi || sign(r) < 0.0) art_rows.push_back(r);
    const auto na = static_cast<Eigen::Index>(art_rows.size());

    Tableau tab;
    tab.m = m;
    tab.cols = ns + na;
    tab.T = Mat::Zero(m + 1, tab.cols + 1);
    tab.T.topLeftCorner(m, ns) = A;
    tab.T.block(0, tab.cols, m, 1) = b;
    tab.basis.assign(static_cast<std::size_t>(m), -1);
    for (Eigen::Index r = 0; r < mi; ++r)
        if (sign(r) > 0.0) tab.basis[static_cast<std::size_t>(r)] = 2 * n + r;
    for (Eigen::Index a = 0; a < na; ++a) {
        const Eigen::Index r = art_rows[static_cast<std::size_t>(a)];
        tab.T(r, ns + a) = 1.0;
        tab.basis[static_cast<std::size_t>(r)] = ns + a;
    }
    // Row identity for the surviving rows, needed to map duals back.
    std::vector<Eigen::Index> row_id(static_cast<std::size_t>(m));
    for (Eigen::Index r = 0; r < m; ++r) row_id[static_cast<std::size_t>(r)] = r;

    LpResult res;
    const int cap = 50 * static_cast<int>(m + tab.cols) + 1000;
    const double bscale = 1.0 + (m > 0 ? b.cwiseAbs().maxCoeff() : 0.0);

    if (na > 0) {
        Vec c1 = Vec::Zero(tab.cols);
        c1.tail(na).setOnes();
        tab.set_objective(c1);
        run_phase(tab, tab.cols, res.iterations, cap);
        const double infeas = -tab.T(tab.m, tab.cols);
        if (infeas > 1e-9 * bscale) {
            res.status = SolveStatus::Infeasible;
            return res;
        }
        // Drive remaining artificials out of the basis; drop redundant rows.
        for (Eigen::Index r = tab.m - 1; r >= 0; --r) {
            if (tab.basis[static_cast<std::size_t>(r)] < ns) continue;
            Eigen::Index col = -1;
            double best = 1e-9;
            for (Eigen::Index j = 0; j < ns; ++j)
                if (std::abs(tab.T(r, j)) > best) {
                    best = std::abs(tab.T(r, j));
                    col = j;
                }
            if (col >= 0) {
                tab.pivot(r, col);
            } else {
                tab.remove_row(r);
                row_id.erase(row_id.begin() + r);
            }
        }
    }

    Vec c2 = Vec::Zero(tab.cols);
    c2.head(n) = p.cost;
    c2.segment(n, n) = -p.cost;
    for (Eigen::Index j = ns; j < tab.cols; ++j) tab.T.col(j).setZero();
    tab.set_objective(c2);
    if (run_phase(tab, ns, res.iterations, cap) == PhaseOutcome::Unbounded) {
        res.status = SolveStatus::Unbounded;
        return res;
    }

    // Recompute the basic solution and duals from the original data.
    const Eigen::Index mr = tab.m;
    Mat Bm(mr, mr);
    Vec br(mr), cb(mr);
    for (Eigen::Index r = 0; r < mr; ++r) {
        br(r) = b(row_id[static_cast<std::size_t>(r)]);
        const Eigen::Index col = tab.basis[static_cast<std::size_t>(r)];
        cb(r) = c2(col);
        for (Eigen::Index i = 0; i < mr; ++i) Bm(i, r) = A(row_id[static_cast<std::size_t>(i)], col);
    }
    Vec xi = Vec::Zero(ns);
    Vec yr = Vec::Zero(mr);
    if (mr > 0) {
        Eigen::PartialPivLU<Mat> lu(Bm);
        const Vec xb = lu.solve(br);
        for (Eigen::Index r = 0; r < mr; ++r) xi(tab.basis[static_cast<std::size_t>(r)]) = std::max(xb(r), 0.0);
        yr = lu.transpose().solve(cb);
    }
    res.x = xi.head(n) - xi.segment(n, n);
    res.objective = p.cost.dot(res.x);
    Vec y = Vec::Zero(m);
    for (Eigen::Index r = 0; r < mr; ++r) y(row_id[static_cast<std::size_t>(r)]) = yr(r);
    res.y_in = Vec(mi);
    res.y_eq = Vec(me);
    for (Eigen::Index r = 0; r < mi; ++r) res.y_in(r) = std::max(-sign(r) * y(r), 0.0);
    for (Eigen::Index r = 0; r < me; ++r) res.y_eq(r) = -sign(mi + r) * y(mi + r);
    res.status = SolveStatus::Optimal;

    const double resid = lp_residual(p, res.x);
    if (resid > tol::report) {
        std::ostringstream os;
        os << "simplex basis inaccurate, residual " << resid;
        fail(ErrorKind::NumericalFailure, os.str());
    }
    return res;
}

}  // namespace dampc
