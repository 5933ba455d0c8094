#include "dampc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace dampc {

void QpProblem::check() const {
    const auto n = q.size();
    if (n < 1) fail(ErrorKind::DimensionMismatch, "QP needs at least one variable");
    if (P.rows() != n || P.cols() != n) fail(ErrorKind::DimensionMismatch, "QP quadratic term has wrong shape");
    if (A_in.rows() != b_in.size() || (A_in.rows() > 0 && A_in.cols() != n))
        fail(ErrorKind::DimensionMismatch, "QP inequality block has inconsistent shape");
    if (A_eq.rows() != b_eq.size() || (A_eq.rows() > 0 && A_eq.cols() != n))
        fail(ErrorKind::DimensionMismatch, "QP equality block has inconsistent shape");
    const double scale = 1.0 + P.cwiseAbs().maxCoeff();
    if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
        fail(ErrorKind::DimensionMismatch, "QP quadratic term is not symmetric");
    Mat shifted = P;
    shifted.diagonal().array() += 1e-8;
    if (Eigen::LLT<Mat>(shifted).info() != Eigen::Success)
        fail(ErrorKind::NumericalFailure, "QP quadratic term is not positive semidefinite");
}

double KktResiduals::max() const { return std::max({stationarity, primal, dual, complementarity}); }

KktResiduals kkt_residuals(const QpProblem& p, const QpResult& r) {
    KktResiduals k;
    Vec grad = p.P * r.x + p.q;
    if (p.A_in.rows() > 0) grad += p.A_in.transpose() * r.y_in;
    if (p.A_eq.rows() > 0) grad += p.A_eq.transpose() * r.y_eq;
    k.stationarity = inf_norm(grad);
    if (p.A_in.rows() > 0) {
        const Vec slack = p.b_in - p.A_in * r.x;
        k.primal = std::max(0.0, -slack.minCoeff());
        k.dual = std::max(0.0, -r.y_in.minCoeff());
        k.complementarity = (r.y_in.array() * slack.array()).abs().maxCoeff();
    }
    if (p.A_eq.rows() > 0) k.primal = std::max(k.primal, inf_norm(p.A_eq * r.x - p.b_eq));
    return k;
}

namespace {

constexpr double kViolationTol = 1e-11;

struct DualActiveSetOutput {
    SolveStatus status = SolveStatus::Infeasible;
    Vec x;
    std::vector<Eigen::Index> act;  // equalities at 0..me-1, inequalities at me + row
    std::vector<double> y;          // multiplier per act entry, in the <= / = convention
    int iterations = 0;
};

// Goldfarb-Idnani dual method for min 0.5 x'Gx + g'x, G = L L'. Internally
// constraints are written n'x >= beta; inequality rows use n = -a.
DualActiveSetOutput dual_active_set(const Mat& L, const Vec& g, const Mat& A_eq, const Vec& b_eq,
                                    const Mat& A_in, const Vec& b_in) {
    const Eigen::Index n = g.size();
    const Eigen::Index me = A_eq.rows();
    const Eigen::Index mi = A_in.rows();
    DualActiveSetOutput out;

    Mat J = L.transpose().triangularView<Eigen::Upper>().solve(Mat::Identity(n, n));
    Vec x = -(J * (J.transpose() * g));
    Mat R = Mat::Zero(n, n);
    Eigen::Index q = 0;
    std::vector<Eigen::Index> act;
    std::vector<double> eq_sign;
    Vec u = Vec::Zero(n);
    Vec d(n), z(n), r(n);
    std::vector<char> inactive(static_cast<std::size_t>(mi), 1);
    Vec anorm(mi);
    for (Eigen::Index i = 0; i < mi; ++i) anorm(i) = std::max(A_in.row(i).norm(), 1e-300);

    auto step_directions = [&](const Vec& nv) {
        d.noalias() = J.transpose() * nv;
        z.noalias() = J.rightCols(n - q) * d.tail(n - q);
        if (q > 0) r.head(q) = R.topLeftCorner(q, q).triangularView<Eigen::Upper>().solve(d.head(q));
    };
    auto independent = [&]() { return d.tail(n - q).norm() > 1e-10 * std::max(d.norm(), 1e-300); };
    auto add_to_factor = [&]() {
        for (Eigen::Index j = n - 1; j > q; --j) {
            if (d(j) == 0.0) continue;
            const double h = std::hypot(d(j - 1), d(j));
            const double c = d(j - 1) / h, s = d(j) / h;
            d(j - 1) = h;
            d(j) = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double a = J(i, j - 1), b = J(i, j);
                J(i, j - 1) = c * a + s * b;
                J(i, j) = -s * a + c * b;
            }
        }
        R.col(q).head(q + 1) = d.head(q + 1);
        ++q;
    };
    auto drop_from_factor = [&](Eigen::Index k) {
        act.erase(act.begin() + k);
        eq_sign.erase(eq_sign.begin() + k);
        for (Eigen::Index c = k; c < q - 1; ++c) {
            R.col(c) = R.col(c + 1);
            u(c) = u(c + 1);
        }
        R.col(q - 1).setZero();
        u(q - 1) = 0.0;
        --q;
        for (Eigen::Index j = k; j < q; ++j) {
            const double a = R(j, j), b = R(j + 1, j);
            if (b == 0.0) continue;
            const double h = std::hypot(a, b);
            const double c = a / h, s = b / h;
            for (Eigen::Index col = j; col < q; ++col) {
                const double t1 = R(j, col), t2 = R(j + 1, col);
                R(j, col) = c * t1 + s * t2;
                R(j + 1, col) = -s * t1 + c * t2;
            }
            R(j + 1, j) = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double t1 = J(i, j), t2 = J(i, j + 1);
                J(i, j) = c * t1 + s * t2;
                J(i, j + 1) = -s * t1 + c * t2;
            }
        }
    };

    for (Eigen::Index i = 0; i < me; ++i) {
        Vec nv = A_eq.row(i).transpose();
        double sign = 1.0;
        double s = nv.dot(x) - b_eq(i);
        if (s > 0.0) {
            nv = -nv;
            sign = -1.0;
            s = -s;
        }
        step_directions(nv);
        if (!independent()) {
            if (-s <= tol::feas * (1.0 + std::abs(b_eq(i)))) continue;
            out.status = SolveStatus::Infeasible;
            return out;
        }
        const double t = -s / z.dot(nv);
        x += t * z;
        for (Eigen::Index j = 0; j < q; ++j) u(j) -= t * r(j);
        add_to_factor();
        u(q - 1) = t;
        act.push_back(i);
        eq_sign.push_back(sign);
    }

    const int cap = 10 * static_cast<int>(n + me + mi) + 100;
    int iter = 0;
    while (true) {
        Eigen::Index p = -1;
        double worst = -kViolationTol;
        for (Eigen::Index i = 0; i < mi; ++i) {
            if (!inactive[static_cast<std::size_t>(i)]) continue;
            const double s = (b_in(i) - A_in.row(i).dot(x)) / (anorm(i) * (1.0 + std::abs(b_in(i)) / anorm(i)));
            if (s < worst) {
                worst = s;
                p = i;
            }
        }
        if (p < 0) break;
        const Vec nv = -A_in.row(p).transpose();
        double u_plus = 0.0;
        while (true) {
            if (++iter > cap) fail(ErrorKind::NumericalFailure, "dual active-set iteration cap reached");
            step_directions(nv);
            double t1 = std::numeric_limits<double>::infinity();
            Eigen::Index k = -1;
            for (Eigen::Index j = 0; j < q; ++j) {
                if (act[static_cast<std::size_t>(j)] < me || r(j) <= 0.0) continue;
                const double ratio = u(j) / r(j);
                if (ratio < t1) {
                    t1 = ratio;
                    k = j;
                }
            }
            const double s = b_in(p) - A_in.row(p).dot(x);
            double t2 = std::numeric_limits<double>::infinity();
            if (independent()) t2 = std::max(-s, 0.0) / z.dot(nv);
            if (!std::isfinite(t1) && !std::isfinite(t2)) {
                out.status = SolveStatus::Infeasible;
                out.iterations = iter;
                return out;
            }
            if (!std::isfinite(t2)) {
                for (Eigen::Index j = 0; j < q; ++j) u(j) -= t1 * r(j);
                u_plus += t1;
                u(k) = 0.0;
                inactive[static_cast<std::size_t>(act[static_cast<std::size_t>(k)] - me)] = 1;
                drop_from_factor(k);
                continue;
            }
            const double t = std::min(t1, t2);
            x += t * z;
            for (Eigen::Index j = 0; j < q; ++j) u(j) -= t * r(j);
            u_plus += t;
            if (t2 <= t1) {
                add_to_factor();
                u(q - 1) = u_plus;
                act.push_back(me + p);
                eq_sign.push_back(1.0);
                inactive[static_cast<std::size_t>(p)] = 0;
                break;
            }
            u(k) = 0.0;
            inactive[static_cast<std::size_t>(act[static_cast<std::size_t>(k)] - me)] = 1;
            drop_from_factor(k);
        }
    }

    out.status = SolveStatus::Optimal;
    out.x = std::move(x);
    out.act = act;
    out.y.resize(act.size());
    for (std::size_t j = 0; j < act.size(); ++j) {
        const double uj = u(static_cast<Eigen::Index>(j));
        out.y[j] = act[j] < me ? -eq_sign[j] * uj : std::max(uj, 0.0);
    }
    out.iterations = iter;
    return out;
}

QpResult to_result(const DualActiveSetOutput& o, Eigen::Index me, Eigen::Index mi) {
    QpResult res;
    res.status = o.status;
    res.iterations = o.iterations;
    if (o.status != SolveStatus::Optimal) return res;
    res.x = o.x;
    res.y_eq = Vec::Zero(me);
    res.y_in = Vec::Zero(mi);
    for (std::size_t j = 0; j < o.act.size(); ++j) {
        const Eigen::Index c = o.act[j];
        if (c < me) res.y_eq(c) = o.y[j];
        else {
            res.y_in(c - me) = o.y[j];
            res.active.push_back(c - me);
        }
    }
    std::sort(res.active.begin(), res.active.end());
    return res;
}

double objective_of(const QpProblem& p, const Vec& x) { return 0.5 * x.dot(p.P * x) + p.q.dot(x); }

// One Newton solve of the KKT system on the final working set.
bool polish(const QpProblem& p, const Mat& G, QpResult& res) {
    const Eigen::Index n = p.num_vars();
    const Eigen::Index me = p.A_eq.rows();
    const auto na = static_cast<Eigen::Index>(res.active.size());
    const Eigen::Index k = me + na;
    Mat K = Mat::Zero(n + k, n + k);
    Vec rhs(n + k);
    K.topLeftCorner(n, n) = G;
    rhs.head(n) = -p.q;
    for (Eigen::Index i = 0; i < me; ++i) {
        K.block(n + i, 0, 1, n) = p.A_eq.row(i);
        K.block(0, n + i, n, 1) = p.A_eq.row(i).transpose();
        rhs(n + i) = p.b_eq(i);
    }
    for (Eigen::Index j = 0; j < na; ++j) {
        const Eigen::Index row = res.active[static_cast<std::size_t>(j)];
        K.block(n + me + j, 0, 1, n) = p.A_in.row(row);
        K.block(0, n + me + j, n, 1) = p.A_in.row(row).transpose();
        rhs(n + me + j) = p.b_in(row);
    }
    const Vec sol = Eigen::PartialPivLU<Mat>(K).solve(rhs);
    if (!sol.allFinite()) return false;
    QpResult cand = res;
    cand.x = sol.head(n);
    cand.y_eq = sol.segment(n, me);
    cand.y_in = Vec::Zero(p.A_in.rows());
    for (Eigen::Index j = 0; j < na; ++j) cand.y_in(res.active[static_cast<std::size_t>(j)]) = sol(n + me + j);
    if (kkt_residuals(p, cand).max() < kkt_residuals(p, res).max()) {
        res = std::move(cand);
        return true;
    }
    return false;
}

}  // namespace

QpResult solve_qp(const QpProblem& p) {
    p.check();
    const Eigen::Index n = p.num_vars();
    Mat G = p.P;
    G.diagonal().array() += tol::qp_regularization;
    Eigen::LLT<Mat> llt(G);
    if (llt.info() != Eigen::Success) fail(ErrorKind::NumericalFailure, "regularized Hessian not positive definite");
    const Mat L = llt.matrixL();
    const Mat A_eq = p.A_eq.rows() > 0 ? p.A_eq : Mat(0, n);
    const Mat A_in = p.A_in.rows() > 0 ? p.A_in : Mat(0, n);
    const auto gi = dual_active_set(L, p.q, A_eq, p.b_eq, A_in, p.b_in);
    QpResult res = to_result(gi, A_eq.rows(), A_in.rows());
    if (res.status != SolveStatus::Optimal) return res;
    if (kkt_residuals(p, res).max() > 1e-9) polish(p, G, res);
    res.objective = objective_of(p, res.x);
    const KktResiduals k = kkt_residuals(p, res);
    if (k.max() > tol::kkt) {
        std::ostringstream os;
        os << "QP KKT residuals stat=" << k.stationarity << " primal=" << k.primal << " dual=" << k.dual
           << " comp=" << k.complementarity;
        fail(ErrorKind::NumericalFailure, os.str());
    }
    return res;
}

// ---------------------------------------------------------------------------

ConvexQpWorkspace::ConvexQpWorkspace(Mat H, Mat A_eq, Vec b_eq, Mat A_in, Vec b_in)
    : H_(std::move(H)), A_eq_(std::move(A_eq)), A_in_(std::move(A_in)), b_eq_(std::move(b_eq)),
      b_in_(std::move(b_in)) {
    const Eigen::Index n = H_.rows();
    if (H_.cols() != n) fail(ErrorKind::DimensionMismatch, "workspace Hessian not square");
    if (A_eq_.rows() == 0) A_eq_.resize(0, n);
    if (A_in_.rows() == 0) A_in_.resize(0, n);
    if (A_eq_.cols() != n || A_in_.cols() != n || A_eq_.rows() != b_eq_.size() || A_in_.rows() != b_in_.size())
        fail(ErrorKind::DimensionMismatch, "workspace constraint blocks inconsistent");
    Eigen::LLT<Mat> llt(H_);
    if (llt.info() != Eigen::Success) fail(ErrorKind::NumericalFailure, "workspace Hessian not positive definite");
    L_ = llt.matrixL();
    const Eigen::Index me = A_eq_.rows(), mi = A_in_.rows();
    Mat At(n, me + mi);
    At.leftCols(me) = A_eq_.transpose();
    At.rightCols(mi) = A_in_.transpose();
    V_ = L_.triangularView<Eigen::Lower>().solve(At);
    b_all_.resize(me + mi);
    b_all_ << b_eq_, b_in_;
    gram_.resize(static_cast<std::size_t>(me + mi));
    gram_ready_.assign(static_cast<std::size_t>(me + mi), 0);
    Lw_ = Mat::Zero(me + mi, me + mi);
}

const Vec& ConvexQpWorkspace::gram_column(Eigen::Index i) {
    auto idx = static_cast<std::size_t>(i);
    if (!gram_ready_[idx]) {
        gram_[idx] = V_.transpose() * V_.col(i);
        gram_ready_[idx] = 1;
    }
    return gram_[idx];
}

bool ConvexQpWorkspace::append_factor(Eigen::Index i) {
    const auto k = static_cast<Eigen::Index>(work_.size());
    const Vec& col = gram_column(i);
    Vec s(k);
    for (Eigen::Index j = 0; j < k; ++j) s(j) = col(work_[static_cast<std::size_t>(j)]);
    Vec l = k > 0 ? Vec(Lw_.topLeftCorner(k, k).triangularView<Eigen::Lower>().solve(s)) : Vec(0);
    const double diag2 = col(i) - l.squaredNorm();
    if (!(diag2 > 1e-12 * col(i))) return false;
    Lw_.block(k, 0, 1, k) = l.transpose();
    Lw_(k, k) = std::sqrt(diag2);
    work_.push_back(i);
    return true;
}

bool ConvexQpWorkspace::refactor() {
    std::vector<Eigen::Index> w;
    w.swap(work_);
    for (Eigen::Index i : w)
        if (!append_factor(i)) return false;
    return true;
}

QpResult ConvexQpWorkspace::cold(const Vec& g) {
    ++cold_solves_;
    const auto gi = dual_active_set(L_, g, A_eq_, b_eq_, A_in_, b_in_);
    QpResult res = to_result(gi, A_eq_.rows(), A_in_.rows());
    warm_ = false;
    if (res.status != SolveStatus::Optimal) return res;
    work_.clear();
    bool ok = true;
    for (Eigen::Index c : gi.act) ok = ok && append_factor(c);
    x_ = res.x;
    warm_ = ok;
    res.objective = 0.5 * res.x.dot(H_ * res.x) + g.dot(res.x);
    return res;
}

bool ConvexQpWorkspace::warm(const Vec& g, QpResult& out) {
    const Eigen::Index me = A_eq_.rows(), mi = A_in_.rows();
    const Vec gh = L_.triangularView<Eigen::Lower>().solve(g);
    std::vector<char> in_work(static_cast<std::size_t>(me + mi), 0);
    for (Eigen::Index c : work_) in_work[static_cast<std::size_t>(c)] = 1;
    Vec x = x_;
    const int cap = 4 * static_cast<int>(mi + me) + 50;
    for (int iter = 0; iter < cap; ++iter) {
        const auto k = static_cast<Eigen::Index>(work_.size());
        Vec lam(k), xw;
        {
            Vec rhs(k);
            for (Eigen::Index j = 0; j < k; ++j) {
                const Eigen::Index c = work_[static_cast<std::size_t>(j)];
                rhs(j) = -(V_.col(c).dot(gh) + b_all_(c));
            }
            auto Lk = Lw_.topLeftCorner(k, k).triangularView<Eigen::Lower>();
            lam = Lk.transpose().solve(Lk.solve(rhs));
            Vec t = gh;
            for (Eigen::Index j = 0; j < k; ++j) t += lam(j) * V_.col(work_[static_cast<std::size_t>(j)]);
            xw = -L_.transpose().triangularView<Eigen::Upper>().solve(t);
        }
        const Vec p = xw - x;
        if (inf_norm(p) <= 1e-11 * (1.0 + inf_norm(x))) {
            x = xw;
            Eigen::Index worst = -1;
            double most = -1e-10 * (1.0 + inf_norm(lam));
            for (Eigen::Index j = 0; j < k; ++j) {
                if (work_[static_cast<std::size_t>(j)] < me) continue;
                if (lam(j) < most) {
                    most = lam(j);
                    worst = j;
                }
            }
            if (worst < 0) {
                out.status = SolveStatus::Optimal;
                out.x = x;
                out.y_eq = Vec::Zero(me);
                out.y_in = Vec::Zero(mi);
                out.active.clear();
                for (Eigen::Index j = 0; j < k; ++j) {
                    const Eigen::Index c = work_[static_cast<std::size_t>(j)];
                    if (c < me) out.y_eq(c) = lam(j);
                    else {
                        out.y_in(c - me) = std::max(lam(j), 0.0);
                        out.active.push_back(c - me);
                    }
                }
                std::sort(out.active.begin(), out.active.end());
                out.iterations = iter;
                x_ = x;
                return true;
            }
            in_work[static_cast<std::size_t>(work_[static_cast<std::size_t>(worst)])] = 0;
            work_.erase(work_.begin() + worst);
            if (!refactor()) return false;
            continue;
        }
        const Vec Ap = A_in_ * p;
        const Vec slack = b_in_ - A_in_ * x;
        double t = 1.0;
        Eigen::Index block = -1;
        for (Eigen::Index i = 0; i < mi; ++i) {
            if (in_work[static_cast<std::size_t>(me + i)] || Ap(i) <= 1e-14 * (1.0 + inf_norm(p))) continue;
            const double ti = std::max(slack(i), 0.0) / Ap(i);
            if (ti < t) {
                t = ti;
                block = i;
            }
        }
        x += t * p;
        if (block >= 0) {
            if (!append_factor(me + block)) return false;
            in_work[static_cast<std::size_t>(me + block)] = 1;
        }
    }
    return false;
}

QpResult ConvexQpWorkspace::solve(const Vec& g) {
    if (g.size() != H_.rows()) fail(ErrorKind::DimensionMismatch, "workspace linear term has wrong length");
    if (warm_) {
        QpResult res;
        if (warm(g, res)) {
            res.objective = 0.5 * res.x.dot(H_ * res.x) + g.dot(res.x);
            return res;
        }
        // Dependent working set or iteration cap: restart from the dual method.
    }
    return cold(g);
}

}  // namespace dampc
