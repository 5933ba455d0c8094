#include "dampc/polytope.hpp"

#include "dampc/lp.hpp"

#include <limits>

namespace dampc {

Polytope::Polytope(Mat H, Vec h, bool compact) : H_(std::move(H)), h_(std::move(h)) {
    if (H_.rows() < 1 || H_.cols() < 1) fail(ErrorKind::DimensionMismatch, "polytope needs r >= 1 and d >= 1");
    if (H_.rows() != h_.size()) fail(ErrorKind::DimensionMismatch, "polytope H and h row counts differ");
    for (Eigen::Index r = 0; r < H_.rows(); ++r)
        if (H_.row(r).cwiseAbs().maxCoeff() == 0.0)
            fail(ErrorKind::DimensionMismatch, "polytope row " + std::to_string(r) + " is all zero");
    if (compact) {
        for (Eigen::Index i = 0; i < dim(); ++i)
            for (double s : {1.0, -1.0}) {
                Vec c = Vec::Zero(dim());
                c(i) = s;
                support_value(*this, c);
            }
    }
}

Polytope Polytope::box(const Vec& lo, const Vec& hi) {
    const Eigen::Index d = lo.size();
    if (hi.size() != d) fail(ErrorKind::DimensionMismatch, "box bounds differ in length");
    Mat H = Mat::Zero(2 * d, d);
    Vec h(2 * d);
    for (Eigen::Index i = 0; i < d; ++i) {
        H(i, i) = 1.0;
        h(i) = hi(i);
        H(d + i, i) = -1.0;
        h(d + i) = -lo(i);
    }
    return Polytope(std::move(H), std::move(h));
}

bool Polytope::contains(const Vec& x, double tol) const { return max_violation(x) <= tol; }

double Polytope::max_violation(const Vec& x) const { return (H_ * x - h_).maxCoeff(); }

std::optional<std::pair<Vec, Vec>> Polytope::as_box() const {
    const Eigen::Index d = dim();
    Vec lo = Vec::Constant(d, -std::numeric_limits<double>::infinity());
    Vec hi = Vec::Constant(d, std::numeric_limits<double>::infinity());
    for (Eigen::Index r = 0; r < rows(); ++r) {
        Eigen::Index idx = -1;
        for (Eigen::Index i = 0; i < d; ++i) {
            if (H_(r, i) == 0.0) continue;
            if (idx >= 0) return std::nullopt;
            idx = i;
        }
        const double a = H_(r, idx);
        if (a > 0) hi(idx) = std::min(hi(idx), h_(r) / a);
        else lo(idx) = std::max(lo(idx), h_(r) / a);
    }
    if (!lo.allFinite() || !hi.allFinite()) return std::nullopt;
    return std::make_pair(lo, hi);
}

double VertexSet::max_dot(const Vec& c) const {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& v : vertices) best = std::max(best, c.dot(v));
    return best;
}

double support_value(const Polytope& P, const Vec& c) {
    if (c.size() != P.dim()) fail(ErrorKind::DimensionMismatch, "support direction has wrong length");
    LpProblem lp;
    lp.cost = -c;
    lp.A_in = P.H();
    lp.b_in = P.h();
    const LpResult r = solve_lp(lp);
    if (r.status == SolveStatus::Infeasible) fail(ErrorKind::Infeasible, "support of an empty polytope");
    if (r.status == SolveStatus::Unbounded) fail(ErrorKind::Unbounded, "polytope unbounded in support direction");
    return -r.objective;
}

VertexSet box_vertices(const Vec& lo, const Vec& hi) {
    const Eigen::Index d = lo.size();
    if (hi.size() != d) fail(ErrorKind::DimensionMismatch, "box bounds differ in length");
    if (d > 12) fail(ErrorKind::DimensionTooLarge, "box_vertices limited to d <= 12");
    for (Eigen::Index i = 0; i < d; ++i)
        if (lo(i) > hi(i)) fail(ErrorKind::DimensionMismatch, "box lower bound exceeds upper bound");
    VertexSet vs;
    const std::size_t count = std::size_t{1} << d;
    vs.vertices.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        Vec v(d);
        for (Eigen::Index i = 0; i < d; ++i) v(i) = ((k >> i) & 1U) ? hi(i) : lo(i);
        vs.vertices.push_back(std::move(v));
    }
    return vs;
}

double box_support(const Vec& lo, const Vec& hi, const Vec& c) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < c.size(); ++i) s += std::max(c(i) * lo(i), c(i) * hi(i));
    return s;
}

}  // namespace dampc
