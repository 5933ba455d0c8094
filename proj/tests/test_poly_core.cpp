#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "dampc/polytope.hpp"
#include "dampc/qp.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace dampc;

namespace {

Vec vec(std::initializer_list<double> xs) {
    Vec v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v(i++) = x;
    return v;
}

Vec uniform_vec(std::mt19937_64& rng, Eigen::Index n, double lo, double hi) {
    std::uniform_real_distribution<double> U(lo, hi);
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = U(rng);
    return v;
}

Mat uniform_mat(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double lo, double hi) {
    std::uniform_real_distribution<double> U(lo, hi);
    Mat m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = U(rng);
    return m;
}

// Visits every k-subset of {0..m-1} in lexicographic order.
template <class F>
void for_each_subset(int m, int k, F&& f) {
    std::vector<int> idx(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) idx[static_cast<std::size_t>(i)] = i;
    while (true) {
        f(idx);
        int i = k - 1;
        while (i >= 0 && idx[static_cast<std::size_t>(i)] == m - k + i) --i;
        if (i < 0) return;
        ++idx[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < k; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
    }
}

// Best objective over all basic feasible points of {A x <= b}, x in R^n.
double brute_force_lp_min(const Vec& c, const Mat& A, const Vec& b) {
    const int n = static_cast<int>(c.size());
    const int m = static_cast<int>(A.rows());
    double best = INFINITY;
    for_each_subset(m, n, [&](const std::vector<int>& rows) {
        Mat M(n, n);
        Vec r(n);
        for (int i = 0; i < n; ++i) {
            M.row(i) = A.row(rows[static_cast<std::size_t>(i)]);
            r(i) = b(rows[static_cast<std::size_t>(i)]);
        }
        Eigen::FullPivLU<Mat> lu(M);
        if (lu.rank() < n) return;
        const Vec x = lu.solve(r);
        if ((A * x - b).maxCoeff() > 1e-9) return;
        best = std::min(best, c.dot(x));
    });
    return best;
}

// Enumerates active sets of a strictly convex inequality QP, returning the
// point satisfying all KKT conditions.
Vec brute_force_qp(const Mat& P, const Vec& q, const Mat& A, const Vec& b) {
    const int n = static_cast<int>(q.size());
    const int m = static_cast<int>(A.rows());
    for (int k = 0; k <= std::min(n, m); ++k) {
        Vec found;
        bool done = false;
        for_each_subset(m, k, [&](const std::vector<int>& rows) {
            if (done) return;
            Mat K = Mat::Zero(n + k, n + k);
            Vec rhs(n + k);
            K.topLeftCorner(n, n) = P;
            rhs.head(n) = -q;
            for (int i = 0; i < k; ++i) {
                K.block(n + i, 0, 1, n) = A.row(rows[static_cast<std::size_t>(i)]);
                K.block(0, n + i, n, 1) = A.row(rows[static_cast<std::size_t>(i)]).transpose();
                rhs(n + i) = b(rows[static_cast<std::size_t>(i)]);
            }
            Eigen::FullPivLU<Mat> lu(K);
            if (lu.rank() < n + k) return;
            const Vec sol = lu.solve(rhs);
            const Vec x = sol.head(n);
            if ((A * x - b).maxCoeff() > 1e-9) return;
            if (k > 0 && sol.tail(k).minCoeff() < -1e-9) return;
            found = x;
            done = true;
        });
        if (done) return found;
    }
    return Vec();
}

QpProblem random_strict_qp(std::mt19937_64& rng, int n, int m_in, int m_eq) {
    QpProblem p;
    const Mat M = uniform_mat(rng, n, n, -1, 1);
    p.P = M * M.transpose() + 0.5 * Mat::Identity(n, n);
    p.q = uniform_vec(rng, n, -3, 3);
    p.A_in = uniform_mat(rng, m_in, n, -1, 1);
    p.b_in = uniform_vec(rng, m_in, 0.1, 1.0);
    p.A_eq = uniform_mat(rng, m_eq, n, -1, 1);
    p.b_eq = uniform_vec(rng, m_eq, -0.5, 0.5);
    return p;
}

}  // namespace

TEST_CASE("support value of the unit box along e1 is one") {
    const Polytope P = Polytope::box(vec({-1, -1}), vec({1, 1}));
    CHECK(support_value(P, vec({1, 0})) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("disturbance box support along a tube row") {
    const Polytope W = Polytope::box(vec({-0.05, -0.05}), vec({0.05, 0.05}));
    const double oracle = 0.05 * (std::abs(1.0) + std::abs(2.0));
    CHECK(std::abs(support_value(W, vec({1, 2})) - oracle) < 1e-12);
    CHECK(std::abs(box_support(vec({-0.05, -0.05}), vec({0.05, 0.05}), vec({1, 2})) - oracle) < 1e-15);
}

TEST_CASE("support of empty or unbounded sets raises") {
    Mat H(2, 1);
    H << 1, -1;
    const Polytope empty(H, vec({0, -1}));
    CHECK_THROWS_AS(support_value(empty, vec({1})), Error);
    Mat Hh(1, 2);
    Hh << 1, 0;
    const Polytope half(Hh, vec({1}));
    try {
        support_value(half, vec({0, 1}));
        FAIL("expected unbounded");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Unbounded);
    }
    CHECK_THROWS(Polytope(Hh, vec({1}), true));
}

TEST_CASE("polytope rejects zero rows") {
    Mat H(2, 2);
    H << 1, 0, 0, 0;
    CHECK_THROWS(Polytope(H, vec({1, 1})));
}

TEST_CASE("lp: max x on the unit interval") {
    LpProblem lp;
    lp.cost = vec({-1});
    lp.A_in = Mat(2, 1);
    lp.A_in << 1, -1;
    lp.b_in = vec({1, 0});
    const auto r = solve_lp(lp);
    REQUIRE(r.status == SolveStatus::Optimal);
    CHECK(r.x(0) == doctest::Approx(1.0));
    CHECK(-r.objective == doctest::Approx(1.0));
}

TEST_CASE("lp: contradictory bounds are infeasible") {
    LpProblem lp;
    lp.cost = vec({-1});
    lp.A_in = Mat(2, 1);
    lp.A_in << 1, -1;
    lp.b_in = vec({0, -1});
    CHECK(solve_lp(lp).status == SolveStatus::Infeasible);
}

TEST_CASE("lp: unbounded ray") {
    LpProblem lp;
    lp.cost = vec({-1, 0});
    lp.A_in = Mat(1, 2);
    lp.A_in << 0, 1;
    lp.b_in = vec({1});
    CHECK(solve_lp(lp).status == SolveStatus::Unbounded);
}

TEST_CASE("lp: equality rows, including a redundant copy") {
    LpProblem lp;
    lp.cost = vec({1, 1});
    lp.A_eq = Mat(2, 2);
    lp.A_eq << 1, -1, 2, -2;
    lp.b_eq = vec({0.5, 1.0});
    lp.A_in = -Mat::Identity(2, 2);
    lp.b_in = Vec::Zero(2);
    const auto r = solve_lp(lp);
    REQUIRE(r.status == SolveStatus::Optimal);
    CHECK(r.objective == doctest::Approx(0.5));
    CHECK(std::abs(r.objective - r.dual_objective(lp)) < 1e-9);
}

TEST_CASE("lp: random 5-variable problems match vertex enumeration") {
    std::mt19937_64 rng(101);
    int optimal = 0;
    for (int trial = 0; trial < 120; ++trial) {
        const int n = 5, extra = 4;
        LpProblem lp;
        lp.cost = uniform_vec(rng, n, -1, 1);
        Mat A(2 * n + extra, n);
        Vec b(2 * n + extra);
        A.topRows(n) = Mat::Identity(n, n);
        A.middleRows(n, n) = -Mat::Identity(n, n);
        b.head(2 * n) = uniform_vec(rng, 2 * n, 0.5, 2.0);
        A.bottomRows(extra) = uniform_mat(rng, extra, n, -1, 1);
        b.tail(extra) = uniform_vec(rng, extra, -0.3, 1.0);
        lp.A_in = A;
        lp.b_in = b;
        const auto r = solve_lp(lp);
        const double oracle = brute_force_lp_min(lp.cost, A, b);
        if (!std::isfinite(oracle)) {
            CHECK(r.status == SolveStatus::Infeasible);
            continue;
        }
        REQUIRE(r.status == SolveStatus::Optimal);
        ++optimal;
        CHECK(std::abs(r.objective - oracle) <= 1e-7);
        CHECK(lp_residual(lp, r.x) <= tol::feas);
        CHECK(std::abs(r.objective - r.dual_objective(lp)) <= 1e-6);
        CHECK(r.y_in.minCoeff() >= 0.0);
    }
    CHECK(optimal >= 100);
}

TEST_CASE("lp: repeated solves are bit-identical") {
    std::mt19937_64 rng(7);
    LpProblem lp;
    lp.cost = uniform_vec(rng, 4, -1, 1);
    lp.A_in = uniform_mat(rng, 12, 4, -1, 1);
    lp.b_in = uniform_vec(rng, 12, 0.2, 1.0);
    const auto a = solve_lp(lp);
    const auto b = solve_lp(lp);
    REQUIRE(a.status == b.status);
    if (a.status == SolveStatus::Optimal) {
        CHECK(a.x == b.x);
    }
}

TEST_CASE("qp: scalar min x^2 subject to x >= 1") {
    QpProblem p;
    p.P = Mat::Constant(1, 1, 2.0);
    p.q = vec({0});
    p.A_in = Mat::Constant(1, 1, -1.0);
    p.b_in = vec({-1});
    const auto r = solve_qp(p);
    REQUIRE(r.status == SolveStatus::Optimal);
    CHECK(r.x(0) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("qp: projection onto x + y <= 2 from (2,2)") {
    QpProblem p;
    p.P = 2.0 * Mat::Identity(2, 2);
    p.q = vec({-4, -4});
    p.A_in = Mat(1, 2);
    p.A_in << 1, 1;
    p.b_in = vec({2});
    const auto r = solve_qp(p);
    REQUIRE(r.status == SolveStatus::Optimal);
    CHECK(r.x(0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(r.x(1) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("qp: infeasible constraints are reported") {
    QpProblem p;
    p.P = Mat::Identity(1, 1);
    p.q = vec({0});
    p.A_in = Mat(2, 1);
    p.A_in << 1, -1;
    p.b_in = vec({0, -1});
    CHECK(solve_qp(p).status == SolveStatus::Infeasible);
}

TEST_CASE("qp: non-PSD Hessian is rejected") {
    QpProblem p;
    p.P = -Mat::Identity(2, 2);
    p.q = Vec::Zero(2);
    CHECK_THROWS(solve_qp(p));
}

TEST_CASE("qp: random equality-constrained problems match the KKT solve") {
    std::mt19937_64 rng(202);
    for (int trial = 0; trial < 60; ++trial) {
        const int n = 6, me = 3;
        QpProblem p = random_strict_qp(rng, n, 0, me);
        Mat K = Mat::Zero(n + me, n + me);
        K.topLeftCorner(n, n) = p.P;
        K.topRightCorner(n, me) = p.A_eq.transpose();
        K.bottomLeftCorner(me, n) = p.A_eq;
        Vec rhs(n + me);
        rhs << -p.q, p.b_eq;
        const Vec oracle = K.fullPivLu().solve(rhs).head(n);
        const auto r = solve_qp(p);
        REQUIRE(r.status == SolveStatus::Optimal);
        CHECK((r.x - oracle).norm() <= 1e-6);
        CHECK(kkt_residuals(p, r).max() <= tol::kkt);
    }
}

TEST_CASE("qp: random inequality problems match active-set enumeration") {
    std::mt19937_64 rng(303);
    for (int trial = 0; trial < 60; ++trial) {
        QpProblem p = random_strict_qp(rng, 3, 7, 0);
        const Vec oracle = brute_force_qp(p.P, p.q, p.A_in, p.b_in);
        REQUIRE(oracle.size() == 3);
        const auto r = solve_qp(p);
        REQUIRE(r.status == SolveStatus::Optimal);
        CHECK((r.x - oracle).norm() <= 1e-6);
        CHECK(kkt_residuals(p, r).max() <= tol::kkt);
    }
}

TEST_CASE("qp: singular Hessian with LP-like directions still meets the KKT contract") {
    std::mt19937_64 rng(404);
    for (int trial = 0; trial < 20; ++trial) {
        QpProblem p;
        const int n = 5;
        p.P = Mat::Zero(n, n);
        p.P.topLeftCorner(2, 2) = 2.0 * Mat::Identity(2, 2);
        p.q = uniform_vec(rng, n, -1, 1);
        Mat A(2 * n + 3, n);
        Vec b(2 * n + 3);
        A.topRows(n) = Mat::Identity(n, n);
        A.middleRows(n, n) = -Mat::Identity(n, n);
        b.head(2 * n).setOnes();
        A.bottomRows(3) = uniform_mat(rng, 3, n, -1, 1);
        b.tail(3) = uniform_vec(rng, 3, 0.2, 1.0);
        p.A_in = A;
        p.b_in = b;
        const auto r = solve_qp(p);
        REQUIRE(r.status == SolveStatus::Optimal);
        CHECK(kkt_residuals(p, r).max() <= tol::kkt);
    }
}

TEST_CASE("workspace warm solves agree with independent cold solves") {
    std::mt19937_64 rng(505);
    for (int trial = 0; trial < 30; ++trial) {
        QpProblem p = random_strict_qp(rng, 8, 14, 2);
        ConvexQpWorkspace ws(p.P, p.A_eq, p.b_eq, p.A_in, p.b_in);
        Vec g = p.q;
        for (int rep = 0; rep < 8; ++rep) {
            const auto w = ws.solve(g);
            QpProblem pc = p;
            pc.q = g;
            const auto c = solve_qp(pc);
            REQUIRE(w.status == c.status);
            if (c.status == SolveStatus::Optimal) {
                CHECK((w.x - c.x).norm() <= 1e-6);
                CHECK(kkt_residuals(pc, w).max() <= tol::kkt);
            }
            g += uniform_vec(rng, 8, -0.5, 0.5);
        }
        CHECK(ws.cold_solves() >= 1);
    }
}

TEST_CASE("box vertex enumeration") {
    const auto one = box_vertices(vec({0}), vec({1}));
    REQUIRE(one.size() == 2);
    CHECK(one.vertices[0](0) == 0.0);
    CHECK(one.vertices[1](0) == 1.0);

    const auto two = box_vertices(vec({0, 0}), vec({1, 2}));
    REQUIRE(two.size() == 4);
    CHECK(two.vertices[0] == vec({0, 0}));
    CHECK(two.vertices[1] == vec({1, 0}));
    CHECK(two.vertices[2] == vec({0, 2}));
    CHECK(two.vertices[3] == vec({1, 2}));

    CHECK_THROWS(box_vertices(Vec::Zero(13), Vec::Ones(13)));
}

TEST_CASE("spring-constant box at full uncertainty has 16 corners") {
    const Vec nominal = vec({2.4, 3.6, 2.5, 2.7});
    const Vec radius = vec({0.7, 1.0, 1.0, 0.7});
    const auto vs = box_vertices(nominal - radius, nominal + radius);
    REQUIRE(vs.size() == 16);
    auto has = [&](const Vec& v) {
        for (const auto& x : vs.vertices)
            if ((x - v).norm() < 1e-12) return true;
        return false;
    };
    CHECK(has(vec({1.7, 2.6, 1.5, 2.0})));
    CHECK(has(vec({3.1, 4.6, 3.5, 3.4})));
}

TEST_CASE("support values agree with vertex maxima in random directions") {
    std::mt19937_64 rng(606);
    // Regular polygons: vertices are consecutive facet intersections.
    for (int sides : {3, 5, 8}) {
        Mat H(sides, 2);
        for (int i = 0; i < sides; ++i) {
            const double a = 2.0 * std::numbers::pi * i / sides;
            H(i, 0) = std::cos(a);
            H(i, 1) = std::sin(a) * 0.5;
        }
        const Vec h = Vec::Ones(sides);
        const Polytope P(H, h, true);
        VertexSet vs;
        for (int i = 0; i < sides; ++i) {
            Mat M(2, 2);
            M.row(0) = H.row(i);
            M.row(1) = H.row((i + 1) % sides);
            vs.vertices.push_back(M.lu().solve(Vec::Ones(2)));
        }
        for (const auto& v : vs.vertices) CHECK(P.contains(v, tol::vertex));
        for (int k = 0; k < 100; ++k) {
            const Vec c = uniform_vec(rng, 2, -1, 1);
            CHECK(std::abs(support_value(P, c) - vs.max_dot(c)) <= 1e-7);
        }
    }
    // Boxes in higher dimension.
    for (int d = 1; d <= 6; ++d) {
        const Vec lo = uniform_vec(rng, d, -2, -0.1);
        const Vec hi = uniform_vec(rng, d, 0.1, 2);
        const Polytope P = Polytope::box(lo, hi);
        const auto vs = box_vertices(lo, hi);
        for (int k = 0; k < 100; ++k) {
            const Vec c = uniform_vec(rng, d, -1, 1);
            CHECK(std::abs(support_value(P, c) - vs.max_dot(c)) <= 1e-7);
        }
    }
}

TEST_CASE("as_box recognises axis-aligned rows only") {
    const Polytope B = Polytope::box(vec({0, -1}), vec({1, 2}));
    const auto bx = B.as_box();
    REQUIRE(bx.has_value());
    CHECK(bx->first == vec({0, -1}));
    CHECK(bx->second == vec({1, 2}));
    Mat H(3, 2);
    H << 1, 1, -1, 0, 0, -1;
    CHECK_FALSE(Polytope(H, vec({1, 0, 0})).as_box().has_value());
}
