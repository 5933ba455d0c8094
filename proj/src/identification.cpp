#include "dampc/identification.hpp"

#include "dampc/qp.hpp"

#include <cmath>
#include <limits>

namespace dampc {

namespace {

// LP optima are widened by this relative amount so round-off cannot cut off
// the true parameter.
constexpr double kOutwardRounding = 1e-10;

}  // namespace

Vec ParamSet::lower() const {
    Vec lo(dim());
    for (Eigen::Index i = 0; i < dim(); ++i) {
        const int r = rows->lower[static_cast<std::size_t>(i)];
        lo(i) = r < 0 ? -std::numeric_limits<double>::infinity() : -h(r);
    }
    return lo;
}

Vec ParamSet::upper() const {
    Vec hi(dim());
    for (Eigen::Index i = 0; i < dim(); ++i) {
        const int r = rows->upper[static_cast<std::size_t>(i)];
        hi(i) = r < 0 ? std::numeric_limits<double>::infinity() : h(r);
    }
    return hi;
}

bool ParamSet::contains(const Vec& theta) const {
    if (rows->H.rows() == 0) return true;
    return ((rows->H * theta).array() <= h.array()).all();
}

std::vector<ParamSet> initial_param_sets(const RedundantThetaStructure& rt) {
    std::vector<ParamSet> out;
    for (std::size_t s = 0; s < rt.agents.size(); ++s) {
        ParamSet ps;
        ps.agent = static_cast<int>(s);
        ps.rows = std::make_shared<const AgentThetaRows>(rt.agents[s]);
        ps.h = rt.agents[s].h0;
        out.push_back(std::move(ps));
    }
    return out;
}

NonFalsifiedSet non_falsified(const AgentModel& agent, const Vec& x_next, const Vec& x_nbhd, const Vec& u) {
    if (x_next.size() != agent.n || x_nbhd.size() != agent.nbhd_dim() || u.size() != agent.m)
        fail(ErrorKind::DimensionMismatch, "non_falsified argument lengths");
    const Vec r = x_next - agent.A[0] * x_nbhd - agent.B[0] * u;
    const Mat D = agent.regressor(x_nbhd, u);
    NonFalsifiedSet out;
    // r - D theta in [w_lo, w_hi]
    out.H.resize(2 * agent.n, agent.p());
    out.h.resize(2 * agent.n);
    out.H.topRows(agent.n) = -D;
    out.h.head(agent.n) = agent.w_hi - r;
    out.H.bottomRows(agent.n) = D;
    out.h.tail(agent.n) = r - agent.w_lo;
    for (Eigen::Index i = 0; i < out.H.rows(); ++i)
        if ((agent.p() == 0 || out.H.row(i).cwiseAbs().maxCoeff() == 0.0) && out.h(i) < 0.0) out.empty = true;
    return out;
}

ParamSet update_param_set_decentralized(const ParamSet& ps, const NonFalsifiedSet& delta) {
    if (delta.empty) fail(ErrorKind::EmptyIntersection, "agent " + std::to_string(ps.agent) + ": transition unexplained by W");
    ParamSet out = ps;
    const Eigen::Index p = ps.dim();
    if (p == 0 || ps.rows->H.rows() == 0) return out;
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < delta.H.rows(); ++i)
        if (delta.H.row(i).cwiseAbs().maxCoeff() > 0.0 && std::isfinite(delta.h(i))) keep.push_back(i);
    LpProblem lp;
    const auto nk = static_cast<Eigen::Index>(keep.size());
    lp.A_in.resize(ps.rows->H.rows() + nk, p);
    lp.b_in.resize(ps.rows->H.rows() + nk);
    lp.A_in.topRows(ps.rows->H.rows()) = ps.rows->H;
    lp.b_in.head(ps.rows->H.rows()) = ps.h;
    for (Eigen::Index k = 0; k < nk; ++k) {
        lp.A_in.row(ps.rows->H.rows() + k) = delta.H.row(keep[static_cast<std::size_t>(k)]);
        lp.b_in(ps.rows->H.rows() + k) = delta.h(keep[static_cast<std::size_t>(k)]);
    }
    for (Eigen::Index r = 0; r < ps.rows->H.rows(); ++r) {
        lp.cost = -ps.rows->H.row(r).transpose();
        const LpResult res = solve_lp(lp);
        if (res.status != SolveStatus::Optimal)
            fail(ErrorKind::EmptyIntersection,
                 "agent " + std::to_string(ps.agent) + ": parameter set and non-falsified set do not intersect");
        const double opt = -res.objective;
        out.h(r) = std::min(ps.h(r), opt + kOutwardRounding * (1.0 + std::abs(opt)));
    }
    return out;
}

std::vector<ParamSet> exchange_bounds(const std::vector<ParamSet>& all, const NetworkConfig& cfg) {
    std::vector<ParamSet> out = all;
    for (int s = 0; s < cfg.num_agents(); ++s) {
        const AgentModel& a = cfg.agents[static_cast<std::size_t>(s)].model;
        const ParamSet& mine = all[static_cast<std::size_t>(s)];
        for (int i = 0; i < a.p(); ++i) {
            const int g = a.params[static_cast<std::size_t>(i)];
            const int ru = mine.rows->upper[static_cast<std::size_t>(i)];
            const int rl = mine.rows->lower[static_cast<std::size_t>(i)];
            if (ru < 0 || rl < 0)
                fail(ErrorKind::MissingAxisBound,
                     "agent " + std::to_string(s) + " lacks axis bounds for parameter " + std::to_string(g));
            double ub = mine.h(ru), neg_lb = mine.h(rl);
            for (int sg : a.neighbors) {
                if (sg == s) continue;
                const AgentModel& b = cfg.agents[static_cast<std::size_t>(sg)].model;
                const int j = b.local_param(g);
                if (j < 0) continue;
                const ParamSet& theirs = all[static_cast<std::size_t>(sg)];
                const int tu = theirs.rows->upper[static_cast<std::size_t>(j)];
                const int tl = theirs.rows->lower[static_cast<std::size_t>(j)];
                if (tu < 0 || tl < 0)
                    fail(ErrorKind::MissingAxisBound,
                         "agent " + std::to_string(sg) + " lacks axis bounds for parameter " + std::to_string(g));
                ub = std::min(ub, theirs.h(tu));
                neg_lb = std::min(neg_lb, theirs.h(tl));
            }
            auto& h = out[static_cast<std::size_t>(s)].h;
            h(ru) = std::min(h(ru), ub);
            h(rl) = std::min(h(rl), neg_lb);
        }
    }
    return out;
}

Vec own_slice(const GlobalModel&, const std::vector<int>& offsets, int s, const Vec& v) {
    const int a = offsets[static_cast<std::size_t>(s)];
    return v.segment(a, offsets[static_cast<std::size_t>(s + 1)] - a);
}

Vec neighborhood_slice(const NetworkConfig& cfg, const GlobalModel& g, int s, const Vec& x) {
    const AgentModel& a = cfg.agents[static_cast<std::size_t>(s)].model;
    Vec out(a.nbhd_dim());
    for (std::size_t k = 0; k < a.neighbors.size(); ++k) {
        const int sg = a.neighbors[k];
        out.segment(a.nbhd_offset[k], cfg.agents[static_cast<std::size_t>(sg)].model.n) = own_slice(g, g.x_offset, sg, x);
    }
    return out;
}

std::vector<ParamSet> run_identification_step(IdentMode mode, const NetworkConfig& cfg, const GlobalModel& g,
                                              const Transition& tr, const std::vector<ParamSet>& all) {
    std::vector<ParamSet> out;
    out.reserve(all.size());
    for (int s = 0; s < cfg.num_agents(); ++s) {
        const AgentModel& a = cfg.agents[static_cast<std::size_t>(s)].model;
        const NonFalsifiedSet d = non_falsified(a, own_slice(g, g.x_offset, s, tr.x_now),
                                                neighborhood_slice(cfg, g, s, tr.x_prev),
                                                own_slice(g, g.u_offset, s, tr.u_prev));
        out.push_back(update_param_set_decentralized(all[static_cast<std::size_t>(s)], d));
    }
    if (mode == IdentMode::Distributed) out = exchange_bounds(out, cfg);
    return out;
}

double lms_step_size(const NetworkConfig& cfg, const GlobalModel& g, int s) {
    const AgentModel& a = cfg.agents[static_cast<std::size_t>(s)].model;
    if (a.p() == 0) return 0.5;
    // Bounding box of Z in (x, u).
    const int n = g.n(), m = g.m();
    LpProblem lp;
    lp.A_in.resize(g.F.rows(), n + m);
    lp.A_in << g.F, g.G;
    lp.b_in = Vec::Ones(g.F.rows());
    auto extent = [&](int coord, double sign) {
        lp.cost = Vec::Zero(n + m);
        lp.cost(coord) = -sign;
        const LpResult r = solve_lp(lp);
        if (r.status != SolveStatus::Optimal)
            fail(ErrorKind::SchemaError, "LMS step size needs a bounded constraint set Z");
        return r.x(coord);
    };
    const int d = a.nbhd_dim() + a.m;
    Vec lo(d), hi(d);
    for (std::size_t k = 0; k < a.neighbors.size(); ++k) {
        const int sg = a.neighbors[k];
        const int ns = cfg.agents[static_cast<std::size_t>(sg)].model.n;
        for (int i = 0; i < ns; ++i) {
            const int gi = g.x_offset[static_cast<std::size_t>(sg)] + i;
            lo(a.nbhd_offset[k] + i) = extent(gi, -1.0);
            hi(a.nbhd_offset[k] + i) = extent(gi, 1.0);
        }
    }
    for (int i = 0; i < a.m; ++i) {
        const int gi = n + g.u_offset[static_cast<std::size_t>(s)] + i;
        lo(a.nbhd_dim() + i) = extent(gi, -1.0);
        hi(a.nbhd_dim() + i) = extent(gi, 1.0);
    }
    double gbar = 0.0;
    for (const Vec& c : box_vertices(lo, hi).vertices)
        gbar = std::max(gbar, a.regressor(c.head(a.nbhd_dim()), c.tail(a.m)).squaredNorm());
    return 0.5 / (1.0 + gbar);
}

Vec project_onto(const ParamSet& ps, const Vec& theta) {
    if (ps.dim() == 0 || ps.contains(theta)) return theta;
    if (ps.rows->axis_aligned() && ps.rows->H.rows() == 2 * ps.dim()) return theta.cwiseMax(ps.lower()).cwiseMin(ps.upper());
    QpProblem qp;
    qp.P = 2.0 * Mat::Identity(ps.dim(), ps.dim());
    qp.q = -2.0 * theta;
    qp.A_in = ps.rows->H;
    qp.b_in = ps.h;
    const QpResult r = solve_qp(qp);
    if (r.status != SolveStatus::Optimal) fail(ErrorKind::ProjectionInfeasible, "parameter set is empty");
    return r.x;
}

LmsState lms_update(const LmsState& lms, const AgentModel& agent, const Vec& x_next, const Vec& x_nbhd,
                    const Vec& u, const ParamSet& ps) {
    LmsState out = lms;
    if (agent.p() == 0) return out;
    const Vec pred = agent.A_of(lms.theta) * x_nbhd + agent.B_of(lms.theta) * u;
    const Vec err = x_next - pred;
    if (err.cwiseAbs().maxCoeff() == 0.0 && ps.contains(lms.theta)) return out;
    const Mat D = agent.regressor(x_nbhd, u);
    out.theta = project_onto(ps, lms.theta + lms.mu * D.transpose() * err);
    return out;
}

}  // namespace dampc
