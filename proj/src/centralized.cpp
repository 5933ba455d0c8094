#include "dampc/controller.hpp"

#include "controller_internal.hpp"

namespace dampc {

using namespace detail;

namespace {

// Every agent's parameter rows lifted to global coordinates and stacked.
Polytope stacked_theta(const StepView& st) {
    const int p = st.cfg.num_params;
    std::vector<Vec> rows;
    std::vector<double> rhs;
    for (int s = 0; s < st.cfg.num_agents(); ++s) {
        const AgentModel& a = st.cfg.agents[at(s)].model;
        const ParamSet& ps = st.sets[at(s)];
        for (Eigen::Index q = 0; q < ps.rows->H.rows(); ++q) {
            Vec r = Vec::Zero(p);
            for (int i = 0; i < a.p(); ++i) r(a.params[at(i)]) = ps.rows->H(q, i);
            rows.push_back(r);
            rhs.push_back(ps.h(q));
        }
    }
    Mat H(static_cast<Eigen::Index>(rows.size()), p);
    Vec h(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        H.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
        h(static_cast<Eigen::Index>(i)) = rhs[i];
    }
    if (H.rows() == 0) return Polytope();
    return Polytope(H, h);
}

Mat blockdiag(const std::vector<const Mat*>& blocks) {
    Eigen::Index r = 0, c = 0;
    for (const Mat* b : blocks) {
        r += b->rows();
        c += b->cols();
    }
    Mat out = Mat::Zero(r, c);
    r = c = 0;
    for (const Mat* b : blocks) {
        out.block(r, c, b->rows(), b->cols()) = *b;
        r += b->rows();
        c += b->cols();
    }
    return out;
}

struct GlobalLayout {
    int N = 0, n = 0, m = 0, S = 0, J = 0, nxT = 0, R = 0, size = 0;
    int z(int l) const { return l * n; }
    int alpha(int l, int s) const { return N * n + l * S + s; }
    int xhat(int l) const { return N * n + N * S + (l - 1) * n; }  // l = 1..N
    int v(int l) const { return N * n + N * S + N * n + l * m; }
    int lambda(int l, int j) const { return N * n + N * S + N * n + N * m + (l * J + j) * nxT * R; }
};

}  // namespace

QpProblem build_centralized(const StepView& st, std::vector<ConstraintFamily>* families) {
    check_view(st);
    const NetworkConfig& cfg = st.cfg;
    const GlobalModel& g = st.model;
    const int S = cfg.num_agents(), N = cfg.horizon;
    for (int s = 0; s < S; ++s) require_nonempty(st.sets[at(s)]);
    std::vector<int> everyone;
    for (int s = 0; s < S; ++s) everyone.push_back(s);

    const Polytope theta = stacked_theta(st);
    GlobalLayout L;
    L.N = N;
    L.n = g.n();
    L.m = g.m();
    L.S = S;
    L.J = combo_count(cfg, st.design, everyone);
    L.R = static_cast<int>(theta.rows());
    std::vector<const Mat*> hx, qs, rs, ps;
    std::vector<int> row_agent, row_off{0};
    for (int s = 0; s < S; ++s) {
        hx.push_back(&st.design.agents[at(s)].Hx);
        qs.push_back(&cfg.agents[at(s)].Q);
        rs.push_back(&cfg.agents[at(s)].R);
        ps.push_back(&cfg.agents[at(s)].P);
        for (Eigen::Index r = 0; r < st.design.agents[at(s)].Hx.rows(); ++r) row_agent.push_back(s);
        row_off.push_back(row_off.back() + static_cast<int>(st.design.agents[at(s)].Hx.rows()));
    }
    const Mat HX = blockdiag(hx), Q = blockdiag(qs), R = blockdiag(rs), P = blockdiag(ps);
    L.nxT = static_cast<int>(HX.rows());
    L.size = L.lambda(N, 0);
    const int nv = L.size;
    const Mat K = assemble_gain(cfg);
    Vec wbar(L.nxT);
    for (int s = 0; s < S; ++s) wbar.segment(row_off[at(s)], row_off[at(s) + 1] - row_off[at(s)]) = st.design.agents[at(s)].wbar;

    QpProblem qp;
    qp.P = Mat::Zero(nv, nv);
    qp.q = Vec::Zero(nv);
    // Stage costs: xhat_0 = x is constant, u_l = K xhat_l + v_l.
    for (int l = 0; l < N; ++l) {
        Mat Su = Mat::Zero(L.m, nv);
        Vec cu = Vec::Zero(L.m);
        if (l == 0) cu = K * st.x;
        else Su.middleCols(L.xhat(l), L.n) = K;
        Su.middleCols(L.v(l), L.m) = Mat::Identity(L.m, L.m);
        qp.P += 2.0 * Su.transpose() * R * Su;
        qp.q += 2.0 * Su.transpose() * R * cu;
        if (l > 0) qp.P.block(L.xhat(l), L.xhat(l), L.n, L.n) += 2.0 * Q;
    }
    qp.P.block(L.xhat(N), L.xhat(N), L.n, L.n) += 2.0 * P;

    RowSet in(nv), eq(nv);
    std::vector<ConstraintFamily> fin, feq;

    in.begin(fin, "tube_init", false);
    for (int s = 0; s < S; ++s) {
        const Mat& Hs = st.design.agents[at(s)].Hx;
        const int xo = g.x_offset[at(s)];
        const Vec rhs = -Hs * own_state(st, s);
        for (Eigen::Index r = 0; r < Hs.rows(); ++r) {
            Vec& row = in.add(rhs(r));
            row.segment(L.z(0) + xo, Hs.cols()) = -Hs.row(r).transpose();
            row(L.alpha(0, s)) = -1.0;
        }
    }
    in.end(fin);

    in.begin(fin, "state_input", false);
    for (int l = 0; l < N; ++l)
        for (int s = 0; s < S; ++s) {
            const AgentModel& a = cfg.agents[at(s)].model;
            const AgentTube& tb = st.design.agents[at(s)];
            for (Eigen::Index r = 0; r < tb.Fcl.rows(); ++r) {
                Vec& row = in.add(1.0);
                for (std::size_t k = 0; k < a.neighbors.size(); ++k) {
                    const int sg = a.neighbors[k];
                    const int nk = a.nbhd_offset[k + 1] - a.nbhd_offset[k];
                    row.segment(L.z(l) + g.x_offset[at(sg)], nk) = tb.Fcl.row(r).segment(a.nbhd_offset[k], nk).transpose();
                    row(L.alpha(l, sg)) = tb.fbar_nb(r, static_cast<Eigen::Index>(k));
                }
                row.segment(L.v(l) + g.u_offset[at(s)], a.m) = a.G.row(r).transpose();
            }
        }
    in.end(fin);

    // H_X M x^j with x^j = z_l + alpha_l,sigma * vertex per agent block.
    std::vector<Mat> HM, HB;
    for (int i = 0; i <= g.p(); ++i) {
        HM.push_back(HX * (g.A[at(i)] + g.B[at(i)] * K));
        HB.push_back(HX * g.B[at(i)]);
    }
    auto tube_terms = [&](Vec& row, const Mat& M, int rr, int l, const std::vector<int>& idx) {
        row.segment(L.z(l), L.n) += M.row(rr).transpose();
        for (int sg = 0; sg < S; ++sg) {
            const int xo = g.x_offset[at(sg)], ns = g.x_offset[at(sg) + 1] - xo;
            row(L.alpha(l, sg)) +=
                M.row(rr).segment(xo, ns).dot(st.design.agents[at(sg)].X0.vertices[at(idx[at(sg)])]);
        }
    };
    auto lam = [&](int l, int j, int rr, int q) { return L.lambda(l, j) + rr * L.R + q; };

    in.begin(fin, "tube_propagation", false);
    for (int l = 0; l < N; ++l)
        for (int j = 0; j < L.J; ++j) {
            const std::vector<int> idx = decode_combo(st.design, everyone, j);
            for (int rr = 0; rr < L.nxT; ++rr) {
                const int s = row_agent[at(rr)];
                Vec& row = in.add(-wbar(rr));
                for (int q = 0; q < L.R; ++q) row(lam(l, j, rr, q)) = theta.h()(q);
                tube_terms(row, HM[0], rr, l, idx);
                row.segment(L.v(l), L.m) += HB[0].row(rr).transpose();
                if (l + 1 < N) {
                    row.segment(L.z(l + 1), L.n) -= HX.row(rr).transpose();
                    row(L.alpha(l + 1, s)) -= 1.0;
                } else {
                    in.rhs_back() += st.design.agents[at(s)].alpha_bar;
                }
            }
        }
    in.end(fin);

    eq.begin(feq, "multiplier_equality", true);
    for (int l = 0; l < N; ++l)
        for (int j = 0; j < L.J; ++j) {
            const std::vector<int> idx = decode_combo(st.design, everyone, j);
            for (int rr = 0; rr < L.nxT; ++rr)
                for (int i = 1; i <= g.p(); ++i) {
                    Vec& row = eq.add(0.0);
                    tube_terms(row, HM[at(i)], rr, l, idx);
                    row.segment(L.v(l), L.m) += HB[at(i)].row(rr).transpose();
                    for (int q = 0; q < L.R; ++q) row(lam(l, j, rr, q)) -= theta.H()(q, i - 1);
                }
        }
    eq.end(feq);

    in.begin(fin, "alpha_nonneg", false);
    for (int l = 0; l < N; ++l)
        for (int s = 0; s < S; ++s) in.add(0.0)(L.alpha(l, s)) = -1.0;
    in.end(fin);

    in.begin(fin, "lambda_nonneg", false);
    for (int i = L.lambda(0, 0); i < nv; ++i) in.add(0.0)(i) = -1.0;
    in.end(fin);

    eq.begin(feq, "certainty_equivalence", true);
    for (int s = 0; s < S; ++s) {
        const AgentModel& a = cfg.agents[at(s)].model;
        const AgentTube& tb = st.design.agents[at(s)];
        const Vec& th = st.theta_hat[at(s)];
        const Mat Bh = a.B_of(th);
        const Mat Ah = a.A_of(th) + Bh * tb.K;
        const Vec x0 = neighborhood_slice(cfg, g, s, st.x);
        const int xo = g.x_offset[at(s)];
        for (int l = 0; l < N; ++l) {
            const Vec c0 = l == 0 ? Vec(Ah * x0) : Vec::Zero(a.n);
            for (int i = 0; i < a.n; ++i) {
                Vec& row = eq.add(c0(i));
                row(L.xhat(l + 1) + xo + i) = 1.0;
                if (l > 0)
                    for (std::size_t k = 0; k < a.neighbors.size(); ++k) {
                        const int nk = a.nbhd_offset[k + 1] - a.nbhd_offset[k];
                        row.segment(L.xhat(l) + g.x_offset[at(a.neighbors[k])], nk) -=
                            Ah.row(i).segment(a.nbhd_offset[k], nk).transpose();
                    }
                row.segment(L.v(l) + g.u_offset[at(s)], a.m) -= Bh.row(i).transpose();
            }
        }
    }
    eq.end(feq);

    in.finish(qp.A_in, qp.b_in);
    eq.finish(qp.A_eq, qp.b_eq);
    if (families) {
        families->clear();
        for (const char* name : {"tube_init", "state_input", "tube_propagation", "multiplier_equality", "alpha_nonneg",
                                 "lambda_nonneg", "certainty_equivalence"})
            for (const auto* list : {&fin, &feq})
                for (const ConstraintFamily& f : *list)
                    if (f.name == name) families->push_back(f);
    }
    return qp;
}

CentralizedResult centralized_solve(const StepView& st) {
    CentralizedResult out;
    const QpProblem qp = build_centralized(st, &out.families);
    const QpResult r = solve_qp(qp);
    out.status = r.status;
    if (r.status != SolveStatus::Optimal) return out;
    const NetworkConfig& cfg = st.cfg;
    const GlobalModel& g = st.model;
    const int S = cfg.num_agents(), N = cfg.horizon;
    const int n = g.n(), m = g.m();
    auto zoff = [&](int l) { return l * n; };
    auto aoff = [&](int l, int s) { return N * n + l * S + s; };
    auto xoff = [&](int l) { return N * n + N * S + (l - 1) * n; };
    auto voff = [&](int l) { return N * n + N * S + N * n + l * m; };
    const Vec& y = r.x;
    out.plan.cost = 0.0;
    for (int s = 0; s < S; ++s) {
        const AgentSpec& sp = cfg.agents[at(s)];
        const AgentModel& a = sp.model;
        const int xo = g.x_offset[at(s)], uo = g.u_offset[at(s)];
        LocalDecision d;
        d.alpha = Vec::Zero(N + 1);
        for (int l = 0; l < N; ++l) {
            d.z.push_back(y.segment(zoff(l) + xo, a.n));
            d.alpha(l) = y(aoff(l, s));
            d.v.push_back(y.segment(voff(l) + uo, a.m));
        }
        d.z.push_back(Vec::Zero(a.n));
        d.alpha(N) = st.design.agents[at(s)].alpha_bar;
        d.xhat.push_back(own_state(st, s));
        for (int l = 1; l <= N; ++l) d.xhat.push_back(y.segment(xoff(l) + xo, a.n));
        out.plan.agents.push_back(std::move(d));
    }
    for (int s = 0; s < S; ++s) {
        const AgentSpec& sp = cfg.agents[at(s)];
        LocalDecision& d = out.plan.agents[at(s)];
        for (int l = 0; l < N; ++l) {
            Vec xl(sp.model.nbhd_dim());
            for (std::size_t k = 0; k < sp.model.neighbors.size(); ++k)
                xl.segment(sp.model.nbhd_offset[k], sp.model.nbhd_offset[k + 1] - sp.model.nbhd_offset[k]) =
                    out.plan.agents[at(sp.model.neighbors[k])].xhat[at(l)];
            d.uhat.push_back(st.design.agents[at(s)].K * xl + d.v[at(l)]);
            d.cost += quad(d.xhat[at(l)], sp.Q) + quad(d.uhat[at(l)], sp.R);
        }
        d.cost += quad(d.xhat[at(N)], sp.P);
        out.plan.cost += d.cost;
    }
    out.cost = out.plan.cost;
    return out;
}

double centralized_violation(const StepView& st, const Plan& plan) {
    check_view(st);
    const NetworkConfig& cfg = st.cfg;
    const int S = cfg.num_agents(), N = cfg.horizon;
    const Polytope theta = stacked_theta(st);
    double worst = 0.0;
    auto upd = [&](double v) { worst = std::max(worst, v); };
    for (int s = 0; s < S; ++s) {
        const AgentModel& a = cfg.agents[at(s)].model;
        const AgentTube& tb = st.design.agents[at(s)];
        const LocalDecision& d = plan.agents[at(s)];
        upd((tb.Hx * (own_state(st, s) - d.z[0])).maxCoeff() - d.alpha(0));
        upd(d.alpha(N) - tb.alpha_bar);
        const int J = combo_count(cfg, st.design, a.neighbors);
        for (int l = 0; l < N; ++l) {
            upd(-d.alpha(l));
            Vec zl(a.nbhd_dim()), al(static_cast<Eigen::Index>(a.neighbors.size()));
            for (std::size_t k = 0; k < a.neighbors.size(); ++k) {
                zl.segment(a.nbhd_offset[k], a.nbhd_offset[k + 1] - a.nbhd_offset[k]) = plan.agents[at(a.neighbors[k])].z[at(l)];
                al(static_cast<Eigen::Index>(k)) = plan.agents[at(a.neighbors[k])].alpha(l);
            }
            upd((tb.Fcl * zl + a.G * d.v[at(l)] + tb.fbar_nb * al).maxCoeff() - 1.0);
            for (int j = 0; j < J; ++j) {
                const std::vector<int> idx = decode_combo(st.design, a.neighbors, j);
                Vec xj = zl;
                for (std::size_t k = 0; k < a.neighbors.size(); ++k)
                    xj.segment(a.nbhd_offset[k], a.nbhd_offset[k + 1] - a.nbhd_offset[k]) +=
                        al(static_cast<Eigen::Index>(k)) * st.design.agents[at(a.neighbors[k])].X0.vertices[at(idx[k])];
                const Vec uj = tb.K * xj + d.v[at(l)];
                const Mat D = a.regressor(xj, uj);
                const Vec nominal = a.A[0] * xj + a.B[0] * uj - d.z[at(l + 1)];
                for (Eigen::Index r = 0; r < tb.Hx.rows(); ++r) {
                    double sup = 0.0;
                    if (a.p() > 0) {
                        Vec c = Vec::Zero(cfg.num_params);
                        const Vec loc = D.transpose() * tb.Hx.row(r).transpose();
                        for (int i = 0; i < a.p(); ++i) c(a.params[at(i)]) += loc(i);
                        sup = support_value(theta, c);
                    }
                    upd(sup + tb.Hx.row(r).dot(nominal) + tb.wbar(r) - d.alpha(l + 1));
                }
            }
        }
    }
    return worst;
}

}  // namespace dampc
