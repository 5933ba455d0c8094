#include "dampc/controller.hpp"

#include "controller_internal.hpp"

namespace dampc {

using namespace detail;

namespace {

Vec gather_z(const NetworkConfig& cfg, const Plan& plan, int s, int l) {
    const AgentModel& a = cfg.agents[at(s)].model;
    Vec out(a.nbhd_dim());
    for (std::size_t k = 0; k < a.neighbors.size(); ++k)
        out.segment(a.nbhd_offset[k], a.nbhd_offset[k + 1] - a.nbhd_offset[k]) = plan.agents[at(a.neighbors[k])].z[at(l)];
    return out;
}

Vec gather_alpha(const NetworkConfig& cfg, const Plan& plan, int s, int l) {
    const AgentModel& a = cfg.agents[at(s)].model;
    Vec out(static_cast<Eigen::Index>(a.neighbors.size()));
    for (std::size_t k = 0; k < a.neighbors.size(); ++k)
        out(static_cast<Eigen::Index>(k)) = plan.agents[at(a.neighbors[k])].alpha(l);
    return out;
}

Vec gather_xhat(const NetworkConfig& cfg, const Plan& plan, int s, int l) {
    const AgentModel& a = cfg.agents[at(s)].model;
    Vec out(a.nbhd_dim());
    for (std::size_t k = 0; k < a.neighbors.size(); ++k)
        out.segment(a.nbhd_offset[k], a.nbhd_offset[k + 1] - a.nbhd_offset[k]) =
            plan.agents[at(a.neighbors[k])].xhat[at(l)];
    return out;
}

void note(FeasibilityReport& rep, double excess, const std::string& where) {
    if (excess > rep.residual) {
        rep.residual = excess;
        rep.worst = where;
    }
}

std::string where(int s, const char* family, int l) {
    return "agent " + std::to_string(s) + " " + family + " l=" + std::to_string(l);
}

}  // namespace

Plan shifted_plan(const Plan& plan) {
    Plan out = plan;
    for (LocalDecision& d : out.agents) {
        const std::size_t N = d.v.size();
        for (std::size_t l = 0; l < N; ++l) d.z[l] = d.z[l + 1];
        d.z[N].setZero();
        for (std::size_t l = 0; l + 1 < N; ++l) d.v[l] = d.v[l + 1];
        d.v[N - 1].setZero();
        d.lambda.clear();
    }
    return out;
}

CompletedPlan complete_tube(const StepView& st, const Plan& plan) {
    check_view(st);
    const NetworkConfig& cfg = st.cfg;
    const int S = cfg.num_agents(), N = cfg.horizon;
    if (static_cast<int>(plan.agents.size()) != S) fail(ErrorKind::DesignMismatch, "plan does not match the network");
    std::vector<AgentStep> steps;
    for (int s = 0; s < S; ++s) steps.push_back(prepare(st, s, true));

    CompletedPlan out;
    out.plan = plan;
    Plan& p = out.plan;
    FeasibilityReport& rep = out.report;
    for (int s = 0; s < S; ++s) {
        LocalDecision& d = p.agents[at(s)];
        if (static_cast<int>(d.z.size()) != N + 1 || static_cast<int>(d.v.size()) != N)
            fail(ErrorKind::DesignMismatch, "agent " + std::to_string(s) + ": plan horizon mismatch");
        d.z[at(N)].setZero();
        d.alpha = Vec::Zero(N + 1);
        d.alpha(0) = std::max(0.0, (steps[at(s)].tube->Hx * (own_state(st, s) - d.z[0])).maxCoeff());
    }
    for (int l = 0; l < N; ++l) {
        for (int s = 0; s < S; ++s) {
            const AgentStep& as = steps[at(s)];
            const AgentTube& tb = *as.tube;
            const Vec zl = gather_z(cfg, p, s, l);
            const Vec al = gather_alpha(cfg, p, s, l);
            const Vec& vl = p.agents[at(s)].v[at(l)];
            const Vec zi = zl;
            const Vec zn = tb.Hx * p.agents[at(s)].z[at(l + 1)];
            double need = 0.0;
            for (std::size_t vi = 0; vi < as.thetas.size(); ++vi) {
                const Vec val = tb.Hx * (as.Acl[vi] * zi + as.Bv[vi] * vl) + as.c[vi] * al - zn + tb.wbar;
                need = std::max(need, val.maxCoeff());
            }
            p.agents[at(s)].alpha(l + 1) = need;
            const Vec zrow = tb.Fcl * zl + as.a->G * vl + tb.fbar_nb * al - Vec::Ones(tb.Fcl.rows());
            note(rep, zrow.maxCoeff(), where(s, "state_input", l));
        }
    }
    for (int s = 0; s < S; ++s)
        note(rep, p.agents[at(s)].alpha(N) - steps[at(s)].tube->alpha_bar, where(s, "terminal", N));

    // Certainty-equivalence trajectory.
    for (int s = 0; s < S; ++s) {
        LocalDecision& d = p.agents[at(s)];
        d.xhat.assign(at(N + 1), Vec());
        d.uhat.assign(at(N), Vec());
        d.xhat[0] = own_state(st, s);
        d.lambda.clear();
    }
    for (int l = 0; l < N; ++l) {
        std::vector<Vec> next(at(S));
        for (int s = 0; s < S; ++s) {
            const AgentStep& as = steps[at(s)];
            const Vec& th = st.theta_hat[at(s)];
            const Vec xl = gather_xhat(cfg, p, s, l);
            LocalDecision& d = p.agents[at(s)];
            d.uhat[at(l)] = as.tube->K * xl + d.v[at(l)];
            next[at(s)] = as.a->A_of(th) * xl + as.a->B_of(th) * d.uhat[at(l)];
        }
        for (int s = 0; s < S; ++s) p.agents[at(s)].xhat[at(l + 1)] = next[at(s)];
    }
    p.cost = 0.0;
    for (int s = 0; s < S; ++s) {
        const AgentSpec& sp = *steps[at(s)].spec;
        LocalDecision& d = p.agents[at(s)];
        d.cost = quad(d.xhat[at(N)], sp.P);
        for (int l = 0; l < N; ++l) d.cost += quad(d.xhat[at(l)], sp.Q) + quad(d.uhat[at(l)], sp.R);
        p.cost += d.cost;
    }
    return out;
}

Vec extract_control(const StepView& st, const Plan& plan, int s) {
    const AgentTube& tb = st.design.agents[at(s)];
    return tb.K * neighborhood_slice(st.cfg, st.model, s, st.x) + plan.agents[at(s)].v[0];
}

Vec extract_global_control(const StepView& st, const Plan& plan) {
    Vec u(st.model.m());
    for (int s = 0; s < st.cfg.num_agents(); ++s) {
        const int a = st.model.u_offset[at(s)];
        u.segment(a, st.model.u_offset[at(s) + 1] - a) = extract_control(st, plan, s);
    }
    return u;
}

TubeCheck verify_tube(const StepView& st, const Plan& plan, double tolerance) {
    check_view(st);
    const NetworkConfig& cfg = st.cfg;
    const int S = cfg.num_agents(), N = cfg.horizon;
    TubeCheck out;
    out.worst_margin = kInf;
    auto record = [&](double margin, int s, int l) {
        ++out.checks;
        if (margin < out.worst_margin) {
            out.worst_margin = margin;
            out.worst_agent = s;
            out.worst_step = l;
        }
        if (margin < -tolerance) ++out.violations;
    };
    for (int s = 0; s < S; ++s) {
        const AgentSpec& sp = cfg.agents[at(s)];
        const AgentModel& a = sp.model;
        const AgentTube& tb = st.design.agents[at(s)];
        const LocalDecision& d = plan.agents[at(s)];
        const std::vector<Vec> thetas = theta_vertices(st.sets[at(s)]);
        const std::vector<Vec> ws = box_vertices(a.w_lo, a.w_hi).vertices;
        std::vector<Mat> As, Bs;
        for (const Vec& th : thetas) {
            As.push_back(a.A_of(th));
            Bs.push_back(a.B_of(th));
        }
        const Vec m0 = d.alpha(0) * Vec::Ones(tb.Hx.rows()) - tb.Hx * (own_state(st, s) - d.z[0]);
        record(m0.minCoeff(), s, 0);
        const int J = combo_count(cfg, st.design, a.neighbors);
        for (int l = 0; l < N; ++l) {
            const Vec zl = gather_z(cfg, plan, s, l);
            const Vec al = gather_alpha(cfg, plan, s, l);
            for (int j = 0; j < J; ++j) {
                const std::vector<int> idx = decode_combo(st.design, a.neighbors, j);
                Vec xj = zl;
                for (std::size_t k = 0; k < a.neighbors.size(); ++k)
                    xj.segment(a.nbhd_offset[k], a.nbhd_offset[k + 1] - a.nbhd_offset[k]) +=
                        al(static_cast<Eigen::Index>(k)) * st.design.agents[at(a.neighbors[k])].X0.vertices[at(idx[k])];
                const Vec uj = tb.K * xj + d.v[at(l)];
                record((Vec::Ones(a.F.rows()) - a.F * xj - a.G * uj).minCoeff(), s, l);
                for (std::size_t t = 0; t < thetas.size(); ++t) {
                    const Vec xp = As[t] * xj + Bs[t] * uj - d.z[at(l + 1)];
                    for (const Vec& w : ws)
                        record((d.alpha(l + 1) * Vec::Ones(tb.Hx.rows()) - tb.Hx * (xp + w)).minCoeff(), s, l);
                }
            }
        }
        record(tb.alpha_bar - d.alpha(N), s, N);
    }
    return out;
}

}  // namespace dampc
