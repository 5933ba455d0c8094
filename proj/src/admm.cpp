#include "dampc/controller.hpp"

#include "controller_internal.hpp"

namespace dampc {

using namespace detail;

namespace {

// Curvature on private copies, which carry no cost of their own.
constexpr double kPrivateRegularization = 1e-7;

// Blocks of one shared segment moved one step earlier; the last entries of
// z, alpha and xhat take the given tail values.
Vec shift_segment(const Vec& seg, int n, int N, const Vec& z_tail, double alpha_tail, const Vec& xhat_tail) {
    Vec out = seg;
    const int za = 0, aa = N * n, xa = N * n + N;
    for (int l = 0; l + 1 < N; ++l) out.segment(za + l * n, n) = seg.segment(za + (l + 1) * n, n);
    out.segment(za + (N - 1) * n, n) = z_tail;
    for (int l = 0; l + 1 < N; ++l) out(aa + l) = seg(aa + l + 1);
    out(aa + N - 1) = alpha_tail;
    // xhat_1..xhat_{N-1}
    for (int l = 1; l + 1 < N; ++l) out.segment(xa + (l - 1) * n, n) = seg.segment(xa + l * n, n);
    if (N > 1) out.segment(xa + (N - 2) * n, n) = xhat_tail;
    return out;
}

}  // namespace

std::vector<int> consensus_offsets(const NetworkConfig& cfg) {
    std::vector<int> off{0};
    for (const AgentSpec& a : cfg.agents) off.push_back(off.back() + shared_segment_size(a.model.n, cfg.horizon));
    return off;
}

Vec pack_consensus(const NetworkConfig& cfg, const Plan& plan) {
    const int N = cfg.horizon;
    const std::vector<int> off = consensus_offsets(cfg);
    Vec T(off.back());
    for (int s = 0; s < cfg.num_agents(); ++s) {
        const LocalDecision& d = plan.agents[at(s)];
        const int n = cfg.agents[at(s)].model.n;
        const int base = off[at(s)];
        for (int l = 0; l < N; ++l) {
            T.segment(base + l * n, n) = d.z[at(l)];
            T(base + N * n + l) = d.alpha(l);
        }
        for (int l = 1; l < N; ++l) T.segment(base + N * n + N + (l - 1) * n, n) = d.xhat[at(l)];
    }
    return T;
}

AdmmState shift_state(const NetworkConfig& cfg, const Plan& accepted, const AdmmState& prev) {
    const int N = cfg.horizon;
    const std::vector<int> off = consensus_offsets(cfg);
    AdmmState out;
    const Vec T = pack_consensus(cfg, accepted);
    out.T.resize(T.size());
    for (int s = 0; s < cfg.num_agents(); ++s) {
        const LocalDecision& d = accepted.agents[at(s)];
        const int n = cfg.agents[at(s)].model.n;
        out.T.segment(off[at(s)], off[at(s) + 1] - off[at(s)]) =
            shift_segment(T.segment(off[at(s)], off[at(s) + 1] - off[at(s)]), n, N, d.z[at(N)], d.alpha(N),
                          d.xhat[at(N)]);
    }
    for (int s = 0; s < cfg.num_agents() && !prev.Y.empty(); ++s) {
        const AgentModel& a = cfg.agents[at(s)].model;
        Vec Y = prev.Y[at(s)];
        int pos = 0;
        for (int sg : a.neighbors) {
            const int n = cfg.agents[at(sg)].model.n;
            const int len = shared_segment_size(n, N);
            Y.segment(pos, len) = shift_segment(prev.Y[at(s)].segment(pos, len), n, N, Vec::Zero(n), 0.0, Vec::Zero(n));
            pos += len;
        }
        out.Y.push_back(std::move(Y));
    }
    return out;
}

AdmmOutcome admm_solve(const StepView& st, const AdmmSettings& settings, const AdmmState* warm, TubeForm form) {
    check_view(st);
    const NetworkConfig& cfg = st.cfg;
    const int S = cfg.num_agents();
    const double rho = settings.rho;
    if (!(rho > 0.0) || settings.iterations < 1) fail(ErrorKind::SchemaError, "ADMM needs rho > 0 and iterations >= 1");

    // The tightening only absorbs consensus error; without coupling there is none.
    bool coupled = false;
    for (const AgentSpec& a : cfg.agents) coupled = coupled || a.model.neighbors.size() > 1;
    const double margin = coupled ? settings.margin : 0.0;
    std::vector<LocalQp> qps;
    for (int s = 0; s < S; ++s) qps.push_back(build_local_subproblem(st, s, form, margin));
    const std::vector<int> off = consensus_offsets(cfg);

    AdmmOutcome out;
    Vec T = warm && !warm->empty() ? warm->T : Vec::Zero(off.back());
    std::vector<Vec> Y;
    for (int s = 0; s < S; ++s)
        Y.push_back(warm && warm->Y.size() == at(S) ? warm->Y[at(s)] : Vec::Zero(qps[at(s)].layout.copies()));
    if (T.size() != off.back()) fail(ErrorKind::DesignMismatch, "warm start does not match the network");
    for (int s = 0; s < S; ++s)
        if (Y[at(s)].size() != qps[at(s)].layout.copies())
            fail(ErrorKind::DesignMismatch, "warm start duals do not match agent " + std::to_string(s));

    std::vector<int> copies_of(at(S), 0);
    for (int s = 0; s < S; ++s)
        for (int sg : cfg.agents[at(s)].model.neighbors) ++copies_of[at(sg)];
    // Segments held only by their owner are private: no penalty, no duals.
    std::vector<Vec> shared(at(S));
    for (int s = 0; s < S; ++s) {
        const LocalLayout& L = qps[at(s)].layout;
        const auto& nbrs = cfg.agents[at(s)].model.neighbors;
        shared[at(s)] = Vec::Zero(L.copies());
        for (std::size_t k = 0; k < nbrs.size(); ++k)
            if (copies_of[at(nbrs[k])] > 1)
                shared[at(s)].segment(L.seg_offset[k], L.seg_offset[k + 1] - L.seg_offset[k]).setOnes();
    }

    std::vector<ConvexQpWorkspace> ws;
    ws.reserve(at(S));
    for (int s = 0; s < S; ++s) {
        const LocalQp& q = qps[at(s)];
        Mat H = q.H;
        H.diagonal().head(q.layout.copies()) +=
            (rho * shared[at(s)].array() + kPrivateRegularization * (1.0 - shared[at(s)].array())).matrix();
        ws.emplace_back(std::move(H), q.A_eq, q.b_eq, q.A_in, q.b_in);
    }

    auto gather = [&](int s, const Vec& Tg) {
        const LocalLayout& L = qps[at(s)].layout;
        Vec c(L.copies());
        const auto& nbrs = cfg.agents[at(s)].model.neighbors;
        for (std::size_t k = 0; k < nbrs.size(); ++k)
            c.segment(L.seg_offset[k], L.seg_offset[k + 1] - L.seg_offset[k]) =
                Tg.segment(off[at(nbrs[k])], off[at(nbrs[k]) + 1] - off[at(nbrs[k])]);
        return c;
    };

    std::vector<Vec> y(at(S));
    for (int it = 1; it <= settings.iterations; ++it) {
        for (int s = 0; s < S; ++s) {
            const LocalQp& q = qps[at(s)];
            Vec g = q.g;
            g.head(q.layout.copies()) += (Y[at(s)] - rho * gather(s, T)).cwiseProduct(shared[at(s)]);
            const QpResult r = ws[at(s)].solve(g);
            if (r.status != SolveStatus::Optimal)
                fail(ErrorKind::LocalInfeasible, "agent " + std::to_string(s) + ": local subproblem infeasible (" +
                                                     (form == TubeForm::Compact ? "compact" : "literal") +
                                                     " tube constraints) at iteration " + std::to_string(it));
            y[at(s)] = r.x;
        }
        Vec Tn = Vec::Zero(T.size());
        for (int s = 0; s < S; ++s) {
            const LocalLayout& L = qps[at(s)].layout;
            const auto& nbrs = cfg.agents[at(s)].model.neighbors;
            for (std::size_t k = 0; k < nbrs.size(); ++k)
                Tn.segment(off[at(nbrs[k])], off[at(nbrs[k]) + 1] - off[at(nbrs[k])]) +=
                    y[at(s)].segment(L.seg_offset[k], L.seg_offset[k + 1] - L.seg_offset[k]);
        }
        for (int s = 0; s < S; ++s) Tn.segment(off[at(s)], off[at(s) + 1] - off[at(s)]) /= copies_of[at(s)];
        double primal = 0.0;
        for (int s = 0; s < S; ++s) {
            const Vec diff = y[at(s)].head(qps[at(s)].layout.copies()) - gather(s, Tn);  // zero on private segments
            primal = std::max(primal, inf_norm(diff));
            Y[at(s)] += rho * diff;
        }
        double dual = 0.0;
        for (int s = 0; s < S; ++s)
            if (copies_of[at(s)] > 1)
                dual = std::max(dual, rho * inf_norm(Tn.segment(off[at(s)], off[at(s) + 1] - off[at(s)]) -
                                                     T.segment(off[at(s)], off[at(s) + 1] - off[at(s)])));
        T = std::move(Tn);
        out.report.primal.push_back(primal);
        out.report.dual.push_back(dual);
        out.report.iterations = it;
        const double scale = std::max(1.0, inf_norm(T));
        if (primal <= settings.tolerance * scale && dual <= rho * settings.tolerance * scale) {
            out.report.converged = true;
            break;
        }
    }

    out.plan.cost = 0.0;
    for (int s = 0; s < S; ++s) {
        const LocalQp& q = qps[at(s)];
        const Vec& ys = y[at(s)];
        out.report.agent_objective.push_back(0.5 * ys.dot(q.H * ys) + q.g.dot(ys) + q.constant);
        Vec yc = ys;
        yc.head(q.layout.copies()) = gather(s, T);
        out.plan.agents.push_back(read_local(st, q, yc));
        out.plan.cost += out.plan.agents.back().cost;
    }
    out.state.T = std::move(T);
    out.state.Y = std::move(Y);
    return out;
}

namespace {

void append_report(ConsensusReport& into, const ConsensusReport& more) {
    into.primal.insert(into.primal.end(), more.primal.begin(), more.primal.end());
    into.dual.insert(into.dual.end(), more.dual.begin(), more.dual.end());
    into.iterations += more.iterations;
    into.converged = more.converged;
    into.agent_objective = more.agent_objective;
}

}  // namespace

DampcController::DampcController(const NetworkConfig& cfg, const TubeDesign& design, AdmmSettings settings,
                                 TubeForm form)
    : cfg_(cfg), design_(design), settings_(settings), form_(form) {}

void DampcController::reset() {
    last_ = Plan{};
    have_last_ = false;
    warm_ = AdmmState{};
}

StepOutcome DampcController::step(int k, const StepView& view) {
    StepOutcome out;
    CompletedPlan candidate;
    if (have_last_) {
        candidate = complete_tube(view, shifted_plan(last_));
        out.have_candidate = true;
        out.candidate = candidate.report;
    }
    AdmmState warm = have_last_ ? shift_state(cfg_, last_, warm_) : AdmmState{};
    bool solved = false;
    std::string why;
    try {
        // An unconverged run whose completion is infeasible resumes from its
        // own consensus state for up to recovery_rounds more rounds.
        for (int round = 0;; ++round) {
            AdmmOutcome ad = admm_solve(view, settings_, warm.empty() ? nullptr : &warm, form_);
            if (round == 0) out.report = std::move(ad.report);
            else append_report(out.report, ad.report);
            CompletedPlan done = complete_tube(view, ad.plan);
            out.accepted = done.report;
            warm = std::move(ad.state);
            if (done.report.ok(tol::feas)) {
                out.plan = std::move(done.plan);
                solved = true;
                break;
            }
            why = "completed plan violates " + done.report.worst + " by " + std::to_string(done.report.residual);
            if (out.report.converged || round >= settings_.recovery_rounds) break;
        }
        warm_ = warm;
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::LocalInfeasible) throw;
        why = e.what();
        out.accepted.residual = kInf;
        out.accepted.worst = why;
    }
    if (!solved) {
        if (out.have_candidate && candidate.report.ok(tol::report)) {
            out.plan = std::move(candidate.plan);
            out.used_candidate = true;
        } else if (!have_last_) {
            fail(ErrorKind::NoConvergence, "step 0: " + why);
        } else {
            fail(ErrorKind::InfeasibleAtStep, "step " + std::to_string(k) + ": " + why + "; shifted candidate violates " +
                                                  candidate.report.worst);
        }
    }
    (void)design_;
    last_ = out.plan;
    have_last_ = true;
    return out;
}

}  // namespace dampc
