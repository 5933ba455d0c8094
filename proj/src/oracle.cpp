#include "dampc/oracle.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace dampc {

namespace {

std::size_t at(int i) { return static_cast<std::size_t>(i); }

Mat scalar(double v) { return Mat::Constant(1, 1, v); }

// |x| <= 2, |u| <= 1, tube [-1, 1], own-state feedback k.
AgentSpec scalar_agent(int id, std::vector<int> neighbors, std::vector<int> params, double k, double x0) {
    AgentSpec sp;
    AgentModel& a = sp.model;
    a.id = id;
    a.neighbors = std::move(neighbors);
    a.params = std::move(params);
    a.n = 1;
    a.m = 1;
    const auto nb = static_cast<Eigen::Index>(a.neighbors.size());
    const int self = static_cast<int>(std::find(a.neighbors.begin(), a.neighbors.end(), id) - a.neighbors.begin());
    a.F = Mat::Zero(4, nb);
    a.G = Mat::Zero(4, 1);
    a.F(0, self) = 0.5;
    a.F(1, self) = -0.5;
    a.G(2, 0) = 1.0;
    a.G(3, 0) = -1.0;
    a.w_lo = Vec::Constant(1, -0.02);
    a.w_hi = Vec::Constant(1, 0.02);
    sp.Q = scalar(1.0);
    sp.R = scalar(0.5);
    sp.P = scalar(5.0);
    sp.K = Mat::Zero(1, nb);
    sp.K(0, self) = k;
    sp.Hx = Mat(2, 1);
    sp.Hx << 1.0, -1.0;
    sp.X0.vertices = {Vec::Constant(1, 1.0), Vec::Constant(1, -1.0)};
    sp.x0 = Vec::Constant(1, x0);
    return sp;
}

}  // namespace

NetworkConfig oracle_toy(int agents) {
    NetworkConfig cfg;
    cfg.horizon = 3;
    cfg.sim.kappa = 1.0;
    if (agents == 1) {
        cfg.name = "oracle-single";
        cfg.num_params = 1;
        cfg.theta.nominal = Vec::Zero(1);
        cfg.theta.radius = Vec::Ones(1);
        AgentSpec a = scalar_agent(0, {0}, {0}, -0.5, 1.2);
        a.model.A = {scalar(1.0), scalar(0.1)};
        a.model.B = {scalar(1.0), scalar(0.0)};
        cfg.agents.push_back(std::move(a));
    } else if (agents == 2) {
        cfg.name = "oracle-pair";
        cfg.num_params = 2;
        cfg.theta.nominal = Vec(2);
        cfg.theta.nominal << 1.0, 0.0;
        cfg.theta.radius = Vec(2);
        cfg.theta.radius << 0.5, 1.0;
        AgentSpec a0 = scalar_agent(0, {0, 1}, {0}, -0.6, 1.5);
        Mat c0(1, 2);
        c0 << -0.1, 0.1;
        a0.model.A = {Mat::Identity(1, 2), c0};
        a0.model.B = {scalar(1.0), scalar(0.0)};
        AgentSpec a1 = scalar_agent(1, {0, 1}, {0, 1}, -0.6, -1.0);
        Mat i1 = Mat::Zero(1, 2);
        i1(0, 1) = 1.0;
        Mat c1(1, 2);
        c1 << 0.1, -0.1;
        a1.model.A = {i1, c1, Mat::Zero(1, 2)};
        a1.model.B = {scalar(1.0), scalar(0.0), scalar(0.2)};
        cfg.agents.push_back(std::move(a0));
        cfg.agents.push_back(std::move(a1));
    } else {
        fail(ErrorKind::SchemaError, "oracle toys exist for one or two agents");
    }
    finalize_agents(cfg.agents);
    cfg.validate();
    return cfg;
}

OracleReport oracle_check(const NetworkConfig& cfg, int states, std::uint64_t seed, const AdmmSettings& admm) {
    const Experiment ex = prepare_experiment(cfg);
    const GlobalModel& g = ex.model;
    const std::vector<ParamSet> sets = initial_param_sets(ex.theta_rows);
    std::vector<Vec> theta_hat;
    for (const ParamSet& ps : sets) theta_hat.push_back(ps.dim() == 0 ? Vec(0) : Vec(0.5 * (ps.lower() + ps.upper())));

    // Half the axis extents of Z in the state coordinates.
    Vec half(g.n());
    {
        LpProblem lp;
        lp.A_in.resize(g.F.rows(), g.n() + g.m());
        lp.A_in << g.F, g.G;
        lp.b_in = Vec::Ones(g.F.rows());
        for (int i = 0; i < g.n(); ++i) {
            lp.cost = Vec::Zero(g.n() + g.m());
            lp.cost(i) = -1.0;
            const LpResult r = solve_lp(lp);
            half(i) = r.status == SolveStatus::Optimal ? 0.5 * r.x(i) : 1.0;
        }
    }
    std::vector<Vec> xs;
    {
        Vec x0(g.n());
        for (int s = 0; s < cfg.num_agents(); ++s) x0.segment(g.x_offset[at(s)], cfg.agents[at(s)].model.n) = cfg.agents[at(s)].x0;
        xs.push_back(x0);
        std::mt19937_64 rng = make_rng(seed, Stream::Disturbance);
        for (int i = 0; i < states; ++i) xs.push_back(sample_disturbance(-half, half, rng));
    }

    OracleReport rep;
    rep.min_gap = std::numeric_limits<double>::infinity();
    rep.max_gap = -std::numeric_limits<double>::infinity();
    for (const Vec& x : xs) {
        OracleCase c;
        c.x = x;
        const StepView view{ex.cfg, g, ex.design, sets, theta_hat, x};
        const CentralizedResult cen = centralized_solve(view);
        c.feasible = cen.status == SolveStatus::Optimal;
        if (c.feasible) {
            c.centralized_cost = cen.cost;
            try {
                const AdmmOutcome ad = admm_solve(view, admm);
                const CompletedPlan done = complete_tube(view, ad.plan);
                c.iterations = ad.report.iterations;
                c.converged = ad.report.converged;
                c.primal = ad.report.primal.empty() ? 0.0 : ad.report.primal.back();
                c.structured_feasible = done.report.ok(tol::feas);
                c.structured_cost = done.plan.cost;
                c.violation = centralized_violation(view, done.plan);
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::LocalInfeasible) throw;
            }
            if (c.structured_feasible) {
                const double diff = c.structured_cost - c.centralized_cost;
                c.gap = std::abs(diff) < 1e-12 ? 0.0 : diff / std::max(std::abs(c.centralized_cost), 1e-9);
                rep.max_gap = std::max(rep.max_gap, c.gap);
                rep.min_gap = std::min(rep.min_gap, c.gap);
                rep.max_violation = std::max(rep.max_violation, c.violation);
                ++rep.solved;
            }
        }
        rep.cases.push_back(std::move(c));
    }
    if (rep.solved == 0) rep.max_gap = rep.min_gap = 0.0;
    return rep;
}

std::string oracle_report_json(const OracleReport& r) {
    nlohmann::json j;
    j["solved"] = r.solved;
    j["max_gap"] = r.max_gap;
    j["min_gap"] = r.min_gap;
    j["max_violation"] = r.max_violation;
    for (const OracleCase& c : r.cases) {
        nlohmann::json k;
        k["x"] = std::vector<double>(c.x.data(), c.x.data() + c.x.size());
        k["feasible"] = c.feasible;
        k["structured_feasible"] = c.structured_feasible;
        k["structured_cost"] = c.structured_cost;
        k["centralized_cost"] = c.centralized_cost;
        k["gap"] = c.gap;
        k["violation"] = c.violation;
        k["primal_residual"] = c.primal;
        k["iterations"] = c.iterations;
        k["converged"] = c.converged;
        j["cases"].push_back(std::move(k));
    }
    return j.dump(2) + "\n";
}

}  // namespace dampc
