#include "dampc/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <thread>

namespace dampc {

namespace {

std::size_t at(int i) { return static_cast<std::size_t>(i); }

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Mat blockdiag_cost(const NetworkConfig& cfg, bool input) {
    int dim = 0;
    for (const AgentSpec& a : cfg.agents) dim += input ? a.model.m : a.model.n;
    Mat M = Mat::Zero(dim, dim);
    int o = 0;
    for (const AgentSpec& a : cfg.agents) {
        const Mat& B = input ? a.R : a.Q;
        M.block(o, o, B.rows(), B.cols()) = B;
        o += static_cast<int>(B.rows());
    }
    return M;
}

Vec initial_state(const NetworkConfig& cfg) {
    int n = 0;
    for (const AgentSpec& a : cfg.agents) n += a.model.n;
    Vec x(n);
    int o = 0;
    for (const AgentSpec& a : cfg.agents) {
        x.segment(o, a.model.n) = a.x0;
        o += a.model.n;
    }
    return x;
}

// Midpoint of the bounds, moved into the set if the set is not a box.
Vec set_center(const ParamSet& ps) {
    if (ps.dim() == 0) return Vec(0);
    if (ps.rows->axis_aligned()) return project_onto(ps, 0.5 * (ps.lower() + ps.upper()));
    Vec lo(ps.dim()), hi(ps.dim());
    const Polytope P = ps.polytope();
    for (Eigen::Index i = 0; i < ps.dim(); ++i) {
        const Vec e = Vec::Unit(ps.dim(), i);
        hi(i) = support_value(P, e);
        lo(i) = -support_value(P, -e);
    }
    return project_onto(ps, 0.5 * (lo + hi));
}

Vec local_theta(const AgentModel& a, const Vec& theta) {
    Vec out(a.p());
    for (int i = 0; i < a.p(); ++i) out(i) = theta(a.params[at(i)]);
    return out;
}

void compare_with_shadow(const NetworkConfig& cfg, const std::vector<ParamSet>& sets,
                         const std::vector<ParamSet>& shadow, SimRun& run) {
    const int S = cfg.num_agents();
    Vec lo = Vec::Constant(cfg.num_params, -std::numeric_limits<double>::infinity());
    Vec hi = Vec::Constant(cfg.num_params, std::numeric_limits<double>::infinity());
    std::vector<Vec> slo(at(S)), shi(at(S));
    for (int s = 0; s < S; ++s) {
        if (shadow[at(s)].dim() == 0 || !shadow[at(s)].rows->axis_aligned()) continue;
        slo[at(s)] = shadow[at(s)].lower();
        shi[at(s)] = shadow[at(s)].upper();
        const AgentModel& a = cfg.agents[at(s)].model;
        for (int i = 0; i < a.p(); ++i) {
            const int g = a.params[at(i)];
            lo(g) = std::max(lo(g), slo[at(s)](i));
            hi(g) = std::min(hi(g), shi[at(s)](i));
        }
    }
    for (int s = 0; s < S; ++s) {
        if (slo[at(s)].size() == 0 || !sets[at(s)].rows->axis_aligned()) continue;
        const Vec l = sets[at(s)].lower(), u = sets[at(s)].upper();
        const AgentModel& a = cfg.agents[at(s)].model;
        for (int i = 0; i < a.p(); ++i) {
            const int g = a.params[at(i)];
            run.shadow_excess = std::max({run.shadow_excess, slo[at(s)](i) - l(i), u(i) - shi[at(s)](i)});
            run.owner_excess = std::max({run.owner_excess, lo(g) - l(i), u(i) - hi(g)});
            if (u(i) - l(i) < hi(g) - lo(g) - 1e-9) ++run.strict_improvements;
        }
    }
}

}  // namespace

const char* mode_name(Mode mode) {
    switch (mode) {
        case Mode::Drmpc: return "drmpc";
        case Mode::DampcDecentralized: return "dampc-dec";
        case Mode::DampcDistributed: return "dampc-dist";
    }
    return "?";
}

Mode parse_mode(const std::string& name) {
    for (Mode m : kAllModes)
        if (name == mode_name(m)) return m;
    fail(ErrorKind::SchemaError, "unknown mode '" + name + "' (drmpc, dampc-dec, dampc-dist)");
}

Experiment prepare_experiment(const NetworkConfig& cfg) {
    cfg.validate();
    Experiment ex;
    ex.cfg = cfg;
    ex.model = assemble_global(ex.cfg);
    ex.design = compute_offline_constants(ex.cfg);
    ex.theta_rows = build_redundant_theta(ex.cfg);
    for (int s = 0; s < ex.cfg.num_agents(); ++s) ex.mu.push_back(lms_step_size(ex.cfg, ex.model, s));
    return ex;
}

std::mt19937_64 make_rng(std::uint64_t seed, Stream stream) {
    return std::mt19937_64(splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(stream)));
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

Vec sample_disturbance(const Vec& w_lo, const Vec& w_hi, std::mt19937_64& rng) {
    Vec w(w_lo.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = w_lo(i) + (w_hi(i) - w_lo(i)) * uniform01(rng);
    return w;
}

Vec draw_theta_star(const Experiment& ex, std::uint64_t seed) {
    const NetworkConfig& cfg = ex.cfg;
    if (cfg.theta_star) return *cfg.theta_star;
    const int p = cfg.num_params;
    std::mt19937_64 rng = make_rng(seed, Stream::Theta);
    if (cfg.theta.scaled()) {
        Vec th(p);
        for (int i = 0; i < p; ++i)
            th(i) = cfg.theta.nominal(i) + cfg.sim.kappa * cfg.theta.radius(i) * (2.0 * uniform01(rng) - 1.0);
        return th;
    }
    const Polytope& P = *cfg.theta.explicit_set;
    Vec lo(p), hi(p);
    for (int i = 0; i < p; ++i) {
        hi(i) = support_value(P, Vec::Unit(p, i));
        lo(i) = -support_value(P, -Vec::Unit(p, i));
    }
    for (int tries = 0; tries < 100000; ++tries) {
        Vec th(p);
        for (int i = 0; i < p; ++i) th(i) = lo(i) + (hi(i) - lo(i)) * uniform01(rng);
        if (P.max_violation(th) <= 0.0) return th;
    }
    fail(ErrorKind::SchemaError, "could not sample theta_star from theta0");
}

SimRun simulate(const Experiment& ex, Mode mode, const Vec& theta_star, std::uint64_t seed, const SimOptions& opt) {
    const NetworkConfig& cfg = ex.cfg;
    const GlobalModel& g = ex.model;
    const int S = cfg.num_agents();
    SimRun run;
    run.mode = mode;
    run.seed = seed;
    run.kappa = cfg.sim.kappa;
    run.theta_star = theta_star;
    run.worst_tube_margin = std::numeric_limits<double>::infinity();

    std::mt19937_64 rng = make_rng(seed, Stream::Disturbance);
    const Mat Q = blockdiag_cost(cfg, false), R = blockdiag_cost(cfg, true);
    std::vector<ParamSet> sets = initial_param_sets(ex.theta_rows), shadow = sets;
    std::vector<Vec> theta_hat;
    for (int s = 0; s < S; ++s) theta_hat.push_back(set_center(sets[at(s)]));
    DampcController ctrl(cfg, ex.design, opt.admm);
    const bool adapt = mode != Mode::Drmpc;
    const IdentMode ident = mode == Mode::DampcDistributed ? IdentMode::Distributed : IdentMode::Decentralized;

    Vec x = initial_state(cfg);
    const double x0_norm = x.norm();
    Transition tr;
    std::vector<double> norms;
    try {
        for (int k = 0; k < opt.steps; ++k) {
            if (k > 0) {
                if (adapt) {
                    std::vector<ParamSet> next;
                    try {
                        next = run_identification_step(ident, cfg, g, tr, sets);
                    } catch (const Error& e) {
                        if (e.kind() == ErrorKind::EmptyIntersection) fail(ErrorKind::IdentificationFault, e.what());
                        throw;
                    }
                    for (int s = 0; s < S; ++s)
                        if (((next[at(s)].h - sets[at(s)].h).array() > 0.0).any()) run.ident_monotone = false;
                    sets = std::move(next);
                    for (int s = 0; s < S; ++s) {
                        const AgentModel& a = cfg.agents[at(s)].model;
                        LmsState lms{theta_hat[at(s)], ex.mu[at(s)]};
                        theta_hat[at(s)] = lms_update(lms, a, own_slice(g, g.x_offset, s, tr.x_now),
                                                      neighborhood_slice(cfg, g, s, tr.x_prev),
                                                      own_slice(g, g.u_offset, s, tr.u_prev), sets[at(s)])
                                               .theta;
                    }
                }
                if (opt.shadow_decentralized) shadow = run_identification_step(IdentMode::Decentralized, cfg, g, tr, shadow);
            }
            for (int s = 0; s < S; ++s)
                if (!sets[at(s)].contains(local_theta(cfg.agents[at(s)].model, theta_star))) run.ident_sound = false;
            if (opt.shadow_decentralized) compare_with_shadow(cfg, sets, shadow, run);

            const StepView view{cfg, g, ex.design, sets, theta_hat, x};
            const StepOutcome out = ctrl.step(k, view);
            const Vec u = extract_global_control(view, out.plan);

            StepRecord rec;
            rec.k = k;
            rec.x = x;
            rec.u = u;
            rec.iterations = out.report.iterations;
            rec.primal = out.report.primal.empty() ? 0.0 : out.report.primal.back();
            rec.dual = out.report.dual.empty() ? 0.0 : out.report.dual.back();
            rec.converged = out.report.converged;
            rec.used_candidate = out.used_candidate;
            rec.candidate_residual = out.have_candidate ? out.candidate.residual : std::nan("");
            if (out.have_candidate) {
                ++run.candidate_checks;
                run.worst_candidate_residual = std::max(run.worst_candidate_residual, out.candidate.residual);
            }
            if (out.used_candidate) ++run.fallbacks;
            run.max_iterations = std::max(run.max_iterations, rec.iterations);
            if (opt.verify_tubes) {
                rec.tube = verify_tube(view, out.plan);
                run.tube_violations += rec.tube.violations;
                run.worst_tube_margin = std::min(run.worst_tube_margin, rec.tube.worst_margin);
            }
            rec.z_violation = (g.F * x + g.G * u - Vec::Ones(g.F.rows())).maxCoeff();
            run.max_z_violation = std::max(run.max_z_violation, rec.z_violation);
            run.max_abs_state = std::max(run.max_abs_state, inf_norm(x));
            run.max_abs_input = std::max(run.max_abs_input, inf_norm(u));
            for (int s = 0; s < S; ++s) {
                AgentStepRecord ar;
                ar.cost = out.plan.agents[at(s)].cost;
                ar.alpha0 = out.plan.agents[at(s)].alpha(0);
                if (sets[at(s)].dim() > 0 && sets[at(s)].rows->axis_aligned()) {
                    ar.lower = sets[at(s)].lower();
                    ar.upper = sets[at(s)].upper();
                    if (opt.shadow_decentralized) {
                        ar.shadow_lower = shadow[at(s)].lower();
                        ar.shadow_upper = shadow[at(s)].upper();
                    }
                }
                ar.theta_hat = theta_hat[at(s)];
                rec.agents.push_back(std::move(ar));
            }
            rec.w = sample_disturbance(g.w_lo, g.w_hi, rng);
            rec.stage_cost = x.dot(Q * x) + u.dot(R * u);
            run.cost += rec.stage_cost;
            norms.push_back(x.norm());
            const Vec x_next = step_truth(g, theta_star, x, u, rec.w);
            tr = Transition{x, u, x_next};
            x = x_next;
            log(LogLevel::Debug, std::string(mode_name(mode)) + " seed " + std::to_string(seed) + " k " +
                                     std::to_string(k) + " iterations " + std::to_string(rec.iterations));
            run.steps.push_back(std::move(rec));
        }
        run.completed = true;
    } catch (const Error& e) {
        run.failure = e.what();
        run.failure_kind = e.kind();
        log(LogLevel::Warn, std::string(mode_name(mode)) + " seed " + std::to_string(seed) + ": " + e.what());
    }
    if (!std::isfinite(run.worst_tube_margin)) run.worst_tube_margin = 0.0;
    const std::size_t tail = std::min<std::size_t>(10, norms.size());
    double acc = 0.0;
    for (std::size_t i = norms.size() - tail; i < norms.size(); ++i) acc += norms[i];
    run.tail_state_ratio = tail == 0 || x0_norm == 0.0 ? 0.0 : acc / static_cast<double>(tail) / x0_norm;
    return run;
}

ExperimentResult run_table2(const NetworkConfig& cfg, const std::vector<double>& kappas, int n_seeds,
                            const SimOptions& opt, int jobs, const std::vector<Mode>& modes_in) {
    if (n_seeds < 1) fail(ErrorKind::SchemaError, "seeds must be at least 1");
    const std::vector<Mode> modes = modes_in.empty() ? std::vector<Mode>(std::begin(kAllModes), std::end(kAllModes))
                                                     : modes_in;
    std::vector<Experiment> exps;
    for (double kappa : kappas) {
        NetworkConfig c = cfg;
        c.sim.kappa = kappa;
        exps.push_back(prepare_experiment(c));
    }
    struct Task {
        std::size_t exp;
        Mode mode;
        int seed;
    };
    std::vector<Task> tasks;
    for (std::size_t e = 0; e < exps.size(); ++e)
        for (Mode m : modes)
            for (int sd = 0; sd < n_seeds; ++sd) tasks.push_back({e, m, sd});

    ExperimentResult res;
    res.runs.resize(tasks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) {
            const Task& t = tasks[i];
            const Experiment& ex = exps[t.exp];
            const auto seed = static_cast<std::uint64_t>(t.seed);
            res.runs[i] = simulate(ex, t.mode, draw_theta_star(ex, seed), seed, opt);
            res.runs[i].steps.clear();
            res.runs[i].steps.shrink_to_fit();
            log(LogLevel::Info, "kappa " + format_number(ex.cfg.sim.kappa) + " " + mode_name(t.mode) + " seed " +
                                    std::to_string(t.seed) + " cost " + format_number(res.runs[i].cost));
        }
    };
    const int nthreads = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
    if (nthreads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
        for (std::thread& th : pool) th.join();
    }

    std::size_t i = 0;
    for (std::size_t e = 0; e < exps.size(); ++e) {
        KappaSummary ks;
        ks.kappa = exps[e].cfg.sim.kappa;
        for (Mode m : modes) {
            ModeSummary ms;
            ms.mode = m;
            double sum = 0.0;
            for (int sd = 0; sd < n_seeds; ++sd, ++i) {
                sum += res.runs[i].cost;
                if (res.runs[i].completed) ++ms.completed;
            }
            ms.mean_cost = sum / n_seeds;
            ks.modes.push_back(ms);
        }
        const ModeSummary* base = nullptr;
        for (const ModeSummary& ms : ks.modes)
            if (ms.mode == Mode::Drmpc) base = &ms;
        for (ModeSummary& ms : ks.modes)
            ms.pct_decrease = base && base->mean_cost != 0.0 ? 100.0 * (base->mean_cost - ms.mean_cost) / base->mean_cost
                                                             : 0.0;
        res.table.push_back(std::move(ks));
    }
    return res;
}

SimRun run_figure3(const NetworkConfig& cfg, std::uint64_t seed, const SimOptions& opt) {
    const Experiment ex = prepare_experiment(cfg);
    SimOptions o = opt;
    o.shadow_decentralized = true;
    return simulate(ex, Mode::DampcDistributed, draw_theta_star(ex, seed), seed, o);
}

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v == 0.0 ? 0.0 : v);
    return buf;
}

std::string table2_csv(const ExperimentResult& r) {
    std::ostringstream os;
    os << "kappa,mode,mean_cost,pct_decrease\n";
    for (const KappaSummary& ks : r.table)
        for (const ModeSummary& ms : ks.modes)
            os << format_number(ks.kappa) << ',' << mode_name(ms.mode) << ',' << format_number(ms.mean_cost) << ','
               << format_number(ms.pct_decrease) << '\n';
    return os.str();
}

std::string runs_csv(const ExperimentResult& r) {
    std::ostringstream os;
    os << "kappa,mode,seed,cost,completed,max_z_violation,max_abs_state,max_abs_input,ident_sound,ident_monotone,"
          "tube_violations,worst_tube_margin,worst_candidate_residual,fallbacks,max_iterations,tail_state_ratio,"
          "shadow_excess,owner_excess,strict_improvements,failure\n";
    for (const SimRun& run : r.runs) {
        std::string failure = run.failure;
        for (char& c : failure)
            if (c == ',' || c == '\n') c = ';';
        os << format_number(run.kappa) << ',' << mode_name(run.mode) << ',' << run.seed << ','
           << format_number(run.cost) << ',' << (run.completed ? 1 : 0) << ',' << format_number(run.max_z_violation)
           << ',' << format_number(run.max_abs_state) << ',' << format_number(run.max_abs_input) << ','
           << (run.ident_sound ? 1 : 0) << ',' << (run.ident_monotone ? 1 : 0) << ',' << run.tube_violations << ','
           << format_number(run.worst_tube_margin) << ',' << format_number(run.worst_candidate_residual) << ','
           << run.fallbacks << ',' << run.max_iterations << ',' << format_number(run.tail_state_ratio) << ','
           << format_number(run.shadow_excess) << ',' << format_number(run.owner_excess) << ','
           << run.strict_improvements << ',' << failure << '\n';
    }
    return os.str();
}

std::string trace_csv(const SimRun& run) {
    std::ostringstream os;
    os << "k,agent,cost,alpha0,primal,dual,iterations,converged,used_candidate,candidate_residual,tube_margin\n";
    for (const StepRecord& rec : run.steps)
        for (std::size_t s = 0; s < rec.agents.size(); ++s)
            os << rec.k << ',' << s << ',' << format_number(rec.agents[s].cost) << ','
               << format_number(rec.agents[s].alpha0) << ',' << format_number(rec.primal) << ','
               << format_number(rec.dual) << ',' << rec.iterations << ',' << (rec.converged ? 1 : 0) << ','
               << (rec.used_candidate ? 1 : 0) << ',' << format_number(rec.candidate_residual) << ','
               << format_number(rec.tube.worst_margin) << '\n';
    return os.str();
}

std::string trajectory_csv(const SimRun& run) {
    std::ostringstream os;
    if (run.steps.empty()) return "k\n";
    const StepRecord& f = run.steps.front();
    os << 'k';
    for (Eigen::Index i = 0; i < f.x.size(); ++i) os << ",x" << i;
    for (Eigen::Index i = 0; i < f.u.size(); ++i) os << ",u" << i;
    for (Eigen::Index i = 0; i < f.w.size(); ++i) os << ",w" << i;
    os << ",stage_cost\n";
    for (const StepRecord& rec : run.steps) {
        os << rec.k;
        for (const Vec* v : {&rec.x, &rec.u, &rec.w})
            for (Eigen::Index i = 0; i < v->size(); ++i) os << ',' << format_number((*v)(i));
        os << ',' << format_number(rec.stage_cost) << '\n';
    }
    return os.str();
}

std::string fig3_csv(const Experiment& ex, const SimRun& run) {
    std::ostringstream os;
    os << "k,param,agent,dec_lower,dec_upper,dist_lower,dist_upper\n";
    for (const StepRecord& rec : run.steps)
        for (int s = 0; s < ex.cfg.num_agents(); ++s) {
            const AgentModel& a = ex.cfg.agents[at(s)].model;
            const AgentStepRecord& ar = rec.agents[at(s)];
            if (ar.shadow_lower.size() != a.p()) continue;
            for (int i = 0; i < a.p(); ++i)
                os << rec.k << ',' << a.params[at(i)] << ',' << s << ',' << format_number(ar.shadow_lower(i)) << ','
                   << format_number(ar.shadow_upper(i)) << ',' << format_number(ar.lower(i)) << ','
                   << format_number(ar.upper(i)) << '\n';
        }
    return os.str();
}

}  // namespace dampc
