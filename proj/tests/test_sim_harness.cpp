#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "support.hpp"

#include "dampc/oracle.hpp"

#include <cmath>

using namespace dampc;
using namespace testing;

namespace {

SimOptions short_run(int steps) {
    SimOptions o;
    o.steps = steps;
    return o;
}

NetworkConfig quiet_pair() {
    NetworkConfig cfg = oracle_toy(2);
    for (auto& a : cfg.agents) {
        a.model.w_lo.setZero();
        a.model.w_hi.setZero();
    }
    cfg.validate();
    return cfg;
}

}  // namespace

TEST_CASE("disturbance samples stay in the box and repeat per seed") {
    const Vec lo = Vec::Constant(10, -0.05), hi = Vec::Constant(10, 0.05);
    std::mt19937_64 a = make_rng(7, Stream::Disturbance), b = make_rng(7, Stream::Disturbance);
    std::mt19937_64 other = make_rng(8, Stream::Disturbance);
    bool differs = false;
    for (int i = 0; i < 1000; ++i) {
        const Vec wa = sample_disturbance(lo, hi, a), wb = sample_disturbance(lo, hi, b);
        CHECK(wa.maxCoeff() <= 0.05);
        CHECK(wa.minCoeff() >= -0.05);
        CHECK((wa - wb).cwiseAbs().maxCoeff() == 0.0);
        differs = differs || (wa - sample_disturbance(lo, hi, other)).cwiseAbs().maxCoeff() > 0.0;
    }
    CHECK(differs);
}

TEST_CASE("disturbance mean is within three standard errors of zero") {
    constexpr int n = 100000;
    std::mt19937_64 rng = make_rng(3, Stream::Disturbance);
    const Vec lo = Vec::Constant(1, -0.05), hi = Vec::Constant(1, 0.05);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += sample_disturbance(lo, hi, rng)(0);
    const double sigma = 0.1 / std::sqrt(12.0) / std::sqrt(double(n));
    CHECK(std::abs(sum / n) <= 3.0 * sigma);
}

TEST_CASE("theta and disturbance streams are independent of each other") {
    std::mt19937_64 t = make_rng(5, Stream::Theta), d = make_rng(5, Stream::Disturbance);
    CHECK(t() != d());
    std::mt19937_64 u = make_rng(0, Stream::Theta);
    for (int i = 0; i < 1000; ++i) {
        const double x = uniform01(u);
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
    }
}

TEST_CASE("true parameters lie in theta0 and are paired across kappa") {
    const NetworkConfig base = bundled(1.0);
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        std::vector<Vec> offsets;
        for (double kappa : {0.3, 0.5, 1.0}) {
            NetworkConfig cfg = base;
            cfg.sim.kappa = kappa;
            const Experiment ex = prepare_experiment(cfg);
            const Vec th = draw_theta_star(ex, seed);
            CHECK(ex.cfg.theta.at(kappa).max_violation(th) <= 0.0);
            offsets.push_back((th - cfg.theta.nominal) / kappa);
        }
        CHECK((offsets[0] - offsets[2]).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK((offsets[1] - offsets[2]).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("no disturbance and a start at the origin keeps every mode at zero cost") {
    NetworkConfig cfg = quiet_pair();
    for (auto& a : cfg.agents) a.x0 = Vec::Zero(1);
    const Experiment ex = prepare_experiment(cfg);
    for (Mode m : kAllModes) {
        const SimRun run = simulate(ex, m, draw_theta_star(ex, 0), 0, short_run(10));
        REQUIRE(run.completed);
        CHECK(run.cost <= 1e-12);
        for (const StepRecord& r : run.steps) CHECK(r.x.cwiseAbs().maxCoeff() <= 1e-9);
    }
}

TEST_CASE("without uncertainty adaptation changes nothing") {
    NetworkConfig cfg = oracle_toy(2);
    cfg.sim.kappa = 0.0;
    const Experiment ex = prepare_experiment(cfg);
    const Vec th = draw_theta_star(ex, 4);
    CHECK((th - cfg.theta.nominal).cwiseAbs().maxCoeff() == 0.0);
    const SimRun base = simulate(ex, Mode::Drmpc, th, 4, short_run(20));
    REQUIRE(base.completed);
    for (Mode m : {Mode::DampcDecentralized, Mode::DampcDistributed}) {
        const SimRun run = simulate(ex, m, th, 4, short_run(20));
        REQUIRE(run.completed);
        CHECK(run.cost == doctest::Approx(base.cost).epsilon(1e-9));
        for (std::size_t k = 0; k < run.steps.size(); ++k)
            CHECK((run.steps[k].x - base.steps[k].x).cwiseAbs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("closed loop on the pair respects constraints, tubes and identification") {
    const NetworkConfig cfg = oracle_toy(2);
    const Experiment ex = prepare_experiment(cfg);
    for (Mode m : kAllModes)
        for (std::uint64_t seed : {0u, 1u, 2u}) {
            const SimRun run = simulate(ex, m, draw_theta_star(ex, seed), seed, short_run(30));
            REQUIRE(run.completed);
            CHECK(run.max_z_violation <= 1e-6);
            CHECK(run.tube_violations == 0);
            CHECK(run.ident_sound);
            CHECK(run.ident_monotone);
            CHECK(run.cost >= 0.0);
            CHECK(std::isfinite(run.cost));
            // Stage costs add up to the run cost.
            double sum = 0.0;
            for (const StepRecord& r : run.steps) sum += r.stage_cost;
            CHECK(sum == doctest::Approx(run.cost).epsilon(1e-12));
        }
}

TEST_CASE("distributed bounds are inside the decentralized ones") {
    const NetworkConfig cfg = oracle_toy(2);
    const Experiment ex = prepare_experiment(cfg);
    const SimRun run = run_figure3(cfg, 1, short_run(30));
    REQUIRE(run.completed);
    REQUIRE_FALSE(run.steps.empty());
    // Initial bounds are theta0 exactly.
    const ParamSet first = initial_param_sets(ex.theta_rows)[0];
    CHECK((run.steps[0].agents[0].lower - first.lower()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((run.steps[0].agents[0].upper - first.upper()).cwiseAbs().maxCoeff() == 0.0);
    for (const StepRecord& r : run.steps)
        for (const AgentStepRecord& a : r.agents) {
            CHECK(((a.lower - a.shadow_lower).array() >= 0.0).all());
            CHECK(((a.upper - a.shadow_upper).array() <= 0.0).all());
        }
    // Parameter 0 is owned by both agents: the shared bound sits inside both owners' bounds.
    for (const StepRecord& r : run.steps) {
        const double lo = std::max(r.agents[0].shadow_lower(0), r.agents[1].shadow_lower(0));
        const double hi = std::min(r.agents[0].shadow_upper(0), r.agents[1].shadow_upper(0));
        CHECK(r.agents[0].lower(0) >= lo);
        CHECK(r.agents[0].upper(0) <= hi);
    }
    const std::string csv = fig3_csv(ex, run);
    CHECK(csv.rfind("k,param,agent,dec_lower,dec_upper,dist_lower,dist_upper\n", 0) == 0);
}

TEST_CASE("percentage decrease against itself is zero") {
    const NetworkConfig cfg = oracle_toy(2);
    const ExperimentResult r = run_table2(cfg, {1.0}, 1, short_run(10), 1, {Mode::Drmpc, Mode::Drmpc});
    REQUIRE(r.table.size() == 1);
    REQUIRE(r.table[0].modes.size() == 2);
    for (const ModeSummary& m : r.table[0].modes) CHECK(m.pct_decrease == 0.0);
    CHECK(r.table[0].modes[0].mean_cost == r.table[0].modes[1].mean_cost);
}

TEST_CASE("table summaries are consistent with the runs") {
    const NetworkConfig cfg = oracle_toy(2);
    const ExperimentResult r = run_table2(cfg, {0.5, 1.0}, 3, short_run(10), 1);
    REQUIRE(r.table.size() == 2);
    REQUIRE(r.runs.size() == 2 * 3 * 3);
    std::size_t i = 0;
    for (const KappaSummary& ks : r.table) {
        double base = 0.0;
        for (const ModeSummary& ms : ks.modes) {
            double sum = 0.0;
            for (int sd = 0; sd < 3; ++sd, ++i) {
                CHECK(r.runs[i].mode == ms.mode);
                CHECK(r.runs[i].seed == static_cast<std::uint64_t>(sd));
                CHECK(r.runs[i].kappa == ks.kappa);
                sum += r.runs[i].cost;
            }
            CHECK(ms.mean_cost == doctest::Approx(sum / 3.0).epsilon(1e-14));
            if (ms.mode == Mode::Drmpc) base = ms.mean_cost;
        }
        for (const ModeSummary& ms : ks.modes)
            CHECK(ms.pct_decrease == doctest::Approx(100.0 * (base - ms.mean_cost) / base).epsilon(1e-12));
    }
    const std::string csv = table2_csv(r);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 3);
}

TEST_CASE("results do not depend on the worker count") {
    const NetworkConfig cfg = oracle_toy(2);
    const ExperimentResult one = run_table2(cfg, {1.0}, 4, short_run(8), 1);
    const ExperimentResult three = run_table2(cfg, {1.0}, 4, short_run(8), 3);
    CHECK(table2_csv(one) == table2_csv(three));
    CHECK(runs_csv(one) == runs_csv(three));
}

TEST_CASE("number formatting uses twelve significant digits") {
    CHECK(format_number(1.0 / 3.0) == "0.333333333333");
    CHECK(format_number(-0.0) == "0");
    CHECK(format_number(1234567.0) == "1234567");
    CHECK(format_number(std::nan("")) == "nan");
}
