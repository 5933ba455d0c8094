#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "support.hpp"

#include "dampc/identification.hpp"

using namespace dampc;
using namespace testing;

namespace {

// x+ = theta x + u + w on a single scalar agent, theta0 = [lo, hi].
NetworkConfig scalar_theta_plant(double lo, double hi, double w) {
    ScalarAgent a;
    a.neighbors = {0};
    a.params = {0};
    a.A0 = mat({{0.0}});
    a.Ai = {mat({{1.0}})};
    a.w = w;
    return scalar_network({a}, 1, vec({0.5 * (lo + hi)}), vec({0.5 * (hi - lo)}));
}

// Agents that all own global parameter 0 with the given neighbour lists;
// agent s evolves as x+_s = theta x_s + u_s + w_s.
NetworkConfig shared_parameter_network(const std::vector<std::vector<int>>& neighbors, double w = 0.05) {
    std::vector<ScalarAgent> agents;
    for (std::size_t s = 0; s < neighbors.size(); ++s) {
        ScalarAgent a;
        a.neighbors = neighbors[s];
        a.params = {0};
        const auto nb = static_cast<Eigen::Index>(a.neighbors.size());
        const int self = static_cast<int>(std::find(a.neighbors.begin(), a.neighbors.end(), int(s)) - a.neighbors.begin());
        a.A0 = Mat::Zero(1, nb);
        Mat A1 = Mat::Zero(1, nb);
        A1(0, self) = 1.0;
        a.Ai = {A1};
        a.w = w;
        agents.push_back(a);
    }
    return scalar_network(agents, 1, vec({0.5}), vec({0.5}));
}

ParamSet interval_set(const NetworkConfig& cfg, int s, double lo, double hi) {
    const RedundantThetaStructure rt = build_redundant_theta(cfg);
    ParamSet ps = initial_param_sets(rt)[static_cast<std::size_t>(s)];
    ps.h(ps.rows->upper[0]) = hi;
    ps.h(ps.rows->lower[0]) = -lo;
    return ps;
}

double width(const ParamSet& ps, int i) { return ps.upper()(i) - ps.lower()(i); }

}  // namespace

TEST_CASE("non-falsified interval of a scalar transition") {
    const NetworkConfig cfg = scalar_theta_plant(0.0, 1.0, 0.05);
    const AgentModel& a = cfg.agents[0].model;
    const NonFalsifiedSet d = non_falsified(a, vec({0.5}), vec({1.0}), vec({0.0}));
    REQUIRE(d.H.rows() == 2);
    CHECK_FALSE(d.empty);
    // -theta <= -0.45 and theta <= 0.55
    CHECK(d.H(0, 0) == -1.0);
    CHECK(d.h(0) == doctest::Approx(-0.45).epsilon(1e-15));
    CHECK(d.H(1, 0) == 1.0);
    CHECK(d.h(1) == doctest::Approx(0.55).epsilon(1e-15));
}

TEST_CASE("zero regressor: whole space when the residual is explained, empty otherwise") {
    const NetworkConfig cfg = scalar_theta_plant(0.0, 1.0, 0.05);
    const AgentModel& a = cfg.agents[0].model;
    NonFalsifiedSet d = non_falsified(a, vec({0.03}), vec({0.0}), vec({0.0}));
    CHECK(d.H.isZero(0.0));
    CHECK_FALSE(d.empty);
    d = non_falsified(a, vec({0.2}), vec({0.0}), vec({0.0}));
    CHECK(d.empty);
    const ParamSet ps = initial_param_sets(build_redundant_theta(cfg))[0];
    try {
        update_param_set_decentralized(ps, d);
        FAIL("expected EmptyIntersection");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::EmptyIntersection);
    }
}

TEST_CASE("decentralized update: intersections with the prior interval") {
    const NetworkConfig cfg = scalar_theta_plant(0.0, 1.0, 0.05);
    const AgentModel& a = cfg.agents[0].model;
    const ParamSet ps = initial_param_sets(build_redundant_theta(cfg))[0];
    CHECK(ps.lower()(0) == 0.0);
    CHECK(ps.upper()(0) == 1.0);

    ParamSet next = update_param_set_decentralized(ps, non_falsified(a, vec({0.5}), vec({1.0}), vec({0.0})));
    CHECK(next.lower()(0) == doctest::Approx(0.45).epsilon(1e-9));
    CHECK(next.upper()(0) == doctest::Approx(0.55).epsilon(1e-9));
    // Outward rounding never cuts into the exact interval.
    CHECK(next.lower()(0) <= 0.45);
    CHECK(next.upper()(0) >= 0.55);

    // Delta = [0.9, 1.2]: x = 1, x+ = 1.05, |w| <= 0.15.
    const NetworkConfig wide = scalar_theta_plant(0.0, 1.0, 0.15);
    const ParamSet ps2 = initial_param_sets(build_redundant_theta(wide))[0];
    next = update_param_set_decentralized(ps2, non_falsified(wide.agents[0].model, vec({1.05}), vec({1.0}), vec({0.0})));
    CHECK(next.lower()(0) == doctest::Approx(0.9).epsilon(1e-9));
    CHECK(next.upper()(0) == 1.0);

    // Delta containing the prior set leaves it bit-identical.
    next = update_param_set_decentralized(ps, non_falsified(a, vec({0.05}), vec({0.05}), vec({0.0})));
    CHECK(next.h == ps.h);

    // Disjoint data is an error.
    CHECK_THROWS_AS(update_param_set_decentralized(ps, non_falsified(a, vec({2.0}), vec({1.0}), vec({0.0}))), Error);
}

TEST_CASE("exchange: min of upper bounds between two owners") {
    const NetworkConfig cfg = shared_parameter_network({{0, 1}, {0, 1}});
    std::vector<ParamSet> all = {interval_set(cfg, 0, 1.7, 2.9), interval_set(cfg, 1, 1.7, 3.1)};
    const auto out = exchange_bounds(all, cfg);
    CHECK(out[0].upper()(0) == 2.9);
    CHECK(out[1].upper()(0) == 2.9);
    CHECK(out[0].lower()(0) == 1.7);
    // Idempotent on a fully connected pair.
    const auto again = exchange_bounds(out, cfg);
    CHECK(again[0].h == out[0].h);
    CHECK(again[1].h == out[1].h);
}

TEST_CASE("exchange: a parameter owned by one agent is unchanged") {
    ScalarAgent a0, a1;
    a0.neighbors = {0, 1};
    a0.params = {0};
    a0.A0 = Mat::Zero(1, 2);
    a0.Ai = {mat({{1.0, 0.0}})};
    a1.neighbors = {0, 1};
    a1.params = {1};
    a1.A0 = Mat::Zero(1, 2);
    a1.Ai = {mat({{0.0, 1.0}})};
    const NetworkConfig cfg = scalar_network({a0, a1}, 2, vec({0.5, 0.5}), vec({0.5, 0.5}));
    std::vector<ParamSet> all = initial_param_sets(build_redundant_theta(cfg));
    all[0].h(all[0].rows->upper[0]) = 0.7;
    const auto out = exchange_bounds(all, cfg);
    CHECK(out[0].h == all[0].h);
    CHECK(out[1].h == all[1].h);
}

TEST_CASE("exchange: one round along a chain of three owners") {
    const NetworkConfig cfg = shared_parameter_network({{0, 1}, {0, 1, 2}, {1, 2}});
    std::vector<ParamSet> all = {interval_set(cfg, 0, 0.0, 1.0), interval_set(cfg, 1, 0.2, 0.9),
                                 interval_set(cfg, 2, 0.1, 0.8)};
    const auto out = exchange_bounds(all, cfg);
    CHECK(out[0].lower()(0) == 0.2);
    CHECK(out[0].upper()(0) == 0.9);
    CHECK(out[1].lower()(0) == 0.2);
    CHECK(out[1].upper()(0) == 0.8);
    CHECK(out[2].lower()(0) == 0.2);
    CHECK(out[2].upper()(0) == 0.8);
}

TEST_CASE("exchange requires axis-aligned rows") {
    const NetworkConfig cfg = shared_parameter_network({{0, 1}, {0, 1}});
    auto all = initial_param_sets(build_redundant_theta(cfg));
    auto rows = std::make_shared<AgentThetaRows>(*all[1].rows);
    rows->upper[0] = -1;
    all[1].rows = rows;
    try {
        exchange_bounds(all, cfg);
        FAIL("expected MissingAxisBound");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::MissingAxisBound);
    }
}

TEST_CASE("identification step: unbounded disturbance gives no tightening") {
    const NetworkConfig cfg = shared_parameter_network({{0, 1}, {0, 1}}, INFINITY);
    const GlobalModel g = assemble_global(cfg);
    const auto all = initial_param_sets(build_redundant_theta(cfg));
    const Transition tr{vec({1.0, -0.5}), vec({0.2, 0.1}), vec({0.9, 0.3})};
    for (IdentMode mode : {IdentMode::Decentralized, IdentMode::Distributed}) {
        const auto out = run_identification_step(mode, cfg, g, tr, all);
        for (std::size_t s = 0; s < out.size(); ++s) CHECK(out[s].h == all[s].h);
    }
}

TEST_CASE("identification step: distributed mode transfers an informed agent's bounds") {
    const NetworkConfig cfg = shared_parameter_network({{0, 1}, {0, 1}});
    const GlobalModel g = assemble_global(cfg);
    const auto all = initial_param_sets(build_redundant_theta(cfg));
    // Agent 1 has a zero regressor; agent 0 sees x = 1 -> 0.6 with u = 0.
    const Transition tr{vec({1.0, 0.0}), vec({0.0, 0.0}), vec({0.6, 0.01})};
    const auto dec = run_identification_step(IdentMode::Decentralized, cfg, g, tr, all);
    CHECK(dec[0].lower()(0) == doctest::Approx(0.55).epsilon(1e-9));
    CHECK(dec[0].upper()(0) == doctest::Approx(0.65).epsilon(1e-9));
    CHECK(dec[1].h == all[1].h);
    const auto dist = run_identification_step(IdentMode::Distributed, cfg, g, tr, all);
    CHECK(dist[1].h == dec[0].h);
    CHECK(dist[0].h == dec[0].h);
}

TEST_CASE("true parameter is never falsified over 1000 random chain transitions") {
    const NetworkConfig cfg = bundled();
    const GlobalModel g = assemble_global(cfg);
    const auto box = cfg.theta0().as_box();
    std::mt19937_64 rng(17);
    int checked = 0;
    for (int t = 0; t < 1000; ++t) {
        const Vec th = uniform_in(rng, box->first, box->second);
        const Vec x = uniform_vec(rng, 10, -5, 5), u = uniform_vec(rng, 5, -5, 5), w = uniform_vec(rng, 10, -0.05, 0.05);
        const Vec xn = step_truth(g, th, x, u, w);
        for (int s = 0; s < 5; ++s) {
            const AgentModel& a = cfg.agents[static_cast<std::size_t>(s)].model;
            const NonFalsifiedSet d = non_falsified(a, own_slice(g, g.x_offset, s, xn), neighborhood_slice(cfg, g, s, x),
                                                    own_slice(g, g.u_offset, s, u));
            Vec th_l(a.p());
            for (int i = 0; i < a.p(); ++i) th_l(i) = th(a.params[static_cast<std::size_t>(i)]);
            CHECK_FALSE(d.empty);
            CHECK((d.H * th_l - d.h).maxCoeff() <= 1e-12);
            ++checked;
        }
    }
    CHECK(checked == 5000);
}

TEST_CASE("closed run of set membership: soundness, monotonicity and distributed tightness") {
    const NetworkConfig cfg = bundled();
    const GlobalModel g = assemble_global(cfg);
    const auto box = cfg.theta0().as_box();
    std::mt19937_64 rng(23);
    const Vec th = uniform_in(rng, box->first, box->second);
    auto dec = initial_param_sets(build_redundant_theta(cfg));
    auto dist = dec;
    bool strict = false;
    for (int k = 0; k < 200; ++k) {
        // Small random states keep the regressors weak so that both modes stay informative for long.
        const Vec x = uniform_vec(rng, 10, -0.5, 0.5), u = uniform_vec(rng, 5, -1, 1), w = uniform_vec(rng, 10, -0.05, 0.05);
        const Transition tr{x, u, step_truth(g, th, x, u, w)};
        const auto dec_next = run_identification_step(IdentMode::Decentralized, cfg, g, tr, dec);
        const auto dist_next = run_identification_step(IdentMode::Distributed, cfg, g, tr, dist);
        for (int s = 0; s < 5; ++s) {
            const auto su = static_cast<std::size_t>(s);
            const AgentModel& a = cfg.agents[su].model;
            Vec th_l(a.p());
            for (int i = 0; i < a.p(); ++i) th_l(i) = th(a.params[static_cast<std::size_t>(i)]);
            CHECK(dec_next[su].contains(th_l));
            CHECK(dist_next[su].contains(th_l));
            CHECK((dec_next[su].h.array() <= dec[su].h.array()).all());
            CHECK((dist_next[su].h.array() <= dist[su].h.array()).all());
            for (int i = 0; i < a.p(); ++i) {
                CHECK(width(dist_next[su], i) <= width(dec_next[su], i) + 1e-9);
                // Inside the intersection of every owner's decentralized interval.
                const int gi = a.params[static_cast<std::size_t>(i)];
                for (int sg : a.neighbors) {
                    const int j = cfg.agents[static_cast<std::size_t>(sg)].model.local_param(gi);
                    if (j < 0) continue;
                    CHECK(dist_next[su].upper()(i) <= dec_next[static_cast<std::size_t>(sg)].upper()(j) + 1e-9);
                    CHECK(dist_next[su].lower()(i) >= dec_next[static_cast<std::size_t>(sg)].lower()(j) - 1e-9);
                }
                if (width(dist_next[su], i) < width(dec_next[su], i) - 1e-9) strict = true;
            }
        }
        dec = dec_next;
        dist = dist_next;
    }
    CHECK(strict);
}

TEST_CASE("LMS step size from the constraint box") {
    const NetworkConfig sc = scalar_theta_plant(0.0, 1.0, 0.05);
    CHECK(lms_step_size(sc, assemble_global(sc), 0) == doctest::Approx(0.25));
    // Chain: each regressor column is h (p_other - p_self) on the velocity row,
    // at most 0.1 * 10 in magnitude over the box |p| <= 5.
    const NetworkConfig cfg = bundled();
    const GlobalModel g = assemble_global(cfg);
    CHECK(lms_step_size(cfg, g, 0) == doctest::Approx(0.5 / 2.0));
    CHECK(lms_step_size(cfg, g, 2) == doctest::Approx(0.5 / 3.0));
    CHECK(lms_step_size(cfg, g, 4) == doctest::Approx(0.5 / 2.0));
}

TEST_CASE("LMS: zero error, interior updates and noiseless convergence") {
    const NetworkConfig cfg = scalar_theta_plant(0.0, 1.0, 0.0);
    const AgentModel& a = cfg.agents[0].model;
    const ParamSet ps = initial_param_sets(build_redundant_theta(cfg))[0];
    LmsState lms{vec({0.3}), lms_step_size(cfg, assemble_global(cfg), 0)};

    // x+ predicted exactly: unchanged.
    LmsState out = lms_update(lms, a, vec({0.6}), vec({2.0}), vec({0.0}), ps);
    CHECK(out.theta == lms.theta);

    // Interior step equals the unprojected formula.
    out = lms_update(lms, a, vec({0.5}), vec({1.0}), vec({0.0}), ps);
    CHECK(out.theta(0) == doctest::Approx(0.3 + 0.25 * 1.0 * (0.5 - 0.3)));

    // Noiseless plant with theta* = 0.7: error strictly decreasing below 1e-3.
    std::mt19937_64 rng(2);
    double prev = std::abs(lms.theta(0) - 0.7);
    for (int k = 0; k < 100; ++k) {
        const double x = std::uniform_real_distribution<double>(0.5, 1.0)(rng);
        lms = lms_update(lms, a, vec({0.7 * x}), vec({x}), vec({0.0}), ps);
        const double err = std::abs(lms.theta(0) - 0.7);
        CHECK(err < prev);
        prev = err;
    }
    CHECK(prev < 1e-3);
}

TEST_CASE("projection onto a box clamps, and onto a general set solves the QP") {
    const NetworkConfig cfg = scalar_theta_plant(0.0, 1.0, 0.05);
    const ParamSet ps = initial_param_sets(build_redundant_theta(cfg))[0];
    CHECK(project_onto(ps, vec({1.7}))(0) == 1.0);
    CHECK(project_onto(ps, vec({-0.2}))(0) == 0.0);
    CHECK(project_onto(ps, vec({0.4}))(0) == 0.4);

    // Triangle theta_1, theta_2 >= 0, theta_1 + theta_2 <= 1 on a two-parameter agent.
    auto rows = std::make_shared<AgentThetaRows>();
    rows->H = mat({{-1, 0}, {0, -1}, {1, 1}});
    rows->h0 = vec({0, 0, 1});
    rows->upper = {-1, -1};
    rows->lower = {0, 1};
    ParamSet tri;
    tri.rows = rows;
    tri.h = rows->h0;
    // Closed form: from (1, 1) the projection is (0.5, 0.5); from (2, -1) it is (1, 0).
    CHECK((project_onto(tri, vec({1, 1})) - vec({0.5, 0.5})).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((project_onto(tri, vec({2, -1})) - vec({1, 0})).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((project_onto(tri, vec({0.2, 0.3})) - vec({0.2, 0.3})).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("projected LMS stays inside the set and does not diverge on a noisy chain run") {
    const NetworkConfig cfg = bundled();
    const GlobalModel g = assemble_global(cfg);
    const auto box = cfg.theta0().as_box();
    std::mt19937_64 rng(31);
    const Vec th = uniform_in(rng, box->first, box->second);
    auto sets = initial_param_sets(build_redundant_theta(cfg));
    std::vector<LmsState> lms;
    for (int s = 0; s < 5; ++s) {
        const AgentModel& a = cfg.agents[static_cast<std::size_t>(s)].model;
        Vec c(a.p());
        for (int i = 0; i < a.p(); ++i) c(i) = cfg.theta.nominal(a.params[static_cast<std::size_t>(i)]);
        lms.push_back({c, lms_step_size(cfg, g, s)});
    }
    double initial_err = 0.0, final_err = 0.0;
    for (int k = 0; k < 300; ++k) {
        const Vec x = uniform_vec(rng, 10, -5, 5), u = uniform_vec(rng, 5, -5, 5), w = uniform_vec(rng, 10, -0.05, 0.05);
        const Transition tr{x, u, step_truth(g, th, x, u, w)};
        sets = run_identification_step(IdentMode::Distributed, cfg, g, tr, sets);
        for (int s = 0; s < 5; ++s) {
            const auto su = static_cast<std::size_t>(s);
            const AgentModel& a = cfg.agents[su].model;
            Vec th_l(a.p());
            for (int i = 0; i < a.p(); ++i) th_l(i) = th(a.params[static_cast<std::size_t>(i)]);
            if (k == 0) initial_err += (lms[su].theta - th_l).squaredNorm();
            lms[su] = lms_update(lms[su], a, own_slice(g, g.x_offset, s, tr.x_now), neighborhood_slice(cfg, g, s, x),
                                 own_slice(g, g.u_offset, s, u), sets[su]);
            CHECK(sets[su].contains(lms[su].theta));
            if (k == 299) final_err += (lms[su].theta - th_l).squaredNorm();
        }
    }
    CHECK(std::isfinite(final_err));
    CHECK(final_err <= initial_err + 1e-12);
}
