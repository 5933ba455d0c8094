#pragma once

#include "dampc/design.hpp"

#include <random>

#ifndef DAMPC_SOURCE_DIR
#define DAMPC_SOURCE_DIR "."
#endif

namespace testing {

using dampc::Mat;
using dampc::Vec;

inline Vec vec(std::initializer_list<double> xs) {
    Vec v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v(i++) = x;
    return v;
}

inline Mat mat(std::initializer_list<std::initializer_list<double>> rows) {
    const auto r = static_cast<Eigen::Index>(rows.size());
    const auto c = r == 0 ? 0 : static_cast<Eigen::Index>(rows.begin()->size());
    Mat M(r, c);
    Eigen::Index i = 0;
    for (const auto& row : rows) {
        Eigen::Index j = 0;
        for (double x : row) M(i, j++) = x;
        ++i;
    }
    return M;
}

inline Vec uniform_vec(std::mt19937_64& rng, Eigen::Index n, double lo, double hi) {
    std::uniform_real_distribution<double> U(lo, hi);
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = U(rng);
    return v;
}

inline Vec uniform_in(std::mt19937_64& rng, const Vec& lo, const Vec& hi) {
    Vec v(lo.size());
    for (Eigen::Index i = 0; i < lo.size(); ++i) v(i) = std::uniform_real_distribution<double>(lo(i), hi(i))(rng);
    return v;
}

inline std::string bundled_config_path() { return DAMPC_SOURCE_DIR "/configs/mass_spring_damper_5.json"; }

inline dampc::NetworkConfig bundled(double kappa = 1.0) {
    dampc::NetworkConfig cfg = dampc::load_config(bundled_config_path());
    cfg.sim.kappa = kappa;
    return cfg;
}

// Scalar agent with unit-interval tube and |x|, |u| <= 1 constraints.
struct ScalarAgent {
    std::vector<int> neighbors;
    std::vector<int> params;
    Mat A0;                  // 1 x |neighbors|
    std::vector<Mat> Ai;     // per local parameter
    double b0 = 1.0;
    double w = 0.0;
    double x0 = 0.0;
    double k_self = 0.0;     // feedback on the own state
    double x_bound = 1.0;
    double u_bound = 1.0;
    double q = 1.0, r = 1.0, p = 1.0;
    double tube = 1.0;       // X0 = [-tube, tube]
};

inline dampc::NetworkConfig scalar_network(const std::vector<ScalarAgent>& agents, int num_params, const Vec& nominal,
                                           const Vec& radius, int horizon = 3) {
    dampc::NetworkConfig cfg;
    cfg.name = "toy";
    cfg.num_params = num_params;
    cfg.theta.nominal = nominal;
    cfg.theta.radius = radius;
    cfg.sim.kappa = 1.0;
    cfg.horizon = horizon;
    for (std::size_t s = 0; s < agents.size(); ++s) {
        const ScalarAgent& t = agents[s];
        dampc::AgentSpec spec;
        dampc::AgentModel& a = spec.model;
        a.id = static_cast<int>(s);
        a.neighbors = t.neighbors;
        a.n = 1;
        a.m = 1;
        a.params = t.params;
        a.A.push_back(t.A0);
        for (const Mat& M : t.Ai) a.A.push_back(M);
        a.B.assign(t.params.size() + 1, Mat::Zero(1, 1));
        a.B[0](0, 0) = t.b0;
        const auto nb = static_cast<Eigen::Index>(t.neighbors.size());
        const int self = static_cast<int>(std::find(t.neighbors.begin(), t.neighbors.end(), a.id) - t.neighbors.begin());
        a.F = Mat::Zero(4, nb);
        a.G = Mat::Zero(4, 1);
        a.F(0, self) = 1.0 / t.x_bound;
        a.F(1, self) = -1.0 / t.x_bound;
        a.G(2, 0) = 1.0 / t.u_bound;
        a.G(3, 0) = -1.0 / t.u_bound;
        a.w_lo = Vec::Constant(1, -t.w);
        a.w_hi = Vec::Constant(1, t.w);
        spec.Q = Mat::Constant(1, 1, t.q);
        spec.R = Mat::Constant(1, 1, t.r);
        spec.P = Mat::Constant(1, 1, t.p);
        spec.K = Mat::Zero(1, nb);
        spec.K(0, self) = t.k_self;
        spec.Hx = mat({{1.0 / t.tube}, {-1.0 / t.tube}});
        spec.X0.vertices = {vec({t.tube}), vec({-t.tube})};
        spec.x0 = vec({t.x0});
        cfg.agents.push_back(std::move(spec));
    }
    dampc::finalize_agents(cfg.agents);
    cfg.validate();
    return cfg;
}

}  // namespace testing
