#pragma once

#include "dampc/polytope.hpp"

#include <optional>
#include <string>

namespace dampc {

// One agent's slice of the interconnected dynamics
//   x+_s = (A_0 + sum_i A_i [theta_s]_i) x_{N_s} + (B_0 + sum_i B_i [theta_s]_i) u_s + w_s.
struct AgentModel {
    int id = 0;
    std::vector<int> neighbors;  // sorted ascending, contains id
    int n = 0;                   // own state dimension
    int m = 0;                   // own input dimension
    std::vector<int> params;     // local parameter index -> global index
    std::vector<Mat> A;          // params.size() + 1 blocks, n x nbhd_dim
    std::vector<Mat> B;          // params.size() + 1 blocks, n x m
    Mat F;                       // Z rows over x_{N_s}, right-hand side 1
    Mat G;                       // Z rows over u_s
    Vec w_lo, w_hi;              // W_s box

    int p() const { return static_cast<int>(params.size()); }
    int nbhd_dim() const { return static_cast<int>(nbhd_offset.empty() ? 0 : nbhd_offset.back()); }
    int self_pos() const;
    int local_param(int global) const;  // -1 when not owned
    Mat A_of(const Vec& theta_local) const;
    Mat B_of(const Vec& theta_local) const;
    // Columns per local parameter: A_i x + B_i u.
    Mat regressor(const Vec& x_nbhd, const Vec& u) const;

    // Filled by finalize(): offsets of each neighbor's states inside x_{N_s},
    // with a trailing total (size neighbors.size() + 1).
    std::vector<int> nbhd_offset;
};

struct AgentSpec {
    AgentModel model;
    Mat Q, R, P;    // cost blocks on own states / inputs
    Mat K;          // m x nbhd_dim
    Mat Hx;         // tube rows, right-hand side 1
    VertexSet X0;   // vertices of {H_x x <= 1}
    Vec x0;         // initial own state
};

struct AdmmSettings {
    double rho = 25.0;
    int iterations = 400;
    double tolerance = 1e-4;
    double margin = 1e-3;  // tightening used while iterating, removed on acceptance
    int recovery_rounds = 9;  // extra rounds of `iterations` while the completed plan is infeasible
};

struct SimSettings {
    int steps = 60;
    int seeds = 25;
    double kappa = 1.0;
    std::vector<double> kappa_grid;
};

// Either an explicit polytope or a box nominal +- kappa * radius.
struct ThetaSpec {
    std::optional<Polytope> explicit_set;
    Vec nominal;
    Vec radius;

    bool scaled() const { return !explicit_set.has_value(); }
    Polytope at(double kappa) const;
};

struct NetworkConfig {
    std::string name;
    std::vector<AgentSpec> agents;
    int num_params = 0;
    ThetaSpec theta;
    std::optional<Vec> theta_star;  // pinned true parameter
    int horizon = 5;
    AdmmSettings admm;
    SimSettings sim;

    int num_agents() const { return static_cast<int>(agents.size()); }
    Polytope theta0() const { return theta.at(sim.kappa); }
    // Validates every invariant; throws with a field path in the message.
    void validate() const;
};

struct GlobalModel {
    std::vector<Mat> A;  // p + 1 matrices n x n
    std::vector<Mat> B;  // p + 1 matrices n x m
    Polytope theta0;
    Vec w_lo, w_hi;
    Mat F, G;
    std::vector<int> x_offset, u_offset, z_offset;  // per agent, trailing total

    int n() const { return static_cast<int>(A.front().rows()); }
    int m() const { return static_cast<int>(B.front().cols()); }
    int p() const { return static_cast<int>(A.size()) - 1; }
    Mat A_of(const Vec& theta) const;
    Mat B_of(const Vec& theta) const;
    Mat regressor(const Vec& x, const Vec& u) const;  // D(x,u), n x p
};

// Sets nbhd_offset from the neighbor dimensions of all agents.
void finalize_agents(std::vector<AgentSpec>& agents);

NetworkConfig load_config(const std::string& path);
NetworkConfig parse_config(const std::string& json_text, const std::string& origin = "<string>");
std::string config_to_json(const NetworkConfig& cfg);

GlobalModel assemble_global(const NetworkConfig& cfg);
// Inverse of assemble_global: cuts neighborhood blocks out of the global matrices.
std::vector<AgentModel> split_global(const GlobalModel& g, const NetworkConfig& layout);

// x+ = A(theta*) x + B(theta*) u + w. Throws DisturbanceOutsideW when w
// leaves the box by more than 1e-12.
Vec step_truth(const GlobalModel& model, const Vec& theta_star, const Vec& x, const Vec& u, const Vec& w);

struct ChainSpec {
    Vec masses;
    Vec dampers;          // one per link
    Vec spring_nominal;   // one per link
    Vec spring_radius;    // one per link
    double kappa = 1.0;
    double h = 0.1;
    double state_bound = 5.0;
    double input_bound = 5.0;
    double w_bound = 0.05;
};

// Euler-discretised chain with states (position, velocity) per mass. Link j
// joins masses j and j+1; its spring constant is global parameter j. Costs
// default to Q = I, R = 5, P = 100 per agent; K and the tube are left empty.
NetworkConfig build_msd_benchmark(const ChainSpec& spec);

// Hash of a canonical serialisation, used in run manifests.
std::string config_digest(const NetworkConfig& cfg);

}  // namespace dampc
