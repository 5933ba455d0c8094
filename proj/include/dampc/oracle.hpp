#pragma once

#include "dampc/sim.hpp"

namespace dampc {

// Scalar networks small enough for the centralized literal solve. One agent:
// x+ = (1 + 0.1 theta) x + u + w. Two agents: a diffusive link with gain
// 0.1 theta shared by both, and a second parameter on agent 1's input.
NetworkConfig oracle_toy(int agents);

struct OracleCase {
    Vec x;
    bool feasible = false;          // centralized problem solvable at x
    bool structured_feasible = false;
    double structured_cost = 0.0;   // completed ADMM plan
    double centralized_cost = 0.0;
    double gap = 0.0;               // (structured - centralized) / |centralized|
    double violation = 0.0;         // structured plan against the centralized constraints
    double primal = 0.0;
    int iterations = 0;
    bool converged = false;
};

struct OracleReport {
    std::vector<OracleCase> cases;
    double max_gap = 0.0;
    double min_gap = 0.0;
    double max_violation = 0.0;
    int solved = 0;
};

// Compares admm_solve + complete_tube against centralized_solve at x0 and at
// `states` further states drawn uniformly from half the state bounds.
OracleReport oracle_check(const NetworkConfig& cfg, int states, std::uint64_t seed, const AdmmSettings& admm);

std::string oracle_report_json(const OracleReport& r);

}  // namespace dampc
