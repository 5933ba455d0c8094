#pragma once

#include "dampc/network.hpp"

namespace dampc {

struct AgentTube {
    Mat Hx;          // n_x x n_s
    VertexSet X0;    // q_s vertices
    Mat K;           // m_s x n_{N_s}
    Mat Fcl;         // F_s + G_s K_s, n_Z x n_{N_s}
    Mat fbar_nb;     // n_Z x |N_s|: column k = max over X0 of neighbor k of the F_cl block
    Vec fbar;        // row sums of fbar_nb: support of F_cl over the neighborhood product
    Vec wbar;        // support of H_x rows over W_s
    double alpha_bar = 1.0;
};

struct TubeDesign {
    std::vector<AgentTube> agents;
};

// Copies of the rows of H_theta, one per agent that owns every parameter of
// the row, expressed in that agent's local parameter coordinates.
struct AgentThetaRows {
    Mat H;                          // rows x p_s
    Vec h0;                         // right-hand side taken from theta0
    std::vector<int> global_row;    // provenance of each local row
    std::vector<int> upper, lower;  // per local parameter: row with +e_i / -e_i, or -1

    bool axis_aligned() const;      // every row is +-e_i and every parameter has both
};

struct RedundantThetaStructure {
    std::vector<AgentThetaRows> agents;
    int total_rows() const;
};

// f-bar from per-neighbor LPs over {H_x x <= 1}; w-bar from box supports.
// alpha_bar_s = min(1, 1 / max_i fbar_t,i over every agent t whose F_cl has a
// nonzero block on agent s), which equals 1 / max_i fbar_s,i when each
// agent's constraint rows touch only its own states.
TubeDesign compute_offline_constants(const NetworkConfig& cfg);

// Same constants from vertex maxima, as an independent cross-check.
TubeDesign compute_offline_constants_by_vertices(const NetworkConfig& cfg);

RedundantThetaStructure build_redundant_theta(const NetworkConfig& cfg);
RedundantThetaStructure build_redundant_theta(const NetworkConfig& cfg, const Polytope& theta0);

// Global feedback matrix from the neighborhood blocks K_s.
Mat assemble_gain(const NetworkConfig& cfg);

struct GainReport {
    bool checked = false;  // false when theta0 is not a box
    double max_radius = 0.0;
    std::vector<double> radii;  // one per theta0 vertex
    bool stable() const { return checked && max_radius < 1.0; }
};

GainReport validate_gain(const NetworkConfig& cfg);

struct TerminalViolation {
    int agent = 0;
    int row = 0;
    Vec theta;
    double lhs = 0.0;
    double rhs = 0.0;
};

struct TerminalReport {
    bool checked = false;
    std::size_t checks = 0;
    double worst_excess = 0.0;  // max(lhs - rhs), may be negative
    std::vector<TerminalViolation> violations;
    bool invariant() const { return checked && violations.empty(); }
};

// Exhaustive check of H_x (A_cl(theta) x) + w-bar <= alpha_bar over every
// product of alpha_bar-scaled neighbor tube vertices and every theta0 corner.
TerminalReport validate_terminal_set(const TubeDesign& design, const NetworkConfig& cfg);

std::string design_report_json(const NetworkConfig& cfg, const TubeDesign& design, const GainReport& gain,
                               const TerminalReport& terminal);

// Design recipe used to produce the bundled chain configuration: per agent,
// an LQR gain on the agent's own states (nominal self-spring terms), and a
// polygon with `rows` facets circumscribing the closed-loop Lyapunov ellipse,
// scaled so that max_i fbar_s,i = scale.
void apply_reference_chain_design(NetworkConfig& cfg, int rows, double q_weight, double r_weight, double scale);

}  // namespace dampc
