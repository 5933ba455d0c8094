#pragma once

#include "dampc/design.hpp"

#include <memory>

namespace dampc {

struct ParamSet {
    int agent = 0;
    std::shared_ptr<const AgentThetaRows> rows;  // structure shared by every copy of the set
    Vec h;                                       // current right-hand side

    Eigen::Index dim() const { return rows->H.cols(); }
    Polytope polytope() const { return Polytope(rows->H, h); }
    // Axis bounds read from the flagged rows (valid when rows->axis_aligned()).
    Vec lower() const;
    Vec upper() const;
    bool contains(const Vec& theta) const;  // exact, no tolerance
};

std::vector<ParamSet> initial_param_sets(const RedundantThetaStructure& rt);

// Parameters consistent with one transition: H theta <= h with H = [-D; D].
// Rows whose regressor is identically zero are kept; `empty` is set when one
// of them is violated by the residual alone.
struct NonFalsifiedSet {
    Mat H;
    Vec h;
    bool empty = false;
};

NonFalsifiedSet non_falsified(const AgentModel& agent, const Vec& x_next, const Vec& x_nbhd, const Vec& u);

// Row-wise LP tightening of ps by delta. Throws EmptyIntersection.
ParamSet update_param_set_decentralized(const ParamSet& ps, const NonFalsifiedSet& delta);

// One synchronous round: each agent takes the min upper / max lower bound of
// every shared parameter over the neighbors that own it.
std::vector<ParamSet> exchange_bounds(const std::vector<ParamSet>& all, const NetworkConfig& cfg);

enum class IdentMode { Decentralized, Distributed };

struct Transition {
    Vec x_prev;  // global state at k-1
    Vec u_prev;  // global input at k-1
    Vec x_now;   // global state at k
};

std::vector<ParamSet> run_identification_step(IdentMode mode, const NetworkConfig& cfg, const GlobalModel& g,
                                              const Transition& tr, const std::vector<ParamSet>& all);

// Neighborhood state slice and own slices from a global vector.
Vec neighborhood_slice(const NetworkConfig& cfg, const GlobalModel& g, int s, const Vec& x);
Vec own_slice(const GlobalModel& g, const std::vector<int>& offsets, int s, const Vec& v);

struct LmsState {
    Vec theta;
    double mu = 0.0;
};

// mu_s = 0.5 / (1 + gbar_s), gbar_s = max ||D_s||_F^2 over the corners of
// the state/input box implied by the global constraint set Z.
double lms_step_size(const NetworkConfig& cfg, const GlobalModel& g, int s);

// theta + mu D'(x_next - prediction), projected onto ps.
LmsState lms_update(const LmsState& lms, const AgentModel& agent, const Vec& x_next, const Vec& x_nbhd,
                    const Vec& u, const ParamSet& ps);

// Euclidean projection onto ps: exact clamp for boxes, QP otherwise.
Vec project_onto(const ParamSet& ps, const Vec& theta);

}  // namespace dampc
