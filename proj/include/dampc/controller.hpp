#pragma once

#include "dampc/identification.hpp"
#include "dampc/qp.hpp"

#include <string>

namespace dampc {

// Compact form: tube propagation written once per vertex of a box Theta_k,s,
// with the vertex maxima over the tube folded into constants. Literal form:
// one multiplier block per neighborhood vertex combination. Both describe the
// same feasible set in (z, alpha, v) when Theta_k,s is a box.
enum class TubeForm { Compact, Literal };

// Read-only view of everything the controller sees at time k.
struct StepView {
    const NetworkConfig& cfg;
    const GlobalModel& model;
    const TubeDesign& design;
    const std::vector<ParamSet>& sets;     // Theta_k,s per agent
    const std::vector<Vec>& theta_hat;     // point estimate per agent
    const Vec& x;                          // global state x_k
};

// One agent's own trajectory. z[N] = 0, xhat[0] = x_k,s.
struct LocalDecision {
    std::vector<Vec> z;       // N + 1
    std::vector<Vec> v;       // N
    Vec alpha;                // N + 1
    std::vector<Vec> xhat;    // N + 1
    std::vector<Vec> uhat;    // N
    std::vector<Mat> lambda;  // literal form only, index l * J + j
    double cost = 0.0;        // own stage and terminal cost
};

struct Plan {
    std::vector<LocalDecision> agents;
    double cost = 0.0;
};

// Position of each block in a local decision vector. The shared copies come
// first, one segment per neighbor: z_0..z_{N-1}, alpha_0..alpha_{N-1},
// xhat_1..xhat_{N-1}. Then the private v_0..v_{N-1}, xhat_N and multipliers.
struct LocalLayout {
    int N = 0;
    int m = 0;
    std::vector<int> dims;        // state dimension per neighbor position
    std::vector<int> seg_offset;  // per neighbor position, trailing total
    int v_offset = 0;
    int xN_offset = 0;
    int lambda_offset = 0;
    int lambda_rows = 0, lambda_cols = 0, combos = 0;
    int size = 0;

    int copies() const { return seg_offset.back(); }
    int z(int k, int l) const { return seg_offset[k] + l * dims[k]; }
    int alpha(int k, int l) const { return seg_offset[k] + N * dims[k] + l; }
    int xhat(int k, int l) const { return seg_offset[k] + N * dims[k] + N + (l - 1) * dims[k]; }  // l >= 1
    int v(int l) const { return v_offset + l * m; }
    int lambda(int l, int j) const { return lambda_offset + (l * combos + j) * lambda_rows * lambda_cols; }
};

// Length of the shared segment an agent with state dimension n contributes.
inline int shared_segment_size(int n, int N) { return (2 * N - 1) * n + N; }

struct ConstraintFamily {
    std::string name;
    bool equality = false;
    Eigen::Index begin = 0;
    Eigen::Index rows = 0;
};

// minimize 0.5 y'Hy + g'y + constant subject to the listed families.
struct LocalQp {
    int agent = 0;
    TubeForm form = TubeForm::Compact;
    LocalLayout layout;
    Mat H;
    Vec g;
    double constant = 0.0;
    Vec x_own, x_nbhd;  // x_k,s and x_k,N_s
    Mat A_eq, A_in;
    Vec b_eq, b_in;
    std::vector<ConstraintFamily> families;

    const ConstraintFamily& family(const std::string& name) const;
    QpProblem as_qp() const;
};

// Family sizes of the problem build_local_subproblem would produce, without
// building it. The terminal constraints z_N = 0 and alpha_N <= alpha_bar are
// substituted into the last propagation step and have no rows of their own.
std::vector<ConstraintFamily> family_counts(const NetworkConfig& cfg, const TubeDesign& design, int s,
                                            const ParamSet& ps, TubeForm form);

// Agent s's subproblem. `margin` tightens the state/input, propagation and
// terminal rows. Throws DesignMismatch, EmptyParamSet.
LocalQp build_local_subproblem(const StepView& step, int s, TubeForm form, double margin);

// Own decision read from a local solution vector.
LocalDecision read_local(const StepView& step, const LocalQp& qp, const Vec& y);

struct ConsensusReport {
    std::vector<double> primal;  // max_s ||C_s - T_{N_s}||_inf per iteration
    std::vector<double> dual;    // rho ||T^{t+1} - T^t||_inf per iteration
    int iterations = 0;
    bool converged = false;
    std::vector<double> agent_objective;
};

// Global copy T and the per-agent duals Y.
struct AdmmState {
    Vec T;
    std::vector<Vec> Y;
    bool empty() const { return T.size() == 0; }
};

struct AdmmOutcome {
    Plan plan;  // shared blocks from T, private blocks from the agents
    ConsensusReport report;
    AdmmState state;
};

// Segment offsets of every agent inside T, trailing total.
std::vector<int> consensus_offsets(const NetworkConfig& cfg);

// Global consensus iterations. Starts from `warm` when given, else zeros.
// Throws LocalInfeasible naming the agent.
AdmmOutcome admm_solve(const StepView& step, const AdmmSettings& settings, const AdmmState* warm = nullptr,
                       TubeForm form = TubeForm::Compact);

// Shared blocks of a plan packed in T layout.
Vec pack_consensus(const NetworkConfig& cfg, const Plan& plan);

// Shift by one step: T and Y for time k+1 from the plan accepted at k.
AdmmState shift_state(const NetworkConfig& cfg, const Plan& accepted, const AdmmState& prev);

// Worst violation of the untightened constraints, with the row that attains it.
struct FeasibilityReport {
    double residual = 0.0;
    std::string worst;
    bool ok(double tolerance) const { return residual <= tolerance; }
};

struct CompletedPlan {
    Plan plan;
    FeasibilityReport report;
};

// Keeps z and v, takes the smallest alpha the tube constraints allow from
// x_k under the current parameter sets, rolls the certainty-equivalence
// trajectory forward, and checks the state/input and terminal rows.
CompletedPlan complete_tube(const StepView& step, const Plan& plan);

// z and v shifted by one step, with v_{N-1} = 0 and z_{N-1} = z_N = 0.
Plan shifted_plan(const Plan& plan);

// u_s = K_s x_{N_s} + v_0,s
Vec extract_control(const StepView& step, const Plan& plan, int s);
Vec extract_global_control(const StepView& step, const Plan& plan);

struct TubeCheck {
    std::size_t checks = 0;
    std::size_t violations = 0;
    double worst_margin = 0.0;  // min over checks of rhs - lhs
    int worst_agent = -1;
    int worst_step = -1;
    bool ok() const { return violations == 0; }
};

// Enumerates tube vertices, parameter-set vertices and disturbance vertices,
// propagates each combination through the true model family, and checks the
// result against the next tube and Z. Uses no multipliers.
TubeCheck verify_tube(const StepView& step, const Plan& plan, double tolerance = tol::report);

// One QP over the whole network with a single unstructured multiplier per
// global vertex combination against the stacked rows of every agent's set.
struct CentralizedResult {
    SolveStatus status = SolveStatus::Infeasible;
    Plan plan;
    double cost = 0.0;
    std::vector<ConstraintFamily> families;
};

QpProblem build_centralized(const StepView& step, std::vector<ConstraintFamily>* families = nullptr);
CentralizedResult centralized_solve(const StepView& step);

// Largest violation of the centralized constraints by a plan, with the
// robust rows evaluated by support LPs over the intersection of all sets.
double centralized_violation(const StepView& step, const Plan& plan);

// Closed-loop controller: ADMM, completion, acceptance and the shifted
// fallback, with the state carried between steps.
struct StepOutcome {
    Plan plan;
    ConsensusReport report;
    FeasibilityReport accepted;         // residual of the completed ADMM plan
    bool have_candidate = false;
    FeasibilityReport candidate;        // residual of the shifted previous plan
    bool used_candidate = false;
};

class DampcController {
public:
    DampcController(const NetworkConfig& cfg, const TubeDesign& design, AdmmSettings settings,
                    TubeForm form = TubeForm::Compact);

    // Throws InfeasibleAtStep when neither the ADMM plan nor the candidate is
    // feasible, NoConvergence when the first step has no feasible plan.
    StepOutcome step(int k, const StepView& view);
    const Plan& last_plan() const { return last_; }
    void reset();

private:
    const NetworkConfig& cfg_;
    const TubeDesign& design_;
    AdmmSettings settings_;
    TubeForm form_;
    Plan last_;
    bool have_last_ = false;
    AdmmState warm_;
};

}  // namespace dampc
