#pragma once

#include "dampc/controller.hpp"

#include <cstdint>
#include <random>

namespace dampc {

enum class Mode { Drmpc, DampcDecentralized, DampcDistributed };

const char* mode_name(Mode mode);  // drmpc, dampc-dec, dampc-dist
Mode parse_mode(const std::string& name);
inline constexpr Mode kAllModes[] = {Mode::Drmpc, Mode::DampcDecentralized, Mode::DampcDistributed};

// Configuration plus every offline quantity a run needs. Built once per
// kappa and shared read-only between runs.
struct Experiment {
    NetworkConfig cfg;
    GlobalModel model;
    TubeDesign design;
    RedundantThetaStructure theta_rows;
    std::vector<double> mu;  // LMS step size per agent
};

Experiment prepare_experiment(const NetworkConfig& cfg);

// Independent streams derived from one seed.
enum class Stream : std::uint64_t { Theta = 1, Disturbance = 2 };
std::mt19937_64 make_rng(std::uint64_t seed, Stream stream);

// Uniform in [0, 1) from the top 53 bits, identical on every platform.
double uniform01(std::mt19937_64& rng);

// Uniform sample of the global disturbance box.
Vec sample_disturbance(const Vec& w_lo, const Vec& w_hi, std::mt19937_64& rng);

// Pinned theta_star if the config has one, else uniform over Theta_0
// (rejection from the bounding box for a general polytope).
Vec draw_theta_star(const Experiment& ex, std::uint64_t seed);

struct SimOptions {
    int steps = 60;
    AdmmSettings admm;
    bool verify_tubes = true;
    bool shadow_decentralized = false;  // decentralized identifier run alongside, not used for control
};

struct AgentStepRecord {
    double cost = 0.0;   // planned own cost
    double alpha0 = 0.0;
    Vec lower, upper;    // Theta_k,s bounds
    Vec shadow_lower, shadow_upper;
    Vec theta_hat;
};

struct StepRecord {
    int k = 0;
    Vec x, u, w;
    double stage_cost = 0.0;
    int iterations = 0;
    double primal = 0.0, dual = 0.0;
    bool converged = false;
    bool used_candidate = false;
    double candidate_residual = 0.0;  // NaN at k = 0
    TubeCheck tube;
    double z_violation = 0.0;         // max(F x + G u - 1)
    std::vector<AgentStepRecord> agents;
};

struct SimRun {
    Mode mode = Mode::Drmpc;
    std::uint64_t seed = 0;
    double kappa = 0.0;
    Vec theta_star;
    std::vector<StepRecord> steps;
    double cost = 0.0;  // sum of stage costs
    bool completed = false;
    std::string failure;
    ErrorKind failure_kind = ErrorKind::InfeasibleAtStep;

    // Summaries over the run.
    double max_z_violation = 0.0;
    double max_abs_state = 0.0, max_abs_input = 0.0;
    bool ident_sound = true;     // theta_star in every Theta_k,s
    bool ident_monotone = true;  // h never grows
    std::size_t tube_violations = 0;
    double worst_tube_margin = 0.0;
    double worst_candidate_residual = 0.0;
    int candidate_checks = 0;
    int fallbacks = 0;
    int max_iterations = 0;
    double tail_state_ratio = 0.0;  // mean ||x|| over the last 10 steps / ||x_0||

    // Against the shadow identifier, when it runs. Excesses are how far a
    // bound of the controlling sets lies outside the reference interval.
    double shadow_excess = 0.0;           // vs the agent's own decentralized interval
    double owner_excess = 0.0;            // vs the intersection over all owners
    int strict_improvements = 0;          // (k, agent, parameter) strictly inside that intersection
};

SimRun simulate(const Experiment& ex, Mode mode, const Vec& theta_star, std::uint64_t seed, const SimOptions& opt);

struct ModeSummary {
    Mode mode = Mode::Drmpc;
    double mean_cost = 0.0;
    double pct_decrease = 0.0;  // 100 (J_drmpc - J) / J_drmpc
    int completed = 0;
};

struct KappaSummary {
    double kappa = 0.0;
    std::vector<ModeSummary> modes;  // in kAllModes order
};

struct ExperimentResult {
    std::vector<KappaSummary> table;
    std::vector<SimRun> runs;  // ordered by (kappa, mode, seed)
};

// Seeds are 0..n_seeds-1, paired across modes and kappa values. `jobs`
// worker threads; the result does not depend on it.
ExperimentResult run_table2(const NetworkConfig& cfg, const std::vector<double>& kappas, int n_seeds,
                            const SimOptions& opt, int jobs = 1, const std::vector<Mode>& modes = {});

// Distributed run with a shadow decentralized identifier on the same trajectory.
SimRun run_figure3(const NetworkConfig& cfg, std::uint64_t seed, const SimOptions& opt);

// CSV writers; numbers use 12 significant digits.
std::string format_number(double v);
std::string table2_csv(const ExperimentResult& r);
std::string runs_csv(const ExperimentResult& r);
std::string trace_csv(const SimRun& run);
std::string trajectory_csv(const SimRun& run);
std::string fig3_csv(const Experiment& ex, const SimRun& run);

}  // namespace dampc
