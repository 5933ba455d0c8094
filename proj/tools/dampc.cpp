// Command-line entry points: validate, simulate, table2, fig3, oracle-check.
#include "dampc/oracle.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iostream>
#include <optional>

namespace {

using namespace dampc;
using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

enum Exit { kOk = 0, kInvalid = 1, kInfeasible = 2, kUsage = 3 };

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InfeasibleAtStep:
        case ErrorKind::NoConvergence:
        case ErrorKind::LocalInfeasible:
        case ErrorKind::IdentificationFault:
        case ErrorKind::EmptyIntersection:
        case ErrorKind::EmptyParamSet: return kInfeasible;
        default: return kInvalid;
    }
}

struct Options {
    std::string config = "configs/mass_spring_damper_5.json";
    std::vector<double> kappa;
    std::optional<int> seeds;
    std::string mode;
    std::optional<double> rho;
    std::optional<int> admm_iters;
    std::optional<int> tsim;
    int jobs = 1;
    bool strict = false;
    std::string out = "out";
};

void add_config(CLI::App* cmd, Options& o) { cmd->add_option("--config", o.config, "network configuration JSON"); }
void add_kappa(CLI::App* cmd, Options& o, bool list) {
    auto* opt = cmd->add_option("--kappa", o.kappa, list ? "uncertainty scalings, comma separated" : "uncertainty scaling");
    opt->check(CLI::Range(0.0, 1.0));
    if (list) opt->delimiter(',');
    else opt->expected(1);
}
void add_admm(CLI::App* cmd, Options& o) {
    cmd->add_option("--rho", o.rho, "ADMM penalty")->check(CLI::PositiveNumber);
    cmd->add_option("--admm-iters", o.admm_iters, "ADMM iteration cap")->check(CLI::Range(1, 1000000));
}
void add_sim(CLI::App* cmd, Options& o) {
    cmd->add_option("--tsim", o.tsim, "closed-loop steps")->check(CLI::Range(1, 100000));
    cmd->add_option("--seeds", o.seeds, "number of seeds (0..n-1)")->check(CLI::Range(1, 100000));
}
void add_out(CLI::App* cmd, Options& o) { cmd->add_option("--out", o.out, "output directory"); }

NetworkConfig load(const Options& o) {
    NetworkConfig cfg = load_config(o.config);
    if (!o.kappa.empty()) cfg.sim.kappa = o.kappa.front();
    if (o.rho) cfg.admm.rho = *o.rho;
    if (o.admm_iters) cfg.admm.iterations = *o.admm_iters;
    if (o.tsim) cfg.sim.steps = *o.tsim;
    if (o.seeds) cfg.sim.seeds = *o.seeds;
    cfg.validate();
    return cfg;
}

SimOptions sim_options(const NetworkConfig& cfg) {
    SimOptions so;
    so.steps = cfg.sim.steps;
    so.admm = cfg.admm;
    return so;
}

std::string out_path(const Options& o, const std::string& name) { return (std::filesystem::path(o.out) / name).string(); }

json manifest(const std::string& command, const Options& o, const NetworkConfig& cfg, const std::vector<double>& kappas,
              const std::vector<std::string>& outputs) {
    json j;
    j["tool"] = "dampc";
    j["version"] = kVersion;
    j["command"] = command;
    j["config"] = o.config;
    j["config_digest"] = config_digest(cfg);
    j["kappa"] = kappas;
    j["seeds"] = cfg.sim.seeds;
    j["steps"] = cfg.sim.steps;
    j["horizon"] = cfg.horizon;
    j["admm"] = {{"rho", cfg.admm.rho},
                 {"iterations", cfg.admm.iterations},
                 {"tolerance", cfg.admm.tolerance},
                 {"margin", cfg.admm.margin},
                 {"recovery_rounds", cfg.admm.recovery_rounds}};
    j["seed_streams"] = {{"theta", static_cast<int>(Stream::Theta)}, {"disturbance", static_cast<int>(Stream::Disturbance)}};
    j["outputs"] = outputs;
    return j;
}

std::string run_tag(const SimRun& r) {
    return std::string(mode_name(r.mode)) + "_k" + format_number(r.kappa) + "_s" + std::to_string(r.seed);
}

int cmd_validate(const Options& o) {
    const NetworkConfig cfg = load(o);
    const TubeDesign design = compute_offline_constants(cfg);
    const GainReport gain = validate_gain(cfg);
    const TerminalReport term = validate_terminal_set(design, cfg);
    const std::string report = design_report_json(cfg, design, gain, term);
    write_file_atomic(out_path(o, "design_report.json"), report);
    std::cout << report;
    const LogLevel level = o.strict ? LogLevel::Error : LogLevel::Warn;
    bool bad = false;
    if (gain.checked && !gain.stable()) {
        log(level, "closed-loop gain is not stable on every theta0 corner");
        bad = true;
    }
    if (term.checked && !term.invariant()) {
        log(level, "terminal set is not robustly invariant (worst excess " + format_number(term.worst_excess) + ")");
        bad = true;
    }
    return o.strict && bad ? kInvalid : kOk;
}

int cmd_simulate(const Options& o) {
    const NetworkConfig cfg = load(o);
    const Mode mode = parse_mode(o.mode.empty() ? "dampc-dist" : o.mode);
    const Experiment ex = prepare_experiment(cfg);
    std::vector<std::string> outputs;
    ExperimentResult all;
    for (int sd = 0; sd < cfg.sim.seeds; ++sd) {
        const auto seed = static_cast<std::uint64_t>(sd);
        SimRun run = simulate(ex, mode, draw_theta_star(ex, seed), seed, sim_options(cfg));
        const std::string tag = run_tag(run);
        write_file_atomic(out_path(o, "trace_" + tag + ".csv"), trace_csv(run));
        write_file_atomic(out_path(o, "trajectory_" + tag + ".csv"), trajectory_csv(run));
        outputs.push_back("trace_" + tag + ".csv");
        outputs.push_back("trajectory_" + tag + ".csv");
        std::cout << tag << " cost " << format_number(run.cost) << (run.completed ? "" : " FAILED: " + run.failure) << "\n";
        run.steps.clear();
        all.runs.push_back(std::move(run));
    }
    write_file_atomic(out_path(o, "runs.csv"), runs_csv(all));
    outputs.push_back("runs.csv");
    json m = manifest("simulate", o, cfg, {cfg.sim.kappa}, outputs);
    m["mode"] = mode_name(mode);
    write_file_atomic(out_path(o, "manifest.json"), m.dump(2) + "\n");
    for (const SimRun& r : all.runs)
        if (!r.completed) return exit_code(r.failure_kind);
    return kOk;
}

int cmd_table2(const Options& o) {
    const NetworkConfig cfg = load(o);
    std::vector<double> kappas = o.kappa.empty() ? cfg.sim.kappa_grid : o.kappa;
    if (kappas.empty()) kappas = {cfg.sim.kappa};
    std::vector<Mode> modes;
    if (!o.mode.empty()) modes.push_back(parse_mode(o.mode));
    const ExperimentResult res = run_table2(cfg, kappas, cfg.sim.seeds, sim_options(cfg), o.jobs, modes);
    write_file_atomic(out_path(o, "table2.csv"), table2_csv(res));
    write_file_atomic(out_path(o, "runs.csv"), runs_csv(res));
    json m = manifest("table2", o, cfg, kappas, {"table2.csv", "runs.csv"});
    json ms = json::array();
    for (Mode md : modes.empty() ? std::vector<Mode>(std::begin(kAllModes), std::end(kAllModes)) : modes)
        ms.push_back(mode_name(md));
    m["modes"] = ms;
    write_file_atomic(out_path(o, "manifest.json"), m.dump(2) + "\n");
    std::cout << table2_csv(res);
    for (const SimRun& r : res.runs)
        if (!r.completed) return exit_code(r.failure_kind);
    return kOk;
}

int cmd_fig3(const Options& o) {
    NetworkConfig cfg = load(o);
    if (!o.seeds) cfg.sim.seeds = 1;
    const Experiment ex = prepare_experiment(cfg);
    std::string csv;
    std::vector<std::string> outputs{"fig3_bounds.csv"};
    int code = kOk;
    for (int sd = 0; sd < cfg.sim.seeds; ++sd) {
        const SimRun run = run_figure3(cfg, static_cast<std::uint64_t>(sd), sim_options(cfg));
        std::string part = fig3_csv(ex, run);
        // One header, with the seed prepended to every row.
        std::istringstream lines(part);
        std::string line;
        bool header = true;
        while (std::getline(lines, line)) {
            if (header) {
                if (csv.empty()) csv = "seed," + line + "\n";
                header = false;
                continue;
            }
            csv += std::to_string(sd) + "," + line + "\n";
        }
        const std::string tag = run_tag(run);
        write_file_atomic(out_path(o, "trace_" + tag + ".csv"), trace_csv(run));
        outputs.push_back("trace_" + tag + ".csv");
        if (!run.completed) {
            std::cerr << tag << ": " << run.failure << "\n";
            code = exit_code(run.failure_kind);
        }
    }
    write_file_atomic(out_path(o, "fig3_bounds.csv"), csv);
    write_file_atomic(out_path(o, "manifest.json"), manifest("fig3", o, cfg, {cfg.sim.kappa}, outputs).dump(2) + "\n");
    return code;
}

int cmd_oracle(const Options& o, bool have_config) {
    std::vector<NetworkConfig> cfgs;
    if (have_config) {
        cfgs.push_back(load(o));
    } else {
        cfgs.push_back(oracle_toy(1));
        cfgs.push_back(oracle_toy(2));
    }
    json all = json::array();
    for (NetworkConfig& cfg : cfgs) {
        if (o.rho) cfg.admm.rho = *o.rho;
        if (o.admm_iters) cfg.admm.iterations = *o.admm_iters;
        int n = 0;
        for (const AgentSpec& a : cfg.agents) n += a.model.n;
        if (n > 12) fail(ErrorKind::DimensionTooLarge, "oracle-check needs a network with at most 12 states");
        const OracleReport rep = oracle_check(cfg, o.seeds.value_or(20), 0, cfg.admm);
        json j = json::parse(oracle_report_json(rep));
        j["network"] = cfg.name;
        std::cout << cfg.name << ": solved " << rep.solved << "/" << rep.cases.size() << ", gap ["
                  << format_number(rep.min_gap) << ", " << format_number(rep.max_gap) << "], max violation "
                  << format_number(rep.max_violation) << "\n";
        all.push_back(std::move(j));
    }
    write_file_atomic(out_path(o, "oracle_report.json"), all.dump(2) + "\n");
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distributed adaptive tube MPC experiments"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);
    Options o;

    auto* validate = app.add_subcommand("validate", "check a configuration and write its design report");
    add_config(validate, o);
    add_kappa(validate, o, false);
    add_out(validate, o);
    validate->add_flag("--strict", o.strict, "fail when the gain or terminal check fails");

    auto* simulate_cmd = app.add_subcommand("simulate", "closed-loop runs of one mode");
    add_config(simulate_cmd, o);
    add_kappa(simulate_cmd, o, false);
    add_admm(simulate_cmd, o);
    add_sim(simulate_cmd, o);
    simulate_cmd->add_option("--mode", o.mode, "drmpc, dampc-dec or dampc-dist")
        ->check(CLI::IsMember({"drmpc", "dampc-dec", "dampc-dist"}));
    add_out(simulate_cmd, o);

    auto* table2 = app.add_subcommand("table2", "mean closed-loop cost per mode over a kappa grid");
    add_config(table2, o);
    add_kappa(table2, o, true);
    add_admm(table2, o);
    add_sim(table2, o);
    table2->add_option("--mode", o.mode, "restrict to one mode")->check(CLI::IsMember({"drmpc", "dampc-dec", "dampc-dist"}));
    table2->add_option("--jobs", o.jobs, "worker threads")->check(CLI::Range(1, 256));
    add_out(table2, o);

    auto* fig3 = app.add_subcommand("fig3", "parameter bounds from decentralized and distributed identification");
    add_config(fig3, o);
    add_kappa(fig3, o, false);
    add_admm(fig3, o);
    add_sim(fig3, o);
    add_out(fig3, o);

    auto* oracle = app.add_subcommand("oracle-check", "compare ADMM against the centralized solve");
    auto* oracle_cfg = oracle->add_option("--config", o.config, "network configuration JSON (default: built-in toys)");
    add_admm(oracle, o);
    oracle->add_option("--seeds", o.seeds, "random states per network")->check(CLI::Range(0, 100000));
    add_out(oracle, o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return e.get_exit_code() == 0 ? code : kUsage;
    }

    try {
        if (*validate) return cmd_validate(o);
        if (*simulate_cmd) return cmd_simulate(o);
        if (*table2) return cmd_table2(o);
        if (*fig3) return cmd_fig3(o);
        if (*oracle) return cmd_oracle(o, oracle_cfg->count() > 0);
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return kInvalid;
    }
    return kUsage;
}
