#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "support.hpp"

#include "dampc/oracle.hpp"

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#ifndef DAMPC_CLI
#define DAMPC_CLI "dampc"
#endif

using namespace dampc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("dampc_cli_test_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run(const std::string& args) {
    const std::string cmd = std::string(DAMPC_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path write_config(const fs::path& dir, const NetworkConfig& cfg) {
    const fs::path p = dir / "config.json";
    write_file_atomic(p.string(), config_to_json(cfg));
    return p;
}

}  // namespace

TEST_CASE("validate writes a design report") {
    const fs::path out = scratch("validate");
    REQUIRE(run("validate --config " + testing::bundled_config_path() + " --out " + out.string()) == 0);
    const auto j = nlohmann::json::parse(slurp(out / "design_report.json"));
    CHECK(j["agents"].size() == 5);
    CHECK(j["gain"]["checked"].get<bool>());
}

TEST_CASE("strict validation rejects a terminal set that is not invariant") {
    const fs::path out = scratch("strict");
    const TubeDesign design = compute_offline_constants(testing::bundled(1.0));
    const bool invariant = validate_terminal_set(design, testing::bundled(1.0)).invariant();
    CHECK(run("validate --strict --config " + testing::bundled_config_path() + " --out " + out.string()) == (invariant ? 0 : 1));
    CHECK(run("validate --strict --config " + write_config(out, oracle_toy(1)).string() + " --out " + out.string()) ==
          (validate_terminal_set(compute_offline_constants(oracle_toy(1)), oracle_toy(1)).invariant() ? 0 : 1));
}

TEST_CASE("configuration problems exit with 1") {
    const fs::path dir = scratch("invalid");
    {
        std::ofstream(dir / "broken.json") << "{ \"horizon\": ";
    }
    CHECK(run("validate --config " + (dir / "broken.json").string() + " --out " + dir.string()) == 1);
    CHECK(run("validate --config " + (dir / "missing.json").string() + " --out " + dir.string()) == 1);
    NetworkConfig cfg = oracle_toy(1);
    const fs::path p = write_config(dir, cfg);
    auto j = nlohmann::json::parse(slurp(p));
    j["horizon"] = 0;
    std::ofstream(dir / "zero_horizon.json") << j.dump();
    CHECK(run("validate --config " + (dir / "zero_horizon.json").string() + " --out " + dir.string()) == 1);
}

TEST_CASE("usage errors exit with 3") {
    CHECK(run("") == 3);
    CHECK(run("frobnicate") == 3);
    CHECK(run("validate --no-such-flag") == 3);
    CHECK(run("simulate --mode sideways") == 3);
    CHECK(run("table2 --jobs 0") == 3);
}

TEST_CASE("an infeasible start exits with 2") {
    const fs::path dir = scratch("infeasible");
    NetworkConfig cfg = oracle_toy(1);
    cfg.agents[0].model.A[0] = Mat::Constant(1, 1, 1.6);  // unstable, input too weak to recover
    cfg.agents[0].x0 = Vec::Constant(1, 1.9);
    const fs::path p = write_config(dir, cfg);
    CHECK(run("simulate --config " + p.string() + " --seeds 1 --tsim 3 --out " + dir.string()) == 2);
}

TEST_CASE("simulate without uncertainty gives identical trajectories for drmpc and dampc") {
    const fs::path dir = scratch("kappa0");
    const fs::path p = write_config(dir, oracle_toy(2));
    const std::string common = "simulate --config " + p.string() + " --kappa 0 --seeds 2 --tsim 15 --out ";
    REQUIRE(run(common + (dir / "a").string() + " --mode drmpc") == 0);
    REQUIRE(run(common + (dir / "b").string() + " --mode dampc-dist") == 0);
    for (int seed : {0, 1}) {
        const std::string a = slurp(dir / "a" / ("trajectory_drmpc_k0_s" + std::to_string(seed) + ".csv"));
        const std::string b = slurp(dir / "b" / ("trajectory_dampc-dist_k0_s" + std::to_string(seed) + ".csv"));
        CHECK_FALSE(a.empty());
        CHECK(a == b);
    }
}

TEST_CASE("table2 output is byte-identical across runs and worker counts") {
    const fs::path dir = scratch("jobs");
    const fs::path p = write_config(dir, oracle_toy(2));
    const std::string common = "table2 --config " + p.string() + " --kappa 0.5,1 --seeds 3 --tsim 12 --out ";
    REQUIRE(run(common + (dir / "one").string() + " --jobs 1") == 0);
    REQUIRE(run(common + (dir / "again").string() + " --jobs 1") == 0);
    REQUIRE(run(common + (dir / "three").string() + " --jobs 3") == 0);
    for (const char* f : {"table2.csv", "runs.csv"}) {
        const std::string one = slurp(dir / "one" / f);
        CHECK(one == slurp(dir / "again" / f));
        CHECK(one == slurp(dir / "three" / f));
    }
    const std::string table = slurp(dir / "one" / "table2.csv");
    CHECK(std::count(table.begin(), table.end(), '\n') == 1 + 2 * 3);
    const auto m = nlohmann::json::parse(slurp(dir / "one" / "manifest.json"));
    CHECK(m["command"] == "table2");
    CHECK(m["seeds"] == 3);
    CHECK(m["kappa"].size() == 2);
}

TEST_CASE("oracle-check on the built-in toys") {
    const fs::path dir = scratch("oracle");
    REQUIRE(run("oracle-check --seeds 5 --out " + dir.string()) == 0);
    const auto j = nlohmann::json::parse(slurp(dir / "oracle_report.json"));
    CHECK_FALSE(j.empty());
}

TEST_CASE("fig3 writes bounds for every shared parameter") {
    const fs::path dir = scratch("fig3");
    const fs::path p = write_config(dir, oracle_toy(2));
    REQUIRE(run("fig3 --config " + p.string() + " --tsim 10 --out " + dir.string()) == 0);
    const std::string csv = slurp(dir / "fig3_bounds.csv");
    CHECK(csv.rfind("seed,k,param,agent,", 0) == 0);
    // Two owners of parameter 0 and one of parameter 1, ten steps.
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 10 * 3);
}
