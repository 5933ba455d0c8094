// Regenerates the bundled chain configuration.
#include "dampc/design.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Write the five-mass chain benchmark configuration"};
    std::string out = "configs/mass_spring_damper_5.json";
    double kappa = 1.0;
    int rows = 8;
    app.add_option("--out", out, "output path");
    app.add_option("--kappa", kappa, "uncertainty scaling")->check(CLI::Range(0.0, 1.0));
    app.add_option("--tube-rows", rows, "facets of each tube polygon")->check(CLI::Range(3, 64));
    CLI11_PARSE(app, argc, argv);

    try {
        dampc::ChainSpec spec;
        spec.masses = dampc::Vec::Ones(5);
        spec.dampers = (dampc::Vec(4) << 2.0, 2.0, 2.0, 1.5).finished();
        spec.spring_nominal = (dampc::Vec(4) << 2.4, 3.6, 2.5, 2.7).finished();
        spec.spring_radius = (dampc::Vec(4) << 0.7, 1.0, 1.0, 0.7).finished();
        spec.kappa = kappa;
        dampc::NetworkConfig cfg = dampc::build_msd_benchmark(spec);
        dampc::apply_reference_chain_design(cfg, rows, 1.0, 5.0, 1.0);
        const double x0[] = {2, 1, 2, -1, 0, 0, 2, -1, 2, 1};
        for (int s = 0; s < cfg.num_agents(); ++s)
            cfg.agents[static_cast<std::size_t>(s)].x0 = (dampc::Vec(2) << x0[2 * s], x0[2 * s + 1]).finished();
        cfg.sim.kappa_grid = {0.3, 0.5, 0.7, 1.0};
        cfg.validate();
        dampc::write_file_atomic(out, dampc::config_to_json(cfg));
        std::cout << "wrote " << out << " (" << dampc::config_digest(cfg) << ")\n";
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
    return 0;
}
