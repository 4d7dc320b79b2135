#include <CLI11.hpp>

#include <iostream>

#include "commands.hpp"

using namespace tthjb;
using namespace tthjb::cli;

namespace {

int run(const std::function<int()>& body) {
    try {
        return body();
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kIoFailure;
    } catch (const DimensionError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kValidation;
    } catch (const std::invalid_argument& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kValidation;
    } catch (const BlowUpError& e) {
        std::cerr << "solver failure: " << e.what() << " (t = " << e.time << ")\n";
        return kSolverFailure;
    } catch (const std::exception& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return kSolverFailure;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tensor-train Bellman solver for control-affine reaction-diffusion benchmarks"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("config", config_path, "INI configuration file")->required();
        sub->add_option("--set", overrides, "Override a key, e.g. --set solver.seed=3")->take_all();
    };
    auto* solve = app.add_subcommand("solve", "Solve the Bellman recursion and write the value schedule");
    auto* bench = app.add_subcommand("benchmark", "Compare controllers on polynomial initial values");
    auto* sweep = app.add_subcommand("sweep-uniform", "Controller costs for initial values [x, ..., x]");
    auto* riccati = app.add_subcommand("riccati", "Differential Riccati solution of the linearized problem");
    auto* check = app.add_subcommand("check", "Run the invariant suite");
    for (auto* sub : {solve, bench, sweep, riccati}) add_common(sub);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kSuccess : kValidation;
    }

    if (check->parsed()) return run([] { return cmd_check(std::cout); });

    return run([&]() -> int {
        auto map = ConfigMap::from_file(config_path);
        for (const auto& o : overrides) map.set(o);
        const auto config = load_run_config(map);
        if (solve->parsed()) return cmd_solve(config, std::cout);
        if (bench->parsed()) return cmd_benchmark(config, std::cout);
        if (sweep->parsed()) return cmd_sweep_uniform(config, std::cout);
        return cmd_riccati(config, std::cout);
    });
}
