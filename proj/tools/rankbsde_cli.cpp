// rankbsde: command-line front end over the scenario runner.
//
//   rankbsde <subcommand> --config cfg.json [--seed S] [--out DIR] [--threads K] [--dump-paths]
//
// Exit codes: 0 success, 2 a tolerance or convergence verdict failed, 1 error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rankbsde/harness.hpp"

namespace {

using rankbsde::json;

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    unsigned threads = 1;
    bool dump_paths = false;
};

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw rankbsde::ValidationError("cannot open configuration " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw rankbsde::ValidationError("configuration " + path + ": " + e.what());
    }
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// The subcommand fixes the outputs and a --seed overrides the file, both
// before parsing, so the manifest hash describes what actually ran.
int run(const Globals& g, const std::vector<std::string>& outputs, const std::string& primary,
        std::optional<double> penalty = {}) {
    json doc = read_json(g.config);
    if (!doc.is_object()) throw rankbsde::ValidationError("configuration must be a JSON object");
    doc["outputs"] = outputs;
    if (g.seed) doc["numerics"]["seed"] = *g.seed;
    const auto config = rankbsde::config_from_json(doc);
    std::filesystem::path dir = g.out;
    if (dir.empty()) {
        dir = config.out_dir.empty() ? std::filesystem::path("rankbsde_out") / config.name
                                     : std::filesystem::path(config.out_dir);
    }
    rankbsde::RunOptions options;
    options.policy.threads = g.threads;
    options.dump_paths = g.dump_paths;
    options.penalty = penalty;
    const auto result = rankbsde::run_scenario(config, dir, options);
    std::cout << slurp(dir / primary);
    std::cerr << "outputs in " << dir.string() << " (config " << result.manifest["config_hash"].get<std::string>()
              << ")\n";
    return result.passed ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Rank-based reflected BSDEs: simulation, Monte Carlo and PDE solvers, American pricing"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "Experiment configuration (JSON)")->required()->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Override numerics.seed");
    app.add_option("--out", g.out, "Output directory (created if missing)");
    app.add_option("--threads", g.threads, "Worker threads; results do not depend on it")->check(CLI::PositiveNumber);
    app.add_flag("--dump-paths", g.dump_paths, "Also write every simulated path to paths.csv");

    auto* simulate = app.add_subcommand("simulate", "Simulate the ranked system and report path statistics");
    auto* bsde = app.add_subcommand("solve-bsde", "Solve the BSDE without obstacle");
    auto* reflected = app.add_subcommand("solve-reflected", "Solve the reflected BSDE (or its penalized version)");
    std::optional<double> penalty;
    reflected->add_option("--penalty", penalty, "Penalty m; solves the penalized equation instead")
        ->check(CLI::NonNegativeNumber);
    auto* pde = app.add_subcommand("solve-pde", "Solve the obstacle problem on the grid");
    auto* price = app.add_subcommand("price-american", "Price the configured market claim");
    auto* cross = app.add_subcommand("cross-validate", "Compare Monte Carlo and PDE values at the probe points");
    auto* convergence = app.add_subcommand("convergence", "Run a refinement ladder");
    std::string axis;
    convergence->add_option("--axis", axis, "dt | paths | mesh | penalty")
        ->required()
        ->check(CLI::IsMember({"dt", "paths", "mesh", "penalty"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (simulate->parsed()) return run(g, {"simulate"}, "simulate.json");
        if (bsde->parsed() || reflected->parsed()) {
            auto doc = read_json(g.config);
            const bool has_obstacle = doc.contains("obstacle") && doc["obstacle"].value("kind", "none") != "none";
            if (bsde->parsed() && (has_obstacle || (doc.contains("market") && doc["market"].contains("exercise") &&
                                                    doc["market"]["exercise"].value("kind", "none") != "none"))) {
                throw rankbsde::ValidationError("solve-bsde: the configuration has an obstacle; use solve-reflected");
            }
            return run(g, {"estimate"}, "estimate.json", reflected->parsed() ? penalty : std::nullopt);
        }
        if (pde->parsed()) return run(g, {"pde"}, "pde.json");
        if (price->parsed()) return run(g, {"price"}, "price.json");
        if (cross->parsed()) return run(g, {"cross_validate"}, "cross_validation.json");
        if (convergence->parsed()) return run(g, {"convergence_" + axis}, "convergence_" + axis + ".csv");
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
