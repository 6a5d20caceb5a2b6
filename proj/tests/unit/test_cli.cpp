#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>

#include "rankbsde/rankbsde.hpp"

using rankbsde::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::path(::testing::TempDir()) / ("rankbsde_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_config(const fs::path& dir, const json& j) {
    const auto p = dir / "config.in.json";
    std::ofstream(p) << j.dump(2);
    return p;
}

json small_linear() {
    return json::parse(R"({
        "name": "cli_linear",
        "delta": [0.3, -0.1], "sigma": [0.5, 0.4],
        "generator": {"kind": "zero"}, "terminal": {"kind": "sum"},
        "x0": [0.4, -0.2],
        "numerics": {"steps": 10, "paths": 2000, "seed": 5, "pde": {"nodes": [41, 21], "steps": 10}},
        "probes": [{"t": 0.0, "x": [0.4, -0.2]}],
        "tolerance": {"abs": 1e-3, "k": 4}
    })");
}

int run(const std::string& args, const fs::path& dir) {
    const std::string cmd = std::string("\"") + RANKBSDE_CLI + "\" " + args + " > \"" + (dir / "stdout.txt").string() +
                            "\" 2> \"" + (dir / "stderr.txt").string() + "\"";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, SimulateSucceedsAndWritesManifest) {
    const auto dir = scratch("simulate");
    const auto cfg = write_config(dir, small_linear());
    EXPECT_EQ(run("simulate --config " + cfg.string() + " --out " + (dir / "out").string(), dir), 0);
    EXPECT_TRUE(fs::exists(dir / "out" / "simulate.json"));
    EXPECT_TRUE(fs::exists(dir / "out" / "manifest.json"));
}

TEST(Cli, SeedOverrideIsRecorded) {
    const auto dir = scratch("seed");
    const auto cfg = write_config(dir, small_linear());
    ASSERT_EQ(run("solve-bsde --config " + cfg.string() + " --seed 99 --threads 2 --out " + (dir / "out").string(), dir), 0);
    std::ifstream in(dir / "out" / "manifest.json");
    const auto manifest = json::parse(in);
    EXPECT_EQ(manifest["seeds"][0], 99u);
}

TEST(Cli, FailedToleranceExitsTwo) {
    const auto dir = scratch("tolerance");
    auto j = small_linear();
    j["tolerance"] = {{"abs", 0.0}, {"k", 0.0}};
    const auto cfg = write_config(dir, j);
    EXPECT_EQ(run("cross-validate --config " + cfg.string() + " --out " + (dir / "out").string(), dir), 2);
}

TEST(Cli, ErrorsExitOne) {
    const auto dir = scratch("errors");
    EXPECT_EQ(run("simulate --config " + (dir / "missing.json").string(), dir), 1);
    auto j = small_linear();
    j["terminal"]["kind"] = "cubic";
    EXPECT_EQ(run("simulate --config " + write_config(dir, j).string() + " --out " + (dir / "out").string(), dir), 1);
    EXPECT_FALSE(fs::exists(dir / "out"));
    j = small_linear();
    j["obstacle"] = {{"kind", "payoff"}};
    EXPECT_EQ(run("solve-bsde --config " + write_config(dir, j).string() + " --out " + (dir / "out").string(), dir), 1);
    EXPECT_EQ(run("convergence --axis sideways --config " + write_config(dir, small_linear()).string(), dir), 1);
    EXPECT_EQ(run("--config " + write_config(dir, small_linear()).string(), dir), 1);
}
