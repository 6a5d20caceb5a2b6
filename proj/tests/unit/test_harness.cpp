#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "oracles/binomial.hpp"
#include "rankbsde/harness.hpp"

using namespace rankbsde;
namespace fs = std::filesystem;

namespace {

json linear_config() {
    return json::parse(R"({
        "name": "linear2",
        "delta": [0.3, -0.1], "sigma": [0.5, 0.4],
        "generator": {"kind": "zero"},
        "terminal": {"kind": "sum"},
        "horizon": 1.0,
        "x0": [0.4, -0.2],
        "numerics": {"steps": 20, "paths": 20000, "seed": 17,
                     "pde": {"nodes": [61, 31], "steps": 20}},
        "probes": [{"t": 0.0, "x": [0.4, -0.2]}, {"t": 0.5, "x": [0.1, 0.0]}, {"t": 1.0, "x": [0.3, 0.2]}],
        "tolerance": {"abs": 1e-3, "k": 3}
    })");
}

json put_config() {
    return json::parse(R"({
        "name": "put",
        "market": {"delta": [0.05], "sigma": [0.2], "rate": {"kind": "constant", "value": 0.05},
                   "prices": [100], "maturity": 1.0,
                   "claim": {"kind": "put", "strike": 100}, "exercise": {"kind": "put", "strike": 100}},
        "numerics": {"steps": 50, "paths": 100000, "seed": 11, "validation_samples": 200,
                     "pde": {"nodes": 400, "steps": 400}},
        "tolerance": {"abs": 0, "k": 0, "rel": 0.01}
    })");
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::path(::testing::TempDir()) / ("rankbsde_harness_" + name);
    fs::remove_all(dir);
    return dir;
}

}  // namespace

TEST(Fnv1a, KnownValues) {
    EXPECT_EQ(hex64(fnv1a("")), "cbf29ce484222325");
    EXPECT_EQ(hex64(fnv1a("a")), "af63dc4c8601ec8c");
}

TEST(ConfigFromJson, ParsesProblemAndMarket) {
    const auto c = config_from_json(linear_config());
    EXPECT_EQ(c.n(), 2u);
    EXPECT_EQ(c.numerics.seed, 17u);
    EXPECT_EQ(c.probes.size(), 3u);
    EXPECT_EQ(c.outputs, std::vector<std::string>{"estimate"});
    const auto m = config_from_json(put_config());
    ASSERT_TRUE(m.market.has_value());
    EXPECT_DOUBLE_EQ(m.profile.delta()[0], 0.05 - 0.02);
    EXPECT_DOUBLE_EQ(m.x0.coords()[0], std::log(100.0));
    EXPECT_EQ(m.numerics.solver.basis.degree, 4u);
    EXPECT_EQ(m.outputs, std::vector<std::string>{"price"});
}

TEST(ConfigFromJson, Rejections) {
    auto expect_key = [](json j, const std::string& key) {
        try {
            (void)config_from_json(j);
            FAIL() << "accepted, expected mention of " << key;
        } catch (const ValidationError& e) {
            EXPECT_NE(std::string(e.what()).find(key), std::string::npos) << e.what();
        }
    };
    auto j = linear_config();
    j["numerics"].erase("seed");
    expect_key(j, "numerics.seed");
    j = linear_config();
    j["generator"]["kind"] = "quadratic";
    expect_key(j, "generator.kind");
    j = linear_config();
    j["outputs"] = {"estimate", "plot"};
    expect_key(j, "plot");
    j = linear_config();
    j["colour"] = 1;
    expect_key(j, "colour");
    j = linear_config();
    j["probes"] = json::array({{{"t", 2.0}, {"x", {0.0, 0.0}}}});
    expect_key(j, "probe time");
    j = linear_config();
    j["numerics"]["pde"]["mode"] = "magic";
    expect_key(j, "numerics.pde.mode");
    j = put_config();
    j["x0"] = {1.0};
    expect_key(j, "conflicts");
}

TEST(CrossValidate, LinearSpecAgreesWithAnalytic) {
    const auto c = config_from_json(linear_config());
    const auto r = cross_validate(c);
    EXPECT_TRUE(r.passed);
    ASSERT_EQ(r.rows.size(), 3u);
    for (const auto& row : r.rows) {
        ASSERT_TRUE(row.inside);
        const double exact = row.point.x[0] + row.point.x[1] + 0.2 * (1.0 - row.point.t);
        EXPECT_LT(std::abs(row.mc - exact), 3.0 * row.mc_stderr + 1e-12);
        EXPECT_LT(std::abs(*row.pde - exact), 1e-3);
    }
    // terminal slice: both sides are g(x) exactly
    EXPECT_EQ(r.rows[2].mc, 0.5);
    EXPECT_EQ(*r.rows[2].pde, 0.5);
    EXPECT_LT(r.face_residual, 1e-8);
}

TEST(CrossValidate, ProbeOutsideDomainIsExcluded) {
    auto j = linear_config();
    j["probes"] = json::array({{{"t", 0.0}, {"x", {0.4, -0.2}}}, {{"t", 0.0}, {"x", {30.0, 29.0}}}});
    const auto r = cross_validate(config_from_json(j));
    ASSERT_EQ(r.rows.size(), 2u);
    EXPECT_TRUE(r.rows[0].inside);
    EXPECT_FALSE(r.rows[1].inside);
    EXPECT_FALSE(r.rows[1].pde.has_value());
    EXPECT_TRUE(r.passed);
}

TEST(CrossValidate, AmericanPutTripleAgreement) {
    const auto r = cross_validate(config_from_json(put_config()));
    ASSERT_TRUE(r.oracle.has_value());
    EXPECT_NEAR(*r.oracle, oracle::crr(100, 100, 0.05, 0.2, 1.0, 2000, true, true), 1e-9);
    EXPECT_LT(std::abs(*r.mc_vs_oracle), 0.01);
    EXPECT_LT(std::abs(*r.pde_vs_oracle), 0.01);
    EXPECT_TRUE(r.passed);
}

TEST(ConvergenceTable, TimeStepLadderOnDiscountedLinearSpec) {
    // u = exp(-r (T - t)) (x + delta (T - t)); the implicit step is first order in dt
    auto j = json::parse(R"({
        "delta": [0.3], "sigma": [0.4],
        "generator": {"kind": "discount", "rate": 0.5},
        "terminal": {"kind": "coordinate"},
        "x0": [0.7],
        "numerics": {"seed": 1, "pde": {"nodes": 101}, "ladder": {"dt": [10, 20, 40], "dt_solver": "pde"}}
    })");
    j["reference"] = std::exp(-0.5) * (0.7 + 0.3);
    const auto t = convergence_table(config_from_json(j), LadderAxis::dt);
    EXPECT_TRUE(t.monotone) << t.verdict;
    ASSERT_EQ(t.rows.size(), 3u);
    EXPECT_NEAR(*t.rows[1].error / *t.rows[0].error, 0.5, 0.1);
    std::ostringstream csv;
    write_convergence_csv(csv, t);
    EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "dt,value,stderr,error,diff");
}

TEST(ConvergenceTable, PathLadderHalvesStandardError) {
    auto j = linear_config();
    j["numerics"]["ladder"] = {{"paths", {2000, 8000, 32000}}};
    const auto t = convergence_table(config_from_json(j), LadderAxis::paths);
    EXPECT_TRUE(t.monotone) << t.verdict;
    for (std::size_t i = 1; i < t.rows.size(); ++i) {
        EXPECT_NEAR(t.rows[i].standard_error / t.rows[i - 1].standard_error, 0.5, 0.15);
    }
}

TEST(ConvergenceTable, PenaltyLadderRisesToReflected) {
    auto j = put_config();
    j["numerics"]["paths"] = 40000;
    j["numerics"]["ladder"] = {{"penalty", {10, 100, 1000}}};
    const auto t = convergence_table(config_from_json(j), LadderAxis::penalty);
    EXPECT_TRUE(t.monotone) << t.verdict;
    ASSERT_TRUE(t.limit.has_value());
    EXPECT_LT(*t.rows.back().error / *t.limit, 0.02);
}

TEST(ConvergenceTable, MeshLadderOnPut) {
    auto j = put_config();
    j["numerics"]["pde"] = {{"steps", 200}};
    j["numerics"]["ladder"] = {{"mesh", {51, 101, 201, 401}}};
    const auto t = convergence_table(config_from_json(j), LadderAxis::mesh);
    EXPECT_TRUE(t.monotone) << t.verdict;
}

TEST(ConvergenceTable, NeedsThreeLevels) {
    auto j = linear_config();
    j["numerics"]["ladder"] = {{"paths", {100, 400}}};
    EXPECT_THROW((void)convergence_table(config_from_json(j), LadderAxis::paths), ValidationError);
}

TEST(RunScenario, DeterministicAcrossRunsAndWorkers) {
    auto j = linear_config();
    j["numerics"]["paths"] = 4000;
    j["outputs"] = {"simulate", "estimate", "pde", "cross_validate"};
    const auto c = config_from_json(j);
    const auto a = scratch("a"), b = scratch("b"), d = scratch("d");
    const auto ra = run_scenario(c, a);
    const auto rb = run_scenario(c, b);
    RunOptions four;
    four.policy.threads = 4;
    const auto rd = run_scenario(c, d, four);
    EXPECT_EQ(ra.manifest, rb.manifest);
    EXPECT_EQ(ra.manifest, rd.manifest);
    for (const auto& f : ra.manifest["outputs"]) {
        const std::string name = f["file"];
        EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
        EXPECT_EQ(slurp(a / name), slurp(d / name)) << name;
    }
    EXPECT_EQ(slurp(a / "manifest.json"), slurp(d / "manifest.json"));
    EXPECT_EQ(ra.manifest["config_hash"], config_hash(c));
    EXPECT_EQ(ra.manifest["seeds"][0], 17u);
    EXPECT_TRUE(ra.passed);
}

TEST(RunScenario, CreatesMissingDirectory) {
    auto j = put_config();
    j["numerics"]["paths"] = 2000;
    const auto dir = scratch("nested") / "deeper" / "out";
    const auto r = run_scenario(config_from_json(j), dir);
    EXPECT_TRUE(fs::exists(dir / "manifest.json"));
    EXPECT_TRUE(fs::exists(dir / "price.json"));
    const auto price = json::parse(slurp(dir / "price.json"));
    EXPECT_TRUE(price.contains("oracle_price"));
    EXPECT_TRUE(price.contains("exercise_boundary_samples"));
    EXPECT_EQ(r.manifest["outputs"].size(), 2u);
}

TEST(RunScenario, InvalidKindRejectedBeforeCompute) {
    auto j = linear_config();
    j["generator"]["kind"] = "cubic";
    const auto dir = scratch("invalid");
    EXPECT_THROW(
        {
            const auto c = config_from_json(j);
            (void)run_scenario(c, dir);
        },
        ValidationError);
    EXPECT_FALSE(fs::exists(dir));
}
