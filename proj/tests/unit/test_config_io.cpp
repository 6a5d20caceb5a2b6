#include <string>

#include <gtest/gtest.h>

#include "rankbsde/config_io.hpp"

using namespace rankbsde;

namespace {

json base_config() {
    return json::parse(R"({
      "n": 2, "delta": [0.1, -0.1], "sigma": [0.3, 0.2],
      "rate": {"kind": "constant", "value": 0.05},
      "generator": {"kind": "pricing"},
      "terminal": {"kind": "put_exp", "strike": 1.0, "rank": 2},
      "obstacle": {"kind": "payoff"},
      "horizon": 0.5
    })");
}

std::string message_of(const json& j) {
    try {
        const auto profile = profile_from_json(j);
        (void)problem_from_json(j, &profile);
    } catch (const ValidationError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(ConfigIo, ParsesProfileAndProblem) {
    const auto j = base_config();
    const auto profile = profile_from_json(j);
    EXPECT_EQ(profile.n(), 2u);
    EXPECT_EQ(profile.rate().value, 0.05);
    const auto spec = problem_from_json(j, &profile);
    EXPECT_EQ(spec.generator.kind, GeneratorKind::pricing);
    EXPECT_EQ(spec.generator.delta, profile.delta());
    EXPECT_EQ(spec.terminal.rank, 2u);
    ASSERT_TRUE(spec.obstacle.payoff.has_value());
    EXPECT_EQ(spec.obstacle.payoff->kind, TerminalKind::put_exp);
    EXPECT_EQ(spec.horizon, 0.5);
}

TEST(ConfigIo, RoundTrip) {
    const auto j = base_config();
    const auto profile = profile_from_json(j);
    const auto spec = problem_from_json(j, &profile);
    json out = to_json(profile);
    out.update(to_json(spec));
    const auto profile2 = profile_from_json(out);
    const auto spec2 = problem_from_json(out, &profile2);
    EXPECT_EQ(to_json(spec2).dump(), to_json(spec).dump());
    EXPECT_EQ(to_json(profile2).dump(), to_json(profile).dump());
}

TEST(ConfigIo, UnknownKindsNameTheKey) {
    auto j = base_config();
    j["generator"]["kind"] = "quadratic";
    EXPECT_NE(message_of(j).find("generator.kind"), std::string::npos);

    j = base_config();
    j["terminal"]["kind"] = "digital";
    EXPECT_NE(message_of(j).find("terminal.kind"), std::string::npos);

    j = base_config();
    j["obstacle"]["kind"] = "moving";
    EXPECT_NE(message_of(j).find("obstacle.kind"), std::string::npos);

    j = base_config();
    j["rate"]["kind"] = "nelson_siegel";
    EXPECT_NE(message_of(j).find("rate.kind"), std::string::npos);

    j = base_config();
    j["terminal"]["strik"] = 1.0;
    EXPECT_NE(message_of(j).find("terminal.strik"), std::string::npos);
}

TEST(ConfigIo, MissingOrInconsistentFields) {
    auto j = base_config();
    j["n"] = 3;
    EXPECT_THROW((void)profile_from_json(j), ValidationError);
    j = base_config();
    j["terminal"].erase("strike");
    EXPECT_NE(message_of(j).find("terminal.strike"), std::string::npos);
    j = base_config();
    j["terminal"]["rank"] = 3;
    EXPECT_NE(message_of(j).find("rank 3"), std::string::npos);
}
