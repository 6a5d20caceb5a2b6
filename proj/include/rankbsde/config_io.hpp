#pragma once

// JSON (de)serialization for CoefficientProfile and ProblemSpec.
//
//   {"n": 2, "delta": [..], "sigma": [..], "rate": {"kind": "constant", "value": r},
//    "generator": {"kind": ..., params}, "terminal": {...}, "obstacle": {...},
//    "horizon": T}
//
// Unknown kinds and unknown parameter keys are rejected with the key path.

#include <initializer_list>
#include <string>
#include <vector>

#include <json.hpp>

#include "rankbsde/core_model.hpp"
#include "rankbsde/error.hpp"
#include "rankbsde/registry.hpp"

namespace rankbsde {

using json = nlohmann::json;

namespace detail {

inline void reject_unknown_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw ValidationError("unknown key \"" + where + "." + key + "\"");
    }
}

inline const json& require(const json& j, const std::string& where, const char* key) {
    if (!j.is_object() || !j.contains(key)) {
        throw ValidationError("missing key \"" + where + "." + key + "\"");
    }
    return j.at(key);
}

inline double number(const json& j, const std::string& where, const char* key) {
    const auto& v = require(j, where, key);
    if (!v.is_number()) throw ValidationError("key \"" + where + "." + key + "\" must be a number");
    return v.get<double>();
}

inline double number_or(const json& j, const char* key, double fallback) {
    return j.contains(key) ? j.at(key).get<double>() : fallback;
}

inline std::vector<double> numbers_or(const json& j, const char* key, std::vector<double> fallback) {
    return j.contains(key) ? j.at(key).get<std::vector<double>>() : std::move(fallback);
}

inline std::string kind_of(const json& j, const std::string& where) {
    const auto& k = require(j, where, "kind");
    if (!k.is_string()) throw ValidationError("key \"" + where + ".kind\" must be a string");
    return k.get<std::string>();
}

}  // namespace detail

[[nodiscard]] inline RateCurve rate_from_json(const json& j) {
    if (j.is_number()) return RateCurve{j.get<double>()};
    const std::string kind = detail::kind_of(j, "rate");
    if (kind != "constant") throw ValidationError("unknown rate kind \"" + kind + "\" at key \"rate.kind\"");
    detail::reject_unknown_keys(j, "rate", {"kind", "value"});
    return RateCurve{detail::number(j, "rate", "value")};
}

[[nodiscard]] inline json to_json(const RateCurve& r) { return {{"kind", "constant"}, {"value", r.value}}; }

[[nodiscard]] inline CoefficientProfile profile_from_json(const json& j) {
    auto delta = detail::require(j, "", "delta").get<std::vector<double>>();
    auto sigma = detail::require(j, "", "sigma").get<std::vector<double>>();
    if (j.contains("n") && j.at("n").get<std::size_t>() != delta.size()) {
        throw ValidationError("key \"n\" disagrees with the length of \"delta\"");
    }
    RateCurve rate = j.contains("rate") ? rate_from_json(j.at("rate")) : RateCurve{};
    return CoefficientProfile(std::move(delta), std::move(sigma), rate);
}

[[nodiscard]] inline json to_json(const CoefficientProfile& p) {
    return {{"n", p.n()}, {"delta", p.delta()}, {"sigma", p.sigma()}, {"rate", to_json(p.rate())}};
}

[[nodiscard]] inline GeneratorSpec generator_from_json(const json& j, const CoefficientProfile* profile = nullptr) {
    const std::string where = "generator";
    const std::string name = detail::kind_of(j, where);
    const auto kind = parse_generator_kind(name);
    if (!kind) throw ValidationError("unknown generator kind \"" + name + "\" at key \"generator.kind\"");
    GeneratorSpec g;
    g.kind = *kind;
    switch (*kind) {
        case GeneratorKind::zero:
            detail::reject_unknown_keys(j, where, {"kind", "lipschitz", "growth"});
            break;
        case GeneratorKind::discount:
            detail::reject_unknown_keys(j, where, {"kind", "rate", "lipschitz", "growth"});
            g.rate = detail::number(j, where, "rate");
            break;
        case GeneratorKind::pricing:
            detail::reject_unknown_keys(j, where, {"kind", "rate", "delta", "sigma", "lipschitz", "growth"});
            g.delta = detail::numbers_or(j, "delta", profile ? profile->delta() : std::vector<double>{});
            g.sigma = detail::numbers_or(j, "sigma", profile ? profile->sigma() : std::vector<double>{});
            g.rate = detail::number_or(j, "rate", profile ? profile->rate().value : 0.0);
            break;
        case GeneratorKind::affine:
            detail::reject_unknown_keys(j, where, {"kind", "intercept", "y", "z", "x", "lipschitz", "growth"});
            g.intercept = detail::number_or(j, "intercept", 0.0);
            g.y_coef = detail::number_or(j, "y", 0.0);
            g.z_coef = detail::numbers_or(j, "z", {});
            g.x_coef = detail::numbers_or(j, "x", {});
            break;
    }
    if (j.contains("lipschitz")) g.declared_lipschitz = j.at("lipschitz").get<double>();
    if (j.contains("growth")) g.declared_growth = j.at("growth").get<double>();
    return g;
}

[[nodiscard]] inline json to_json(const GeneratorSpec& g) {
    json j{{"kind", std::string(to_string(g.kind))}};
    switch (g.kind) {
        case GeneratorKind::zero: break;
        case GeneratorKind::discount: j["rate"] = g.rate; break;
        case GeneratorKind::pricing:
            j["rate"] = g.rate;
            j["delta"] = g.delta;
            j["sigma"] = g.sigma;
            break;
        case GeneratorKind::affine:
            j["intercept"] = g.intercept;
            j["y"] = g.y_coef;
            j["z"] = g.z_coef;
            j["x"] = g.x_coef;
            break;
    }
    if (g.declared_lipschitz) j["lipschitz"] = *g.declared_lipschitz;
    if (g.declared_growth) j["growth"] = *g.declared_growth;
    return j;
}

[[nodiscard]] inline TerminalSpec terminal_from_json(const json& j, const std::string& where = "terminal") {
    const std::string name = detail::kind_of(j, where);
    const auto kind = parse_terminal_kind(name);
    if (!kind) throw ValidationError("unknown terminal kind \"" + name + "\" at key \"" + where + ".kind\"");
    detail::reject_unknown_keys(j, where, {"kind", "value", "rank", "strike", "scale", "weights", "lipschitz"});
    TerminalSpec g;
    g.kind = *kind;
    if (*kind == TerminalKind::constant) g.value = detail::number(j, where, "value");
    g.rank = j.value("rank", std::size_t{1});
    const bool needs_strike = *kind == TerminalKind::call || *kind == TerminalKind::put ||
                              *kind == TerminalKind::sum_put || *kind == TerminalKind::call_exp ||
                              *kind == TerminalKind::put_exp || *kind == TerminalKind::basket_put_exp;
    if (needs_strike) g.strike = detail::number(j, where, "strike");
    g.scale = detail::number_or(j, "scale", 1.0);
    g.weights = detail::numbers_or(j, "weights", {});
    if (j.contains("lipschitz")) g.declared_lipschitz = j.at("lipschitz").get<double>();
    return g;
}

[[nodiscard]] inline json to_json(const TerminalSpec& g) {
    json j{{"kind", std::string(to_string(g.kind))}};
    switch (g.kind) {
        case TerminalKind::constant: j["value"] = g.value; break;
        case TerminalKind::sum: j["scale"] = g.scale; break;
        case TerminalKind::sum_put:
            j["strike"] = g.strike;
            j["scale"] = g.scale;
            break;
        case TerminalKind::basket_exp: j["weights"] = g.weights; break;
        case TerminalKind::basket_put_exp:
            j["weights"] = g.weights;
            j["strike"] = g.strike;
            break;
        case TerminalKind::coordinate:
        case TerminalKind::exp_coordinate: j["rank"] = g.rank; break;
        default:
            j["rank"] = g.rank;
            j["strike"] = g.strike;
            break;
    }
    if (g.declared_lipschitz) j["lipschitz"] = *g.declared_lipschitz;
    return j;
}

[[nodiscard]] inline ObstacleSpec obstacle_from_json(const json& j) {
    const std::string where = "obstacle";
    const std::string name = detail::kind_of(j, where);
    const auto kind = parse_obstacle_kind(name);
    if (!kind) throw ValidationError("unknown obstacle kind \"" + name + "\" at key \"obstacle.kind\"");
    detail::reject_unknown_keys(j, where,
                                {"kind", "value", "offset", "rate", "maturity", "payoff", "growth_c", "growth_p"});
    ObstacleSpec h;
    h.kind = *kind;
    if (*kind == ObstacleKind::constant) h.value = detail::number(j, where, "value");
    h.offset = detail::number_or(j, "offset", 0.0);
    if (*kind == ObstacleKind::discounted_payoff) {
        h.rate = detail::number(j, where, "rate");
        h.maturity = detail::number(j, where, "maturity");
    }
    if (j.contains("payoff")) h.payoff = terminal_from_json(j.at("payoff"), "obstacle.payoff");
    if (j.contains("growth_c")) h.declared_growth_c = j.at("growth_c").get<double>();
    if (j.contains("growth_p")) h.declared_growth_p = j.at("growth_p").get<int>();
    return h;
}

[[nodiscard]] inline json to_json(const ObstacleSpec& h) {
    json j{{"kind", std::string(to_string(h.kind))}};
    if (h.kind == ObstacleKind::constant) j["value"] = h.value;
    if (h.kind == ObstacleKind::payoff || h.kind == ObstacleKind::discounted_payoff) {
        j["offset"] = h.offset;
        if (h.payoff) j["payoff"] = to_json(*h.payoff);
    }
    if (h.kind == ObstacleKind::discounted_payoff) {
        j["rate"] = h.rate;
        j["maturity"] = h.maturity;
    }
    if (h.declared_growth_c) j["growth_c"] = *h.declared_growth_c;
    if (h.declared_growth_p) j["growth_p"] = *h.declared_growth_p;
    return j;
}

/// Reads generator/terminal/obstacle/horizon from a configuration document.
/// A missing obstacle means the "no obstacle" sentinel.
[[nodiscard]] inline ProblemSpec problem_from_json(const json& j, const CoefficientProfile* profile = nullptr) {
    ProblemSpec spec;
    spec.generator = j.contains("generator") ? generator_from_json(j.at("generator"), profile) : GeneratorSpec{};
    spec.terminal = terminal_from_json(detail::require(j, "", "terminal"));
    spec.obstacle = j.contains("obstacle") ? obstacle_from_json(j.at("obstacle")) : ObstacleSpec{};
    spec.horizon = detail::number_or(j, "horizon", 1.0);
    spec.resolve();
    if (profile) spec.check_dimension(profile->n());
    return spec;
}

[[nodiscard]] inline json to_json(const ProblemSpec& s) {
    return {{"generator", to_json(s.generator)},
            {"terminal", to_json(s.terminal)},
            {"obstacle", to_json(s.obstacle)},
            {"horizon", s.horizon}};
}

}  // namespace rankbsde
