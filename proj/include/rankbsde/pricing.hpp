#pragma once

// American claims in a market of n rank-based stocks and a bond:
//
//   dP_(j) = P_(j) (delta_j dt + sigma_j dbeta_j),   dP_0 = r P_0 dt.
//
// Prices are simulated in log coordinates, where the drifts become
// delta_j - sigma_j^2 / 2, and the claim is priced by the reflected BSDE
//
//   -dY = -(r Y + sum_j (delta_j - r) / sigma_j Zbar_j) ds + dK - Zbar.dbeta,
//
// with Y_T = g and Y >= h on [t0, T). Prices are in undiscounted units;
// Zbar_j is the dollar volatility held in the stock ranked j and K is the
// cumulative consumption.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rankbsde/bsde_solver.hpp"
#include "rankbsde/config_io.hpp"
#include "rankbsde/core_model.hpp"
#include "rankbsde/error.hpp"
#include "rankbsde/registry.hpp"
#include "rankbsde/sde_engine.hpp"
#include "rankbsde/validation.hpp"

namespace rankbsde {

enum class PayoffKind {
    none,        // h = -infinity (only meaningful as an exercise payoff)
    constant,    // value
    price,       // p_(rank)
    call,        // (p_(rank) - strike)^+
    put,         // (strike - p_(rank))^+
    basket,      // sum_j w_j p_(j)
    basket_put,  // (strike - sum_j w_j p_(j))^+
};

/// A payoff on the ranked prices.
struct PayoffSpec {
    PayoffKind kind = PayoffKind::constant;
    double value = 0.0;
    double strike = 0.0;
    std::size_t rank = 1;
    std::vector<double> weights;

    static PayoffSpec none() {
        PayoffSpec p;
        p.kind = PayoffKind::none;
        return p;
    }
    static PayoffSpec constant(double v) {
        PayoffSpec p;
        p.value = v;
        return p;
    }
    static PayoffSpec price(std::size_t rank = 1) {
        PayoffSpec p;
        p.kind = PayoffKind::price;
        p.rank = rank;
        return p;
    }
    static PayoffSpec put(double strike, std::size_t rank = 1) {
        PayoffSpec p;
        p.kind = PayoffKind::put;
        p.strike = strike;
        p.rank = rank;
        return p;
    }
    static PayoffSpec call(double strike, std::size_t rank = 1) {
        PayoffSpec p = put(strike, rank);
        p.kind = PayoffKind::call;
        return p;
    }
    static PayoffSpec basket(std::vector<double> w) {
        PayoffSpec p;
        p.kind = PayoffKind::basket;
        p.weights = std::move(w);
        return p;
    }
    static PayoffSpec basket_put(std::vector<double> w, double strike) {
        PayoffSpec p = basket(std::move(w));
        p.kind = PayoffKind::basket_put;
        p.strike = strike;
        return p;
    }

    [[nodiscard]] bool is_none() const noexcept { return kind == PayoffKind::none; }

    /// The moneyness coordinate the payoff is monotone in: p_(rank) or the basket value.
    [[nodiscard]] std::optional<double> underlying(std::span<const double> p) const {
        switch (kind) {
            case PayoffKind::price:
            case PayoffKind::call:
            case PayoffKind::put: return p[rank - 1];
            case PayoffKind::basket:
            case PayoffKind::basket_put: {
                double v = 0.0;
                for (std::size_t j = 0; j < weights.size() && j < p.size(); ++j) v += weights[j] * p[j];
                return v;
            }
            default: return std::nullopt;
        }
    }

    /// The same payoff as a function of ranked log-prices.
    [[nodiscard]] TerminalSpec in_log_coordinates() const {
        switch (kind) {
            case PayoffKind::none: throw ValidationError("payoff 'none' has no terminal form");
            case PayoffKind::constant: return TerminalSpec::constant(value);
            case PayoffKind::price: {
                auto g = TerminalSpec::coordinate(rank);
                g.kind = TerminalKind::exp_coordinate;
                return g;
            }
            case PayoffKind::call: return TerminalSpec::of(TerminalKind::call_exp, strike, rank);
            case PayoffKind::put: return TerminalSpec::of(TerminalKind::put_exp, strike, rank);
            case PayoffKind::basket: {
                TerminalSpec g;
                g.kind = TerminalKind::basket_exp;
                g.weights = weights;
                return g;
            }
            case PayoffKind::basket_put: {
                auto g = TerminalSpec::of(TerminalKind::basket_put_exp, strike);
                g.weights = weights;
                return g;
            }
        }
        return {};
    }
};

[[nodiscard]] inline std::string_view to_string(PayoffKind k) {
    switch (k) {
        case PayoffKind::none: return "none";
        case PayoffKind::constant: return "constant";
        case PayoffKind::price: return "price";
        case PayoffKind::call: return "call";
        case PayoffKind::put: return "put";
        case PayoffKind::basket: return "basket";
        case PayoffKind::basket_put: return "basket_put";
    }
    return "?";
}

[[nodiscard]] inline std::optional<PayoffKind> parse_payoff_kind(std::string_view s) {
    for (auto k : {PayoffKind::none, PayoffKind::constant, PayoffKind::price, PayoffKind::call, PayoffKind::put,
                   PayoffKind::basket, PayoffKind::basket_put}) {
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

/// Stocks, bond and claim. `profile` holds the price drifts delta_j (not the
/// log drifts), the volatilities and the short rate. `prices` are ranked,
/// largest first. The exercise payoff h is held flat in t; `none` gives a
/// European claim.
struct MarketSpec {
    CoefficientProfile profile{{0.0}, {1.0}};
    std::vector<double> prices{1.0};
    double bond = 1.0;
    double t0 = 0.0;
    double maturity = 1.0;
    PayoffSpec claim = PayoffSpec::constant(0.0);
    PayoffSpec exercise = PayoffSpec::none();

    static MarketSpec american_put(double p, double strike, double r, double delta, double sigma, double T) {
        MarketSpec m;
        m.profile = CoefficientProfile({delta}, {sigma}, RateCurve{r});
        m.prices = {p};
        m.maturity = T;
        m.claim = PayoffSpec::put(strike);
        m.exercise = m.claim;
        return m;
    }

    [[nodiscard]] MarketSpec european() const {
        MarketSpec m = *this;
        m.exercise = PayoffSpec::none();
        return m;
    }
    [[nodiscard]] std::size_t n() const noexcept { return profile.n(); }
};

/// Log-coordinate data for the simulation and the backward solvers.
struct LogProblem {
    CoefficientProfile profile;
    ProblemSpec spec;
    SimplexPoint x0;
    double t0 = 0.0;
    double maturity = 1.0;
};

namespace detail {

inline void check_payoff(const PayoffSpec& p, std::size_t n, const char* role) {
    const std::string where = std::string(role) + " payoff " + std::string(to_string(p.kind));
    if ((p.kind == PayoffKind::price || p.kind == PayoffKind::call || p.kind == PayoffKind::put) &&
        (p.rank < 1 || p.rank > n)) {
        throw ValidationError(where + ": rank " + std::to_string(p.rank) + " outside 1.." + std::to_string(n));
    }
    if ((p.kind == PayoffKind::basket || p.kind == PayoffKind::basket_put) && p.weights.size() != n) {
        throw ValidationError(where + ": expected " + std::to_string(n) + " weights");
    }
    if (!std::isfinite(p.value) || !std::isfinite(p.strike)) throw ValidationError(where + ": parameters must be finite");
}

inline void check_market_shape(const MarketSpec& m) {
    const std::size_t n = m.n();
    if (m.prices.size() != n) {
        throw ValidationError("market: " + std::to_string(m.prices.size()) + " prices for " + std::to_string(n) +
                              " stocks");
    }
    for (std::size_t j = 0; j < n; ++j) {
        if (!(m.prices[j] > 0.0) || !std::isfinite(m.prices[j])) {
            throw ValidationError("market: price p_(" + std::to_string(j + 1) + ") must be positive and finite");
        }
        if (j > 0 && m.prices[j] > m.prices[j - 1]) {
            throw ValidationError("market: prices must be ranked, largest first");
        }
    }
    if (!(m.bond > 0.0) || !std::isfinite(m.bond)) throw ValidationError("market: bond price must be positive");
    if (!(m.maturity >= m.t0)) throw ValidationError("market: maturity before t0");
    if (m.claim.is_none()) throw ValidationError("market: the claim payoff cannot be 'none'");
    check_payoff(m.claim, n, "claim");
    if (!m.exercise.is_none()) check_payoff(m.exercise, n, "exercise");
}

}  // namespace detail

/// Log drifts delta_j - sigma_j^2/2, the pricing generator, payoffs composed
/// with exp, and x0 = log p.
[[nodiscard]] inline LogProblem to_log_problem(const MarketSpec& market) {
    detail::check_market_shape(market);
    const auto& P = market.profile;
    std::vector<double> log_drift(P.n());
    for (std::size_t j = 0; j < P.n(); ++j) log_drift[j] = P.delta()[j] - 0.5 * P.sigma()[j] * P.sigma()[j];
    ObstacleSpec h = ObstacleSpec::none();
    if (!market.exercise.is_none()) h = ObstacleSpec::from_payoff(market.exercise.in_log_coordinates());
    ProblemSpec spec(GeneratorSpec::pricing(P.delta(), P.sigma(), P.rate().value), market.claim.in_log_coordinates(),
                     h, market.maturity);
    std::vector<double> x0(P.n());
    for (std::size_t j = 0; j < P.n(); ++j) x0[j] = std::log(market.prices[j]);
    return {CoefficientProfile(std::move(log_drift), P.sigma(), P.rate()), std::move(spec), SimplexPoint(std::move(x0)),
            market.t0, market.maturity};
}

/// Shape checks plus the sampled hypothesis checks on the log problem.
inline ValidationReport validate_market(const MarketSpec& market, std::size_t samples = 1000, std::uint64_t seed = 1) {
    const auto lp = to_log_problem(market);
    return validate_spec(lp.spec, lp.profile, samples, seed);
}

/// Bond value p0 exp(int_{t0}^{s} r).
[[nodiscard]] inline double bond_value(const MarketSpec& market, double s) {
    return market.bond * std::exp(market.profile.rate().integral(market.t0, s));
}

/// Price of a claim on one stock by a Cox-Ross-Rubinstein tree.
[[nodiscard]] inline double binomial_oracle(double p, double strike, double r, double sigma, double T,
                                            std::size_t steps, bool put, bool american) {
    if (steps < 1) throw ValidationError("binomial_oracle: steps must be at least 1");
    if (!(p > 0.0) || !(sigma > 0.0) || !(T >= 0.0) || !std::isfinite(r) || !std::isfinite(strike)) {
        throw ValidationError("binomial_oracle: need p > 0, sigma > 0, T >= 0 and finite r, strike");
    }
    const auto intrinsic = [&](double s) { return put ? std::max(strike - s, 0.0) : std::max(s - strike, 0.0); };
    if (T == 0.0) return intrinsic(p);
    const double dt = T / static_cast<double>(steps);
    const double log_up = sigma * std::sqrt(dt);
    const double growth = std::exp(r * dt);
    const double q = (growth - std::exp(-log_up)) / (std::exp(log_up) - std::exp(-log_up));
    if (!(q > 0.0 && q < 1.0)) {
        throw ValidationError("binomial_oracle: risk-neutral probability " + std::to_string(q) +
                              " outside (0, 1); use more steps");
    }
    const double qd = (1.0 - q) / growth, qu = q / growth;
    // node i at level L has log-price log p + (2i - L) log_up
    std::vector<double> v(steps + 1);
    for (std::size_t i = 0; i <= steps; ++i) {
        v[i] = intrinsic(p * std::exp((2.0 * static_cast<double>(i) - static_cast<double>(steps)) * log_up));
    }
    for (std::size_t L = steps; L-- > 0;) {
        for (std::size_t i = 0; i <= L; ++i) {
            const double hold = qd * v[i] + qu * v[i + 1];
            v[i] = american ? std::max(
                                  hold, intrinsic(p * std::exp((2.0 * static_cast<double>(i) - static_cast<double>(L)) *
                                                               log_up)))
                            : hold;
        }
    }
    return v[0];
}

struct PricingNumerics {
    std::size_t steps = 50;
    std::size_t paths = 100000;
    std::uint64_t seed = 1;
    SolverOptions solver = default_solver();
    /// Samples for validate_market before any simulation; 0 skips it.
    std::size_t validation_samples = 1000;
    std::size_t oracle_steps = 2000;
    /// Time steps at which the exercise region is summarized.
    std::size_t boundary_samples = 10;

    /// Degree 4: at degree 2 the exercise rule is coarse enough to bias the put by about 1%.
    static SolverOptions default_solver() {
        SolverOptions s;
        s.basis.degree = 4;
        return s;
    }
};

/// Exercise region at one time step: fraction of paths where the obstacle
/// binds with a positive option payoff, and for monotone payoffs the extreme exercised underlying value
/// (largest for puts, smallest for calls).
struct ExerciseSample {
    std::size_t step = 0;
    double t = 0.0;
    double fraction = 0.0;
    std::optional<double> boundary;
};

struct PricingResult {
    double price = 0.0;
    double standard_error = 0.0;
    /// h(t0, p); -infinity for a European claim.
    double immediate_exercise = 0.0;
    /// Mean Zbar_j at t0: dollar volatility held in the stock ranked j.
    std::vector<double> hedge;
    /// Mean cumulative consumption K_T.
    double consumption = 0.0;
    bool consumption_nondecreasing = true;
    double bond_at_maturity = 0.0;
    std::vector<ExerciseSample> exercise_boundary;
    std::optional<double> oracle_price;
    double max_violation = 0.0;
};

namespace detail {

inline std::optional<double> oracle_for(const MarketSpec& m, std::size_t steps) {
    if (m.n() != 1) return std::nullopt;
    const auto& c = m.claim;
    if (c.kind != PayoffKind::put && c.kind != PayoffKind::call) return std::nullopt;
    const bool european = m.exercise.is_none();
    if (!european && (m.exercise.kind != c.kind || m.exercise.strike != c.strike)) return std::nullopt;
    return binomial_oracle(m.prices[0], c.strike, m.profile.rate().value, m.profile.sigma()[0], m.maturity - m.t0,
                           steps, c.kind == PayoffKind::put, !european);
}

inline double payoff_value(const PayoffSpec& payoff, std::span<const double> prices) {
    const double u = *payoff.underlying(prices);
    switch (payoff.kind) {
        case PayoffKind::call: return std::max(u - payoff.strike, 0.0);
        case PayoffKind::put:
        case PayoffKind::basket_put: return std::max(payoff.strike - u, 0.0);
        default: return u;
    }
}

inline std::vector<ExerciseSample> exercise_samples(const MarketSpec& market, const PathBundle& bundle,
                                                    const ReflectedSolution& sol, std::size_t count) {
    std::vector<ExerciseSample> out;
    const std::size_t N = bundle.steps();
    if (market.exercise.is_none() || count == 0 || N == 0) return out;
    const auto kind = market.exercise.kind;
    const bool put_like = kind == PayoffKind::put || kind == PayoffKind::basket_put;
    const bool call_like = kind == PayoffKind::call;
    const std::size_t M = bundle.n_paths();
    std::vector<double> prices(bundle.n());
    for (std::size_t s = 0; s < std::min(count, N); ++s) {
        const std::size_t k = s * N / std::min(count, N);
        ExerciseSample e{k, bundle.grid().t(k), 0.0, std::nullopt};
        std::size_t hits = 0;
        for (std::size_t p = 0; p < M; ++p) {
            if (!(sol.k(p, k + 1) > sol.k(p, k))) continue;
            for (std::size_t j = 0; j < bundle.n(); ++j) prices[j] = std::exp(bundle.ranked(p, k, j));
            // out of the money the obstacle is 0 and binds only against regression noise
            if ((put_like || call_like) && !(payoff_value(market.exercise, prices) > 0.0)) continue;
            ++hits;
            if (!put_like && !call_like) continue;
            const double v = *market.exercise.underlying(prices);
            if (!e.boundary) e.boundary = v;
            else e.boundary = put_like ? std::max(*e.boundary, v) : std::min(*e.boundary, v);
        }
        e.fraction = static_cast<double>(hits) / static_cast<double>(M);
        out.push_back(e);
    }
    return out;
}

}  // namespace detail

/// Simulates the log-price bundle for a market.
[[nodiscard]] inline PathBundle simulate_market(const MarketSpec& market, const PricingNumerics& numerics) {
    const auto lp = to_log_problem(market);
    SimulationOptions sim;
    sim.policy = numerics.solver.policy;
    return simulate(lp.profile, lp.x0, TimeGrid(lp.t0, lp.maturity, numerics.steps), numerics.paths, numerics.seed,
                    sim);
}

/// Y(t0) of the pricing reflected BSDE, with hedge, consumption and
/// exercise-region diagnostics. A market with exercise 'none' gives the
/// European price through the same code path and the same noise.
[[nodiscard]] inline PricingResult price_american(const MarketSpec& market, const PricingNumerics& numerics = {}) {
    const auto lp = to_log_problem(market);
    if (numerics.validation_samples > 0) {
        require_accepted(validate_spec(lp.spec, lp.profile, numerics.validation_samples, numerics.seed));
    }
    SimulationOptions sim;
    sim.policy = numerics.solver.policy;
    const auto bundle =
        simulate(lp.profile, lp.x0, TimeGrid(lp.t0, lp.maturity, numerics.steps), numerics.paths, numerics.seed, sim);
    const auto sol = solve_reflected(bundle, lp.spec, numerics.solver);

    PricingResult r;
    r.price = sol.u0;
    r.standard_error = sol.standard_error;
    r.immediate_exercise = lp.spec.obstacle(lp.t0, lp.x0.coords());
    r.bond_at_maturity = bond_value(market, market.maturity);
    r.consumption_nondecreasing = sol.k_nondecreasing;
    r.max_violation = sol.max_violation;
    const std::size_t M = bundle.n_paths(), N = bundle.steps();
    r.hedge.assign(market.n(), 0.0);
    if (N > 0) {
        for (std::size_t p = 0; p < M; ++p) {
            for (std::size_t j = 0; j < market.n(); ++j) r.hedge[j] += sol.zbar(p, 0, j);
            r.consumption += sol.k(p, N);
        }
        for (double& h : r.hedge) h /= static_cast<double>(M);
        r.consumption /= static_cast<double>(M);
    }
    r.exercise_boundary = detail::exercise_samples(market, bundle, sol, numerics.boundary_samples);
    r.oracle_price = detail::oracle_for(market, numerics.oracle_steps);
    return r;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

[[nodiscard]] inline PayoffSpec payoff_from_json(const json& j, const std::string& where) {
    const std::string name = detail::kind_of(j, where);
    const auto kind = parse_payoff_kind(name);
    if (!kind) throw ValidationError("unknown payoff kind \"" + name + "\" at key \"" + where + ".kind\"");
    detail::reject_unknown_keys(j, where, {"kind", "value", "strike", "rank", "weights"});
    PayoffSpec p;
    p.kind = *kind;
    if (*kind == PayoffKind::constant) p.value = detail::number(j, where, "value");
    if (*kind == PayoffKind::call || *kind == PayoffKind::put || *kind == PayoffKind::basket_put) {
        p.strike = detail::number(j, where, "strike");
    }
    p.rank = j.value("rank", std::size_t{1});
    p.weights = detail::numbers_or(j, "weights", {});
    return p;
}

[[nodiscard]] inline json to_json(const PayoffSpec& p) {
    json j{{"kind", std::string(to_string(p.kind))}};
    switch (p.kind) {
        case PayoffKind::none: break;
        case PayoffKind::constant: j["value"] = p.value; break;
        case PayoffKind::price: j["rank"] = p.rank; break;
        case PayoffKind::call:
        case PayoffKind::put:
            j["strike"] = p.strike;
            j["rank"] = p.rank;
            break;
        case PayoffKind::basket: j["weights"] = p.weights; break;
        case PayoffKind::basket_put:
            j["weights"] = p.weights;
            j["strike"] = p.strike;
            break;
    }
    return j;
}

/// {"delta", "sigma", "rate", "prices", "bond", "t0", "maturity", "claim", "exercise"};
/// a missing exercise payoff means European. Other keys are left to the caller.
[[nodiscard]] inline MarketSpec market_from_json(const json& j) {
    MarketSpec m;
    m.profile = profile_from_json(j);
    m.prices = detail::require(j, "", "prices").get<std::vector<double>>();
    m.bond = detail::number_or(j, "bond", 1.0);
    m.t0 = detail::number_or(j, "t0", 0.0);
    m.maturity = detail::number(j, "", "maturity");
    m.claim = payoff_from_json(detail::require(j, "", "claim"), "claim");
    m.exercise = j.contains("exercise") ? payoff_from_json(j.at("exercise"), "exercise") : PayoffSpec::none();
    detail::check_market_shape(m);
    return m;
}

[[nodiscard]] inline json to_json(const MarketSpec& m) {
    json j = to_json(m.profile);
    j["prices"] = m.prices;
    j["bond"] = m.bond;
    j["t0"] = m.t0;
    j["maturity"] = m.maturity;
    j["claim"] = to_json(m.claim);
    j["exercise"] = to_json(m.exercise);
    return j;
}

[[nodiscard]] inline json to_json(const PricingResult& r) {
    json j;
    j["price"] = r.price;
    j["stderr"] = r.standard_error;
    j["immediate_exercise"] = std::isfinite(r.immediate_exercise) ? json(r.immediate_exercise) : json(nullptr);
    j["hedge"] = r.hedge;
    j["consumption"] = r.consumption;
    j["bond_at_maturity"] = r.bond_at_maturity;
    json samples = json::array();
    for (const auto& e : r.exercise_boundary) {
        samples.push_back({{"step", e.step},
                           {"t", e.t},
                           {"fraction", e.fraction},
                           {"boundary", e.boundary ? json(*e.boundary) : json(nullptr)}});
    }
    j["exercise_boundary_samples"] = samples;
    if (r.oracle_price) j["oracle_price"] = *r.oracle_price;
    return j;
}

}  // namespace rankbsde
