#pragma once

// Parameterized families for the generator F(t, x, y, z), the terminal
// payoff g(x) and the obstacle h(t, x). All functions take ranked
// coordinates (largest first). Each family carries analytic constants for
// the Lipschitz / growth hypotheses; a descriptor may override them with a
// user-declared constant, which the validator then checks by sampling.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rankbsde/core_model.hpp"
#include "rankbsde/error.hpp"

namespace rankbsde {

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

enum class GeneratorKind { zero, discount, pricing, affine };

/// F(t, x, y, z). Every built-in family is affine in y, which is what lets
/// the backward solvers take implicit steps in closed form.
struct GeneratorSpec {
    GeneratorKind kind = GeneratorKind::zero;
    /// discount: F = -rate*y.  pricing: the short rate r.
    double rate = 0.0;
    /// pricing: price drifts and volatilities of the ranked assets.
    std::vector<double> delta;
    std::vector<double> sigma;
    /// affine: F = intercept + y_coef*y + z_coef.z + x_coef.x
    double intercept = 0.0;
    double y_coef = 0.0;
    std::vector<double> z_coef;
    std::vector<double> x_coef;
    std::optional<double> declared_lipschitz;
    std::optional<double> declared_growth;

    static GeneratorSpec zero() { return {}; }
    static GeneratorSpec discount(double r) {
        GeneratorSpec g;
        g.kind = GeneratorKind::discount;
        g.rate = r;
        return g;
    }
    static GeneratorSpec pricing(std::vector<double> price_delta, std::vector<double> price_sigma, double r) {
        GeneratorSpec g;
        g.kind = GeneratorKind::pricing;
        g.delta = std::move(price_delta);
        g.sigma = std::move(price_sigma);
        g.rate = r;
        return g;
    }

    /// Market price of risk (delta_j - r) / sigma_j for the pricing family.
    [[nodiscard]] std::vector<double> risk_premia() const {
        std::vector<double> a(delta.size());
        for (std::size_t j = 0; j < delta.size(); ++j) a[j] = (delta[j] - rate) / sigma[j];
        return a;
    }

    [[nodiscard]] double value(double /*t*/, std::span<const double> x, double y,
                               std::span<const double> z) const {
        switch (kind) {
            case GeneratorKind::zero:
                return 0.0;
            case GeneratorKind::discount:
                return -rate * y;
            case GeneratorKind::pricing: {
                double premium = 0.0;
                for (std::size_t j = 0; j < delta.size() && j < z.size(); ++j) {
                    premium += (delta[j] - rate) / sigma[j] * z[j];
                }
                return -(rate * y + premium);
            }
            case GeneratorKind::affine: {
                double v = intercept + y_coef * y;
                for (std::size_t j = 0; j < z_coef.size() && j < z.size(); ++j) v += z_coef[j] * z[j];
                for (std::size_t j = 0; j < x_coef.size() && j < x.size(); ++j) v += x_coef[j] * x[j];
                return v;
            }
        }
        return 0.0;
    }

    /// dF/dy, constant in (x, y, z) for every family.
    [[nodiscard]] double y_slope(double /*t*/) const noexcept {
        switch (kind) {
            case GeneratorKind::zero: return 0.0;
            case GeneratorKind::discount: return -rate;
            case GeneratorKind::pricing: return -rate;
            case GeneratorKind::affine: return y_coef;
        }
        return 0.0;
    }

    /// Constant c with |F(y,z) - F(y',z')| <= c(|y-y'| + |z-z'|_2).
    [[nodiscard]] double analytic_lipschitz() const {
        switch (kind) {
            case GeneratorKind::zero: return 0.0;
            case GeneratorKind::discount: return std::abs(rate);
            case GeneratorKind::pricing: return std::abs(rate) + euclidean_norm(risk_premia());
            case GeneratorKind::affine: return std::abs(y_coef) + euclidean_norm(z_coef);
        }
        return 0.0;
    }

    /// Constant c with |F(t,x,0,0)| <= c(1 + |x|).
    [[nodiscard]] double analytic_growth() const {
        if (kind != GeneratorKind::affine) return 0.0;
        return std::max(std::abs(intercept), euclidean_norm(x_coef));
    }

    [[nodiscard]] double lipschitz_constant() const { return declared_lipschitz.value_or(analytic_lipschitz()); }
    [[nodiscard]] double growth_constant() const { return declared_growth.value_or(analytic_growth()); }

    /// Dimension requirements against a particle count.
    void check_dimension(std::size_t n) const {
        if (kind == GeneratorKind::pricing) {
            if (delta.size() != n || sigma.size() != n) {
                throw ValidationError("generator pricing: expected " + std::to_string(n) +
                                      " drifts and volatilities");
            }
            for (double s : sigma) {
                if (!(s > 0.0)) throw ValidationError("generator pricing: sigma must be positive");
            }
        }
        if (kind == GeneratorKind::affine) {
            if (z_coef.size() > n || x_coef.size() > n) {
                throw ValidationError("generator affine: coefficient vector longer than n");
            }
        }
    }
};

// ---------------------------------------------------------------------------
// Terminal payoff
// ---------------------------------------------------------------------------

enum class TerminalKind {
    constant,        // value
    coordinate,      // x_(rank)
    sum,             // scale * sum_j x_j
    call,            // (x_(rank) - strike)^+
    put,             // (strike - x_(rank))^+
    sum_put,         // (strike - scale * sum_j x_j)^+
    exp_coordinate,  // exp(x_(rank))
    call_exp,        // (exp(x_(rank)) - strike)^+
    put_exp,         // (strike - exp(x_(rank)))^+
    basket_exp,      // sum_j w_j exp(x_(j))
    basket_put_exp,  // (strike - sum_j w_j exp(x_(j)))^+
};

struct TerminalSpec {
    TerminalKind kind = TerminalKind::constant;
    double value = 0.0;
    /// One-based rank, as in x_(1) >= x_(2) >= ...
    std::size_t rank = 1;
    double strike = 0.0;
    double scale = 1.0;
    std::vector<double> weights;
    std::optional<double> declared_lipschitz;

    static TerminalSpec constant(double v) {
        TerminalSpec g;
        g.value = v;
        return g;
    }
    static TerminalSpec coordinate(std::size_t rank = 1) {
        TerminalSpec g;
        g.kind = TerminalKind::coordinate;
        g.rank = rank;
        return g;
    }
    static TerminalSpec sum(double scale = 1.0) {
        TerminalSpec g;
        g.kind = TerminalKind::sum;
        g.scale = scale;
        return g;
    }
    static TerminalSpec of(TerminalKind kind, double strike, std::size_t rank = 1) {
        TerminalSpec g;
        g.kind = kind;
        g.strike = strike;
        g.rank = rank;
        return g;
    }

    [[nodiscard]] double operator()(std::span<const double> x) const {
        const auto at = [&](std::size_t r) { return x[r - 1]; };
        switch (kind) {
            case TerminalKind::constant: return value;
            case TerminalKind::coordinate: return at(rank);
            case TerminalKind::sum: return scale * sum_of(x);
            case TerminalKind::call: return std::max(at(rank) - strike, 0.0);
            case TerminalKind::put: return std::max(strike - at(rank), 0.0);
            case TerminalKind::sum_put: return std::max(strike - scale * sum_of(x), 0.0);
            case TerminalKind::exp_coordinate: return std::exp(at(rank));
            case TerminalKind::call_exp: return std::max(std::exp(at(rank)) - strike, 0.0);
            case TerminalKind::put_exp: return std::max(strike - std::exp(at(rank)), 0.0);
            case TerminalKind::basket_exp: {
                double v = 0.0;
                for (std::size_t j = 0; j < weights.size() && j < x.size(); ++j) v += weights[j] * std::exp(x[j]);
                return v;
            }
            case TerminalKind::basket_put_exp: {
                double v = 0.0;
                for (std::size_t j = 0; j < weights.size() && j < x.size(); ++j) v += weights[j] * std::exp(x[j]);
                return std::max(strike - v, 0.0);
            }
        }
        return 0.0;
    }

    [[nodiscard]] bool is_constant() const noexcept { return kind == TerminalKind::constant; }

    /// Lipschitz constant on the box |x_i| <= radius. Families built on exp()
    /// are only locally Lipschitz, so their constant grows with the radius.
    [[nodiscard]] double analytic_lipschitz(std::size_t n, double radius) const {
        const double root_n = std::sqrt(static_cast<double>(n));
        switch (kind) {
            case TerminalKind::constant: return 0.0;
            case TerminalKind::coordinate:
            case TerminalKind::call:
            case TerminalKind::put: return 1.0;
            case TerminalKind::sum:
            case TerminalKind::sum_put: return std::abs(scale) * root_n;
            case TerminalKind::put_exp: return std::abs(strike);
            case TerminalKind::exp_coordinate:
            case TerminalKind::call_exp: return std::exp(radius);
            case TerminalKind::basket_exp: return euclidean_norm(weights) * std::exp(radius);
            case TerminalKind::basket_put_exp: {
                // with non-negative weights the gradient lives where the basket is below the strike
                const double bound = euclidean_norm(weights) * std::exp(radius);
                const bool positive = std::all_of(weights.begin(), weights.end(), [](double v) { return v >= 0.0; });
                return positive ? std::min(bound, std::abs(strike)) : bound;
            }
        }
        return 0.0;
    }

    [[nodiscard]] double lipschitz_constant(std::size_t n, double radius) const {
        return declared_lipschitz.value_or(analytic_lipschitz(n, radius));
    }

    void check_dimension(std::size_t n) const {
        const bool ranked = kind == TerminalKind::coordinate || kind == TerminalKind::call ||
                            kind == TerminalKind::put || kind == TerminalKind::exp_coordinate ||
                            kind == TerminalKind::call_exp || kind == TerminalKind::put_exp;
        if (ranked && (rank < 1 || rank > n)) {
            throw ValidationError("terminal: rank " + std::to_string(rank) + " outside 1.." + std::to_string(n));
        }
        if ((kind == TerminalKind::basket_exp || kind == TerminalKind::basket_put_exp) && weights.size() != n) {
            throw ValidationError("terminal " + std::string(kind == TerminalKind::basket_exp ? "basket_exp" : "basket_put_exp") +
                                  ": expected " + std::to_string(n) + " weights");
        }
    }

private:
    static double sum_of(std::span<const double> x) {
        double s = 0.0;
        for (double v : x) s += v;
        return s;
    }
};

// ---------------------------------------------------------------------------
// Obstacle
// ---------------------------------------------------------------------------

enum class ObstacleKind {
    none,               // h = -infinity; the reflected equation reduces to the plain one
    constant,           // value
    payoff,             // payoff(x) + offset, flat in t
    discounted_payoff,  // exp(-rate (maturity - t)) payoff(x) + offset
};

struct ObstacleSpec {
    ObstacleKind kind = ObstacleKind::none;
    double value = 0.0;
    double offset = 0.0;
    double rate = 0.0;
    double maturity = 0.0;
    /// Payoff used by the payoff families. Empty means "same as the terminal".
    std::optional<TerminalSpec> payoff;
    std::optional<double> declared_growth_c;
    std::optional<int> declared_growth_p;

    static ObstacleSpec none() { return {}; }
    static ObstacleSpec constant(double v) {
        ObstacleSpec h;
        h.kind = ObstacleKind::constant;
        h.value = v;
        return h;
    }
    static ObstacleSpec from_payoff(std::optional<TerminalSpec> g = std::nullopt, double offset = 0.0) {
        ObstacleSpec h;
        h.kind = ObstacleKind::payoff;
        h.payoff = std::move(g);
        h.offset = offset;
        return h;
    }

    [[nodiscard]] bool is_sentinel() const noexcept { return kind == ObstacleKind::none; }
    [[nodiscard]] bool is_constant() const noexcept { return kind == ObstacleKind::constant; }

    [[nodiscard]] double operator()(double t, std::span<const double> x) const {
        switch (kind) {
            case ObstacleKind::none: return -std::numeric_limits<double>::infinity();
            case ObstacleKind::constant: return value;
            case ObstacleKind::payoff: return resolved()(x) + offset;
            case ObstacleKind::discounted_payoff:
                return std::exp(-rate * (maturity - t)) * resolved()(x) + offset;
        }
        return 0.0;
    }

    /// Declared (c, p) with h(t, x) <= c (1 + |x|^p) on the box |x_i| <= radius.
    [[nodiscard]] std::pair<double, int> growth_constants(std::size_t n, double radius, double horizon) const {
        double c = 0.0;
        int p = 1;
        switch (kind) {
            case ObstacleKind::none: c = 0.0; p = 0; break;
            case ObstacleKind::constant: c = std::max(value, 0.0); p = 0; break;
            case ObstacleKind::payoff:
            case ObstacleKind::discounted_payoff: {
                const std::vector<double> origin(n, 0.0);
                const auto& g = resolved();
                double factor = 1.0;
                if (kind == ObstacleKind::discounted_payoff && rate < 0.0) {
                    factor = std::exp(-rate * std::max(maturity, horizon));
                }
                c = factor * (std::abs(g(origin)) + g.lipschitz_constant(n, radius)) + std::max(offset, 0.0);
                break;
            }
        }
        return {declared_growth_c.value_or(c), declared_growth_p.value_or(p)};
    }

    [[nodiscard]] const TerminalSpec& resolved() const {
        if (!payoff) throw ValidationError("obstacle: payoff family used before the payoff was resolved");
        return *payoff;
    }
};

// ---------------------------------------------------------------------------

/// Descriptor triple (F, g, h) on a fixed horizon.
struct ProblemSpec {
    GeneratorSpec generator;
    TerminalSpec terminal;
    ObstacleSpec obstacle;
    double horizon = 1.0;

    ProblemSpec() = default;
    ProblemSpec(GeneratorSpec f, TerminalSpec g, ObstacleSpec h, double T = 1.0)
        : generator(std::move(f)), terminal(std::move(g)), obstacle(std::move(h)), horizon(T) {
        resolve();
    }

    /// Payoff-style obstacles without an explicit payoff borrow the terminal.
    void resolve() {
        if ((obstacle.kind == ObstacleKind::payoff || obstacle.kind == ObstacleKind::discounted_payoff) &&
            !obstacle.payoff) {
            obstacle.payoff = terminal;
        }
    }

    void check_dimension(std::size_t n) const {
        generator.check_dimension(n);
        terminal.check_dimension(n);
        if (obstacle.payoff) obstacle.payoff->check_dimension(n);
    }
};

// Registry names, used by the JSON layer and in error messages.

[[nodiscard]] inline std::string_view to_string(GeneratorKind k) {
    switch (k) {
        case GeneratorKind::zero: return "zero";
        case GeneratorKind::discount: return "discount";
        case GeneratorKind::pricing: return "pricing";
        case GeneratorKind::affine: return "affine";
    }
    return "?";
}

[[nodiscard]] inline std::string_view to_string(TerminalKind k) {
    switch (k) {
        case TerminalKind::constant: return "constant";
        case TerminalKind::coordinate: return "coordinate";
        case TerminalKind::sum: return "sum";
        case TerminalKind::call: return "call";
        case TerminalKind::put: return "put";
        case TerminalKind::sum_put: return "sum_put";
        case TerminalKind::exp_coordinate: return "exp_coordinate";
        case TerminalKind::call_exp: return "call_exp";
        case TerminalKind::put_exp: return "put_exp";
        case TerminalKind::basket_exp: return "basket_exp";
        case TerminalKind::basket_put_exp: return "basket_put_exp";
    }
    return "?";
}

[[nodiscard]] inline std::string_view to_string(ObstacleKind k) {
    switch (k) {
        case ObstacleKind::none: return "none";
        case ObstacleKind::constant: return "constant";
        case ObstacleKind::payoff: return "payoff";
        case ObstacleKind::discounted_payoff: return "discounted_payoff";
    }
    return "?";
}

[[nodiscard]] inline std::optional<GeneratorKind> parse_generator_kind(std::string_view s) {
    for (auto k : {GeneratorKind::zero, GeneratorKind::discount, GeneratorKind::pricing, GeneratorKind::affine}) {
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

[[nodiscard]] inline std::optional<TerminalKind> parse_terminal_kind(std::string_view s) {
    for (auto k : {TerminalKind::constant, TerminalKind::coordinate, TerminalKind::sum, TerminalKind::call,
                   TerminalKind::put, TerminalKind::sum_put, TerminalKind::exp_coordinate, TerminalKind::call_exp,
                   TerminalKind::put_exp, TerminalKind::basket_exp, TerminalKind::basket_put_exp}) {
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

[[nodiscard]] inline std::optional<ObstacleKind> parse_obstacle_kind(std::string_view s) {
    for (auto k : {ObstacleKind::none, ObstacleKind::constant, ObstacleKind::payoff, ObstacleKind::discounted_payoff}) {
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

}  // namespace rankbsde
