#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "rankbsde/core_model.hpp"
#include "rankbsde/error.hpp"
#include "rankbsde/registry.hpp"

namespace rankbsde {

/// One hypothesis check. For the bound checks worst_ratio is the largest
/// observed (lhs / declared-constant rhs); a value above 1 is a violation.
/// For the terminal-ordering check it is the largest h(T,x) - g(x).
struct HypothesisCheck {
    std::string name;
    bool passed = true;
    double worst_ratio = 0.0;
    double declared = 0.0;
    std::string detail;
};

struct ValidationReport {
    std::vector<HypothesisCheck> checks;

    [[nodiscard]] bool accepted() const {
        return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
    }
    [[nodiscard]] const HypothesisCheck& find(const std::string& name) const {
        for (const auto& c : checks) {
            if (c.name == name) return c;
        }
        throw ValidationError("validation report has no check named " + name);
    }
};

struct ValidationOptions {
    /// Sampled states lie in the ordered box |x_i| <= radius.
    double radius = 5.0;
    /// Sampled y and z components lie in [-value_radius, value_radius].
    double value_radius = 10.0;
};

namespace detail {

class UniformSampler {
public:
    explicit UniformSampler(std::uint64_t seed) : engine_(seed) {}
    double operator()(double lo, double hi) {
        const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
        return lo + (hi - lo) * u;
    }
    std::vector<double> ordered_point(std::size_t n, double radius) {
        std::vector<double> x(n);
        for (auto& v : x) v = (*this)(-radius, radius);
        std::sort(x.begin(), x.end(), std::greater<>());
        return x;
    }
    std::vector<double> vec(std::size_t n, double radius) {
        std::vector<double> v(n);
        for (auto& e : v) e = (*this)(-radius, radius);
        return v;
    }

private:
    std::mt19937_64 engine_;
};

inline double distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

// Allows rounding noise when the sampled ratio sits exactly on the bound.
inline constexpr double kRatioSlack = 1e-9;

inline void close_ratio_check(HypothesisCheck& check, double observed_max) {
    if (check.declared > 0.0) {
        check.worst_ratio = observed_max / check.declared;
    } else {
        check.worst_ratio = observed_max > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    }
    check.passed = check.worst_ratio <= 1.0 + kRatioSlack;
}

}  // namespace detail

/// Checks the Lipschitz / growth / ordering hypotheses of a problem by
/// random sampling against the descriptors' declared constants.
/// Deterministic for a fixed seed.
[[nodiscard]] inline ValidationReport validate_spec(const ProblemSpec& spec, const CoefficientProfile& profile,
                                                    std::size_t samples, std::uint64_t seed,
                                                    const ValidationOptions& options = {}) {
    if (samples < 1) throw ValidationError("validate_spec: samples must be at least 1");
    const std::size_t n = profile.n();
    spec.check_dimension(n);
    detail::UniformSampler rng(seed);
    const double T = spec.horizon;
    const double R = options.radius;
    const double V = options.value_radius;

    ValidationReport report;

    {  // generator Lipschitz in (y, z)
        HypothesisCheck check{"H1.lipschitz", true, 0.0, spec.generator.lipschitz_constant(), ""};
        double worst = 0.0;
        for (std::size_t s = 0; s < samples; ++s) {
            const double t = rng(0.0, T);
            const auto x = rng.ordered_point(n, R);
            const double y = rng(-V, V), y2 = rng(-V, V);
            const auto z = rng.vec(n, V), z2 = rng.vec(n, V);
            const double denom = std::abs(y - y2) + detail::distance(z, z2);
            if (denom <= 0.0) continue;
            const double num = std::abs(spec.generator.value(t, x, y, z) - spec.generator.value(t, x, y2, z2));
            worst = std::max(worst, num / denom);
        }
        detail::close_ratio_check(check, worst);
        report.checks.push_back(check);
    }
    {  // generator linear growth at (y, z) = 0
        HypothesisCheck check{"H1.growth", true, 0.0, spec.generator.growth_constant(), ""};
        double worst = 0.0;
        const std::vector<double> zero(n, 0.0);
        for (std::size_t s = 0; s < samples; ++s) {
            const double t = rng(0.0, T);
            const auto x = rng.ordered_point(n, R);
            worst = std::max(worst, std::abs(spec.generator.value(t, x, 0.0, zero)) / (1.0 + euclidean_norm(x)));
        }
        detail::close_ratio_check(check, worst);
        report.checks.push_back(check);
    }
    {  // terminal Lipschitz
        HypothesisCheck check{"H2.lipschitz", true, 0.0, spec.terminal.lipschitz_constant(n, R), ""};
        double worst = 0.0;
        for (std::size_t s = 0; s < samples; ++s) {
            const auto x = rng.ordered_point(n, R);
            std::vector<double> x2;
            if (s % 2 == 0) {
                x2 = rng.ordered_point(n, R);
            } else {
                // nearby pair probes the local slope
                x2 = x;
                for (auto& v : x2) v = std::clamp(v + rng(-1e-3, 1e-3), -R, R);
                std::sort(x2.begin(), x2.end(), std::greater<>());
            }
            const double d = detail::distance(x, x2);
            if (d <= 0.0) continue;
            worst = std::max(worst, std::abs(spec.terminal(x) - spec.terminal(x2)) / d);
        }
        detail::close_ratio_check(check, worst);
        report.checks.push_back(check);
    }
    {  // obstacle polynomial growth
        const auto [c, p] = spec.obstacle.growth_constants(n, R, T);
        HypothesisCheck check{"H3.growth", true, 0.0, c, "p=" + std::to_string(p)};
        if (!spec.obstacle.is_sentinel()) {
            double worst = 0.0;
            bool any_positive = false;
            for (std::size_t s = 0; s < samples; ++s) {
                const double t = rng(0.0, T);
                const auto x = rng.ordered_point(n, R);
                const double h = spec.obstacle(t, x);
                if (h > 0.0) any_positive = true;
                worst = std::max(worst, h / (1.0 + std::pow(euclidean_norm(x), p)));
            }
            if (any_positive || c > 0.0) detail::close_ratio_check(check, worst);
        }
        report.checks.push_back(check);
    }
    {  // h(T, x) <= g(x)
        HypothesisCheck check{"H3.terminal_order", true, 0.0, 0.0, ""};
        if (!spec.obstacle.is_sentinel()) {
            double worst = -std::numeric_limits<double>::infinity();
            for (std::size_t s = 0; s < samples; ++s) {
                const auto x = rng.ordered_point(n, R);
                const double g = spec.terminal(x);
                const double excess = spec.obstacle(T, x) - g;
                if (excess > worst) {
                    worst = excess;
                    if (excess > 1e-12 * (1.0 + std::abs(g))) {
                        check.detail = "h(T,x) exceeds g(x) by " + std::to_string(excess);
                    }
                }
            }
            check.worst_ratio = worst;
            check.passed = check.detail.empty();
        }
        report.checks.push_back(check);
    }
    return report;
}

/// Throws SpecRejected naming every failed hypothesis.
inline void require_accepted(const ValidationReport& report) {
    if (report.accepted()) return;
    std::string msg = "problem rejected:";
    for (const auto& c : report.checks) {
        if (!c.passed) {
            msg += " " + c.name + " (worst " + std::to_string(c.worst_ratio) + ")";
            if (!c.detail.empty()) msg += " " + c.detail;
            msg += ";";
        }
    }
    throw SpecRejected(msg);
}

}  // namespace rankbsde
