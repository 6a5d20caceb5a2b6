#pragma once

// Euler-Maruyama simulation of the rank-based system
//
//   dX_i = sum_j delta_j 1{X_i = X_(j)} dt + sum_j sigma_j 1{X_i = X_(j)} dW_i
//
// with the rank refreshed at every step, plus the ranked-coordinate
// by-products: ranked Brownian increments, local times of adjacent ranks,
// and a softmin-smoothed variant of the coefficients.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "rankbsde/core_model.hpp"
#include "rankbsde/csv.hpp"
#include "rankbsde/error.hpp"
#include "rankbsde/parallel.hpp"
#include "rankbsde/philox.hpp"

namespace rankbsde {

class TimeGrid {
public:
    TimeGrid(double t0, double T, std::size_t steps) : t0_(t0), T_(T), steps_(steps) {
        if (!std::isfinite(t0) || !std::isfinite(T)) throw ValidationError("time grid: endpoints must be finite");
        if (T < t0) throw ValidationError("time grid: T must not precede t0");
        if (steps < 1) throw ValidationError("time grid: at least one step is required");
        if (steps > std::numeric_limits<std::uint32_t>::max()) throw ValidationError("time grid: too many steps");
    }

    [[nodiscard]] double t0() const noexcept { return t0_; }
    [[nodiscard]] double T() const noexcept { return T_; }
    [[nodiscard]] std::size_t steps() const noexcept { return steps_; }
    [[nodiscard]] double dt() const noexcept { return (T_ - t0_) / static_cast<double>(steps_); }
    [[nodiscard]] double t(std::size_t k) const noexcept {
        return k == steps_ ? T_ : t0_ + static_cast<double>(k) * dt();
    }

private:
    double t0_;
    double T_;
    std::size_t steps_;
};

struct SimulationStats {
    bool concave = true;
    /// Fraction of (path, step >= 1) pairs with an exact tie between adjacent ranks.
    double tie_fraction = 0.0;
    /// Fraction of (path, step >= 1) pairs where three consecutive ranks sit
    /// within sigma_max * sqrt(dt) of each other. Reported for non-concave runs.
    double triple_proximity_fraction = 0.0;
};

struct LocalTimeReport {
    /// Total negative increment mass removed before accumulation, over all paths.
    double clipped_mass = 0.0;
    /// Mean over paths of Lambda^{j,j+1}(T), one entry per adjacent pair.
    std::vector<double> mean_terminal;
    std::vector<double> max_terminal;
};

/// Ensemble of simulated trajectories. Storage is path-major:
/// state (p, k) occupies [((p * (N + 1)) + k) * n, ... + n).
class PathBundle {
public:
    PathBundle(TimeGrid grid, std::size_t n, std::size_t n_paths)
        : grid_(grid), n_(n), paths_(n_paths),
          x_(n_paths * (grid.steps() + 1) * n), dw_(n_paths * grid.steps() * n),
          order_(n_paths * (grid.steps() + 1) * n) {}

    [[nodiscard]] const TimeGrid& grid() const noexcept { return grid_; }
    [[nodiscard]] std::size_t n() const noexcept { return n_; }
    [[nodiscard]] std::size_t n_paths() const noexcept { return paths_; }
    [[nodiscard]] std::size_t steps() const noexcept { return grid_.steps(); }

    /// Named state X(t_k) of path p.
    [[nodiscard]] std::span<const double> named(std::size_t p, std::size_t k) const {
        return {x_.data() + state_offset(p, k), n_};
    }
    /// named_at(p, k)[j] is the named index holding rank j at t_k.
    [[nodiscard]] std::span<const std::uint16_t> named_at(std::size_t p, std::size_t k) const {
        return {order_.data() + state_offset(p, k), n_};
    }
    [[nodiscard]] double ranked(std::size_t p, std::size_t k, std::size_t j) const {
        return x_[state_offset(p, k) + order_[state_offset(p, k) + j]];
    }
    void ranked_into(std::size_t p, std::size_t k, std::span<double> out) const {
        for (std::size_t j = 0; j < n_; ++j) out[j] = ranked(p, k, j);
    }
    [[nodiscard]] std::vector<double> ranked_state(std::size_t p, std::size_t k) const {
        std::vector<double> out(n_);
        ranked_into(p, k, out);
        return out;
    }
    /// Brownian increment of named particle i over [t_k, t_{k+1}].
    [[nodiscard]] double dw(std::size_t p, std::size_t k, std::size_t i) const {
        return dw_[increment_offset(p, k) + i];
    }
    /// Ranked Brownian increment: dW of whichever particle holds rank j at t_k.
    [[nodiscard]] double dbeta(std::size_t p, std::size_t k, std::size_t j) const {
        return dw_[increment_offset(p, k) + order_[state_offset(p, k) + j]];
    }

    [[nodiscard]] bool has_local_times() const noexcept { return !lambda_.empty(); }
    /// Cumulative Lambda^{j+1,j+2}(t_k) for zero-based pair j (ranks j and j+1).
    [[nodiscard]] double local_time(std::size_t p, std::size_t k, std::size_t j) const {
        return lambda_[(p * (grid_.steps() + 1) + k) * pairs() + j];
    }

    [[nodiscard]] const SimulationStats& stats() const noexcept { return stats_; }
    [[nodiscard]] const std::optional<LocalTimeReport>& local_time_report() const noexcept { return lt_report_; }

    /// Raw storage, for bit-level comparisons.
    [[nodiscard]] const std::vector<double>& raw_states() const noexcept { return x_; }
    [[nodiscard]] const std::vector<double>& raw_increments() const noexcept { return dw_; }

private:
    friend struct BundleAccess;

    [[nodiscard]] std::size_t state_offset(std::size_t p, std::size_t k) const noexcept {
        return (p * (grid_.steps() + 1) + k) * n_;
    }
    [[nodiscard]] std::size_t increment_offset(std::size_t p, std::size_t k) const noexcept {
        return (p * grid_.steps() + k) * n_;
    }
    [[nodiscard]] std::size_t pairs() const noexcept { return n_ - 1; }

    TimeGrid grid_;
    std::size_t n_;
    std::size_t paths_;
    std::vector<double> x_;
    std::vector<double> dw_;
    std::vector<std::uint16_t> order_;
    std::vector<double> lambda_;
    SimulationStats stats_;
    std::optional<LocalTimeReport> lt_report_;
};

struct BundleAccess {
    static std::vector<double>& x(PathBundle& b) { return b.x_; }
    static std::vector<double>& dw(PathBundle& b) { return b.dw_; }
    static std::vector<std::uint16_t>& order(PathBundle& b) { return b.order_; }
    static std::vector<double>& lambda(PathBundle& b) { return b.lambda_; }
    static SimulationStats& stats(PathBundle& b) { return b.stats_; }
    static std::optional<LocalTimeReport>& lt(PathBundle& b) { return b.lt_report_; }
};

struct SimulationOptions {
    bool allow_nonconcave = false;
    ExecutionPolicy policy{};
};

namespace detail {

constexpr std::size_t kMaxParticles = 65535;

inline void check_simulation_inputs(const CoefficientProfile& profile, const SimplexPoint& x0, std::size_t n_paths) {
    if (x0.n() != profile.n()) {
        throw ValidationError("simulate: x0 has " + std::to_string(x0.n()) + " coordinates, profile has " +
                              std::to_string(profile.n()));
    }
    if (profile.n() > kMaxParticles) throw ValidationError("simulate: too many particles");
    if (n_paths < 1) throw ValidationError("simulate: n_paths must be at least 1");
}

// Coefficients used for one Euler step; the exact engine reads them by rank,
// the smoothed engine mixes them with softmin weights.
struct ExactCoefficients {
    const CoefficientProfile& profile;
    void operator()(std::span<const double> x, std::span<const std::uint16_t> named_at, std::span<double> drift,
                    std::span<double> vol) const {
        for (std::size_t j = 0; j < named_at.size(); ++j) {
            drift[named_at[j]] = profile.delta()[j];
            vol[named_at[j]] = profile.sigma()[j];
        }
        (void)x;
    }
};

struct SoftminCoefficients {
    const CoefficientProfile& profile;
    double m;
    void operator()(std::span<const double> x, std::span<const std::uint16_t> named_at, std::span<double> drift,
                    std::span<double> vol) const {
        const std::size_t n = x.size();
        std::vector<double> dist(n);
        for (std::size_t i = 0; i < n; ++i) {
            double closest = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < n; ++j) {
                dist[j] = std::abs(x[i] - x[named_at[j]]);
                closest = std::min(closest, dist[j]);
            }
            double wsum = 0.0, b = 0.0, s = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                // shifted by the closest distance so the largest weight is exactly 1
                const double w = std::exp(-m * (dist[j] - closest));
                wsum += w;
                b += w * profile.delta()[j];
                s += w * profile.sigma()[j];
            }
            drift[i] = b / wsum;
            vol[i] = s / wsum;
        }
    }
};

inline void store_order(std::span<const double> x, std::span<std::uint16_t> out, std::span<std::size_t> scratch) {
    rank_order(x, scratch);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = static_cast<std::uint16_t>(scratch[j]);
}

template <typename Coefficients>
PathBundle run_euler(const CoefficientProfile& profile, const SimplexPoint& x0, const TimeGrid& grid,
                     std::size_t n_paths, std::uint64_t seed, const ExecutionPolicy& policy,
                     const Coefficients& coefficients) {
    const std::size_t n = profile.n();
    const std::size_t N = grid.steps();
    PathBundle bundle(grid, n, n_paths);
    auto& X = BundleAccess::x(bundle);
    auto& DW = BundleAccess::dw(bundle);
    auto& ORD = BundleAccess::order(bundle);
    const NormalStream normal(seed);
    const double dt = grid.dt();
    const double sqrt_dt = std::sqrt(dt);
    const double near = profile.max_sigma() * sqrt_dt;

    std::vector<std::uint64_t> ties(n_paths, 0), triples(n_paths, 0);
    parallel_for(n_paths, policy, [&](std::size_t p) {
        std::vector<std::size_t> scratch(n);
        std::vector<double> drift(n), vol(n);
        const std::size_t base = p * (N + 1) * n;
        std::copy(x0.coords().begin(), x0.coords().end(), X.begin() + static_cast<std::ptrdiff_t>(base));
        store_order({X.data() + base, n}, {ORD.data() + base, n}, scratch);
        for (std::size_t k = 0; k < N; ++k) {
            const std::size_t cur = base + k * n;
            const std::size_t nxt = cur + n;
            const std::size_t inc = (p * N + k) * n;
            const std::span<const double> xk{X.data() + cur, n};
            const std::span<const std::uint16_t> ord{ORD.data() + cur, n};
            coefficients(xk, ord, drift, vol);
            for (std::size_t i = 0; i < n; ++i) {
                const double dw = sqrt_dt * normal(p, static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(i));
                DW[inc + i] = dw;
                X[nxt + i] = X[cur + i] + drift[i] * dt + vol[i] * dw;
            }
            store_order({X.data() + nxt, n}, {ORD.data() + nxt, n}, scratch);
            bool tie = false, triple = false;
            for (std::size_t j = 0; j + 1 < n; ++j) {
                const double g1 = X[nxt + ORD[nxt + j]] - X[nxt + ORD[nxt + j + 1]];
                if (g1 == 0.0) tie = true;
                if (j + 2 < n) {
                    const double g2 = X[nxt + ORD[nxt + j + 1]] - X[nxt + ORD[nxt + j + 2]];
                    if (g1 + g2 < near) triple = true;
                }
            }
            ties[p] += tie;
            triples[p] += triple;
        }
    });

    auto& stats = BundleAccess::stats(bundle);
    stats.concave = profile.concave();
    std::uint64_t tie_total = 0, triple_total = 0;
    for (std::size_t p = 0; p < n_paths; ++p) {
        tie_total += ties[p];
        triple_total += triples[p];
    }
    const double pairs = static_cast<double>(n_paths) * static_cast<double>(N);
    stats.tie_fraction = static_cast<double>(tie_total) / pairs;
    stats.triple_proximity_fraction = static_cast<double>(triple_total) / pairs;
    return bundle;
}

}  // namespace detail

/// Simulates n_paths trajectories from x0 (named coordinate i starts at
/// x0.coords()[i]). Noise for (path, step, particle) depends only on the seed,
/// so the result is bit-identical for every worker count.
[[nodiscard]] inline PathBundle simulate(const CoefficientProfile& profile, const SimplexPoint& x0,
                                         const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                                         const SimulationOptions& options = {}) {
    detail::check_simulation_inputs(profile, x0, n_paths);
    if (!profile.concave() && !options.allow_nonconcave) {
        throw ValidationError(
            "simulate: squared volatilities are not concave in rank; set allow_nonconcave to proceed");
    }
    return detail::run_euler(profile, x0, grid, n_paths, seed, options.policy,
                             detail::ExactCoefficients{profile});
}

/// Same scheme and noise as simulate, with rank indicators replaced by
/// softmin weights w_ij ~ exp(-m |X_i - X_(j)|), normalized over j.
[[nodiscard]] inline PathBundle smoothed_simulate(const CoefficientProfile& profile, const SimplexPoint& x0,
                                                  const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                                                  double m, const SimulationOptions& options = {}) {
    if (!(m > 0.0) || !std::isfinite(m)) throw ValidationError("smoothed_simulate: m must be positive and finite");
    detail::check_simulation_inputs(profile, x0, n_paths);
    if (!profile.concave() && !options.allow_nonconcave) {
        throw ValidationError(
            "smoothed_simulate: squared volatilities are not concave in rank; set allow_nonconcave to proceed");
    }
    if (profile.n() == 1) {
        return detail::run_euler(profile, x0, grid, n_paths, seed, options.policy,
                                 detail::ExactCoefficients{profile});
    }
    return detail::run_euler(profile, x0, grid, n_paths, seed, options.policy,
                             detail::SoftminCoefficients{profile, m});
}

/// Recovers the local-time increments of adjacent ranks from the ranked
/// decomposition dX_(j) = delta_j dt + sigma_j dbeta_j + (dL^{j,j+1} - dL^{j-1,j}) / 2.
/// The triangular recursion runs on raw residuals; negative increments are
/// clipped to zero only when accumulated, and the removed mass is reported.
inline LocalTimeReport estimate_local_times(PathBundle& bundle, const CoefficientProfile& profile,
                                            const ExecutionPolicy& policy = {}) {
    const std::size_t n = bundle.n();
    if (profile.n() != n) throw ValidationError("estimate_local_times: profile dimension mismatch");
    LocalTimeReport report;
    if (n < 2) {
        BundleAccess::lt(bundle) = report;
        return report;
    }
    const std::size_t pairs = n - 1;
    const std::size_t N = bundle.steps();
    const std::size_t M = bundle.n_paths();
    const double dt = bundle.grid().dt();
    auto& lambda = BundleAccess::lambda(bundle);
    lambda.assign(M * (N + 1) * pairs, 0.0);
    std::vector<double> clipped(M, 0.0);

    parallel_for(M, policy, [&](std::size_t p) {
        std::vector<double> acc(pairs, 0.0);
        for (std::size_t k = 0; k < N; ++k) {
            double prev = 0.0;
            for (std::size_t j = 0; j < pairs; ++j) {
                const double residual = bundle.ranked(p, k + 1, j) - bundle.ranked(p, k, j) -
                                        profile.delta()[j] * dt - profile.sigma()[j] * bundle.dbeta(p, k, j);
                const double inc = 2.0 * residual + prev;
                prev = inc;
                if (inc < 0.0) {
                    clipped[p] -= inc;
                } else {
                    acc[j] += inc;
                }
                lambda[(p * (N + 1) + k + 1) * pairs + j] = acc[j];
            }
        }
    });

    report.mean_terminal.assign(pairs, 0.0);
    report.max_terminal.assign(pairs, 0.0);
    for (std::size_t p = 0; p < M; ++p) {
        report.clipped_mass += clipped[p];
        for (std::size_t j = 0; j < pairs; ++j) {
            const double v = bundle.local_time(p, N, j);
            report.mean_terminal[j] += v;
            report.max_terminal[j] = std::max(report.max_terminal[j], v);
        }
    }
    for (auto& v : report.mean_terminal) v /= static_cast<double>(M);
    BundleAccess::lt(bundle) = report;
    return report;
}

/// Discrete quadratic covariation of the ranked Brownian motions over [t0, T].
struct QuadraticVariationReport {
    std::size_t n = 0;
    /// Row-major n x n mean over paths of sum_k dbeta_j dbeta_l.
    std::vector<double> mean;
    std::vector<double> standard_error;

    [[nodiscard]] double at(std::size_t j, std::size_t l) const { return mean[j * n + l]; }
    [[nodiscard]] double se(std::size_t j, std::size_t l) const { return standard_error[j * n + l]; }
};

[[nodiscard]] inline QuadraticVariationReport ranked_brownian_diagnostics(const PathBundle& bundle) {
    const std::size_t n = bundle.n();
    const std::size_t M = bundle.n_paths();
    QuadraticVariationReport report;
    report.n = n;
    report.mean.assign(n * n, 0.0);
    report.standard_error.assign(n * n, 0.0);
    std::vector<double> sq(n * n, 0.0), qv(n * n);
    for (std::size_t p = 0; p < M; ++p) {
        std::fill(qv.begin(), qv.end(), 0.0);
        for (std::size_t k = 0; k < bundle.steps(); ++k) {
            for (std::size_t j = 0; j < n; ++j) {
                for (std::size_t l = 0; l < n; ++l) qv[j * n + l] += bundle.dbeta(p, k, j) * bundle.dbeta(p, k, l);
            }
        }
        for (std::size_t e = 0; e < n * n; ++e) {
            report.mean[e] += qv[e];
            sq[e] += qv[e] * qv[e];
        }
    }
    const double m = static_cast<double>(M);
    for (std::size_t e = 0; e < n * n; ++e) {
        report.mean[e] /= m;
        const double var = M > 1 ? std::max(0.0, (sq[e] - m * report.mean[e] * report.mean[e]) / (m - 1.0)) : 0.0;
        report.standard_error[e] = std::sqrt(var / m);
    }
    return report;
}

/// Per-path sup over steps of |X(t_k)|_2^2.
[[nodiscard]] inline std::vector<double> sup_squared_norm(const PathBundle& bundle) {
    std::vector<double> out(bundle.n_paths(), 0.0);
    for (std::size_t p = 0; p < bundle.n_paths(); ++p) {
        for (std::size_t k = 0; k <= bundle.steps(); ++k) {
            const double r = euclidean_norm(bundle.named(p, k));
            out[p] = std::max(out[p], r * r);
        }
    }
    return out;
}

/// Per-path sup over steps of |X^a(t_k) - X^b(t_k)|_2 between two bundles of equal shape.
[[nodiscard]] inline std::vector<double> sup_distance(const PathBundle& a, const PathBundle& b) {
    if (a.n() != b.n() || a.n_paths() != b.n_paths() || a.steps() != b.steps()) {
        throw ValidationError("sup_distance: bundles differ in shape");
    }
    std::vector<double> out(a.n_paths(), 0.0);
    for (std::size_t p = 0; p < a.n_paths(); ++p) {
        for (std::size_t k = 0; k <= a.steps(); ++k) {
            double s = 0.0;
            const auto xa = a.named(p, k);
            const auto xb = b.named(p, k);
            for (std::size_t i = 0; i < a.n(); ++i) s += (xa[i] - xb[i]) * (xa[i] - xb[i]);
            out[p] = std::max(out[p], std::sqrt(s));
        }
    }
    return out;
}

/// One row per path per step: path_id, k, t, X_i, ranked_j, dbeta_j over
/// [t_k, t_{k+1}] (empty on the last row), Lambda_j (when estimated).
inline void write_paths_csv(std::ostream& out, const PathBundle& bundle) {
    const std::size_t n = bundle.n();
    std::vector<std::string> header{"path_id", "k", "t"};
    for (std::size_t i = 1; i <= n; ++i) header.push_back("X_" + std::to_string(i));
    for (std::size_t j = 1; j <= n; ++j) header.push_back("ranked_" + std::to_string(j));
    for (std::size_t j = 1; j <= n; ++j) header.push_back("dbeta_" + std::to_string(j));
    if (bundle.has_local_times()) {
        for (std::size_t j = 1; j < n; ++j) header.push_back("Lambda_" + std::to_string(j) + "_" + std::to_string(j + 1));
    }
    write_header(out, header);
    for (std::size_t p = 0; p < bundle.n_paths(); ++p) {
        for (std::size_t k = 0; k <= bundle.steps(); ++k) {
            CsvRow row;
            row << p << k << bundle.grid().t(k);
            for (double v : bundle.named(p, k)) row << v;
            for (std::size_t j = 0; j < n; ++j) row << bundle.ranked(p, k, j);
            for (std::size_t j = 0; j < n; ++j) {
                if (k < bundle.steps()) {
                    row << bundle.dbeta(p, k, j);
                } else {
                    row << "";
                }
            }
            if (bundle.has_local_times()) {
                for (std::size_t j = 0; j + 1 < n; ++j) row << bundle.local_time(p, k, j);
            }
            row.write(out);
        }
    }
}

}  // namespace rankbsde
