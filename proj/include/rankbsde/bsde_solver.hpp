#pragma once

// Backward solvers on a simulated bundle:
//
//   Y_N = g(X_N)
//   Zbar_k = E_k[(V_{k+1} - E_k V_{k+1}) dbeta_k] / dt
//   Ytilde_k = E_k V_{k+1} + F(t_k, X_k, Ytilde_k, Zbar_k) dt      (implicit in y)
//   Y_k = max(Ytilde_k, h(t_k, X_k)),  K_{k+1} = K_k + (Y_k - Ytilde_k)
//
// V_{k+1} is the regression target (see ContinuationTarget) and E_k a
// least-squares regression on the ranked state at t_k. The plain
// equation is the reflected one with h = -infinity; the penalized variant
// replaces the projection by the generator term m (y - h)^-.
//
// Paths are split into contiguous batches that are solved independently;
// the spread of the batch estimates gives the standard error, and batches
// run in parallel without changing any result.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "rankbsde/core_model.hpp"
#include "rankbsde/csv.hpp"
#include "rankbsde/error.hpp"
#include "rankbsde/parallel.hpp"
#include "rankbsde/registry.hpp"
#include "rankbsde/regression.hpp"
#include "rankbsde/sde_engine.hpp"
#include "rankbsde/validation.hpp"

namespace rankbsde {

/// What E_k is regressed on. `regressed` uses Y_{k+1} from the previous
/// regression. `pathwise` uses the realized path value: Y_{k+1} where the
/// projection (or penalty branch) was active, else the next path value plus
/// the generator increment. Both have conditional mean Y_{k+1} in the limit; the regressed
/// target compounds the upward bias of max(estimate, h) over steps.
enum class ContinuationTarget { pathwise, regressed };

struct SolverOptions {
    RegressionBasis basis{};
    ContinuationTarget target = ContinuationTarget::pathwise;
    /// Independent contiguous path batches; 1 means one regression on all paths.
    std::size_t batches = 10;
    /// Fit regressions on even paths only and report u0 from odd paths.
    bool split_sample = false;
    ExecutionPolicy policy{};
};

enum class SolveMode { plain, reflected, penalized };

struct StepDiagnostics {
    std::size_t step = 0;
    double t = 0.0;
    double mean_y = 0.0;
    double mean_dk = 0.0;
    /// Mean over paths of sum_{k' >= k} (Y_{k'+1} - h_{k'+1}) dK_{k'}.
    double skorokhod_partial = 0.0;
    /// Largest regression condition number over batches at this step.
    double condition = 1.0;
};

class ReflectedSolution {
public:
    ReflectedSolution(std::size_t n, std::size_t paths, std::size_t steps)
        : n_(n), paths_(paths), steps_(steps), y_(paths * (steps + 1)), z_(paths * steps * n),
          k_(paths * (steps + 1), 0.0), ytilde_(paths * steps) {}

    [[nodiscard]] std::size_t n() const noexcept { return n_; }
    [[nodiscard]] std::size_t n_paths() const noexcept { return paths_; }
    [[nodiscard]] std::size_t steps() const noexcept { return steps_; }

    [[nodiscard]] double y(std::size_t p, std::size_t k) const { return y_[p * (steps_ + 1) + k]; }
    /// Ranked control on [t_k, t_{k+1}).
    [[nodiscard]] double zbar(std::size_t p, std::size_t k, std::size_t j) const {
        return z_[(p * steps_ + k) * n_ + j];
    }
    [[nodiscard]] std::span<const double> zbar(std::size_t p, std::size_t k) const {
        return {z_.data() + (p * steps_ + k) * n_, n_};
    }
    [[nodiscard]] double k(std::size_t p, std::size_t k) const { return k_[p * (steps_ + 1) + k]; }
    /// Pre-projection value at t_k (k < N).
    [[nodiscard]] double y_tilde(std::size_t p, std::size_t k) const { return ytilde_[p * steps_ + k]; }

    [[nodiscard]] const std::vector<double>& raw_y() const noexcept { return y_; }
    [[nodiscard]] const std::vector<double>& raw_z() const noexcept { return z_; }
    [[nodiscard]] const std::vector<double>& raw_k() const noexcept { return k_; }

    double u0 = 0.0;
    double standard_error = 0.0;
    std::vector<double> batch_u0;

    /// max over grid of h - Y; non-positive when Y >= h holds everywhere.
    double max_violation = -std::numeric_limits<double>::infinity();
    /// Mean over paths of sum_k (Y_{k+1} - h_{k+1}) dK_k.
    double skorokhod_sum = 0.0;
    /// Same with left endpoints, sum_k (Y_k - h_k) dK_k; zero under exact projection.
    double skorokhod_left = 0.0;
    bool k_nondecreasing = true;
    /// E[sup_k Y_k^2] and E[sum_k |Zbar_k|^2 dt].
    double sup_y_sq = 0.0;
    double z_energy = 0.0;
    double max_condition = 1.0;
    std::vector<StepDiagnostics> step_log;
    std::vector<BasisEvent> basis_log;
    SolveMode mode = SolveMode::plain;
    double penalty = 0.0;

private:
    friend struct SolutionAccess;
    std::size_t n_, paths_, steps_;
    std::vector<double> y_, z_, k_, ytilde_;
};

struct SolutionAccess {
    static std::vector<double>& y(ReflectedSolution& s) { return s.y_; }
    static std::vector<double>& z(ReflectedSolution& s) { return s.z_; }
    static std::vector<double>& k(ReflectedSolution& s) { return s.k_; }
    static std::vector<double>& ytilde(ReflectedSolution& s) { return s.ytilde_; }
};

namespace detail {

struct BatchResult {
    double eval_sum = 0.0;
    std::size_t eval_count = 0;
    std::vector<double> step_condition;
    std::vector<BasisEvent> events;
    // regression targets at t_1 on the evaluation rows
    std::vector<double> first_targets;
};

inline void check_step_size(const ProblemSpec& spec, double dt) {
    const double c = spec.generator.lipschitz_constant();
    if (c * dt >= 1.0) {
        throw ValidationError("time step too large for the implicit generator step: c*dt = " + format_number(c * dt) +
                              " must be below 1");
    }
    if (1.0 - dt * spec.generator.y_slope(0.0) <= 0.0) {
        throw ValidationError("time step too large: 1 - dt * dF/dy must be positive");
    }
}

// One implicit step y = a + dt (alpha + beta y), then projection or penalty.
struct StepRule {
    SolveMode mode;
    double m;
    double dt;
    double beta;

    [[nodiscard]] double implicit(double a, double alpha) const { return (a + dt * alpha) / (1.0 - dt * beta); }

    struct Outcome {
        double y;
        double y_tilde;
        // projection or penalty branch in force: the path is stopped at t_k
        bool stopped;
    };

    [[nodiscard]] Outcome apply(double a, double alpha, double h) const {
        const double y1 = implicit(a, alpha);
        switch (mode) {
            case SolveMode::plain: return {y1, y1, false};
            case SolveMode::reflected: return {std::max(y1, h), y1, h > y1};
            case SolveMode::penalized: {
                if (m == 0.0 || y1 >= h) return {y1, y1, false};
                // branch y < h: y = a + dt (alpha + beta y + m (h - y))
                const double y2 = (a + dt * alpha + dt * m * h) / (1.0 - dt * beta + dt * m);
                if (!(y2 < h) && !(y2 == h)) {
                    throw NumericalError("penalized step: no solution on either affine branch");
                }
                return {y2, y2, true};
            }
        }
        return {y1, y1, false};
    }
};

inline BatchResult solve_batch(const PathBundle& bundle, const ProblemSpec& spec, const SolverOptions& options,
                               const StepRule& rule, std::size_t begin, std::size_t end, ReflectedSolution& sol) {
    const std::size_t n = bundle.n();
    const std::size_t N = bundle.steps();
    const std::size_t Mb = end - begin;
    const auto& grid = bundle.grid();
    const double dt = grid.dt();
    const bool has_obstacle = !spec.obstacle.is_sentinel() && rule.mode != SolveMode::plain;
    const bool g_feature = !spec.terminal.is_constant();
    const std::size_t n_aug = (has_obstacle ? 1 : 0) + (g_feature ? 1 : 0);

    auto& Y = SolutionAccess::y(sol);
    auto& Z = SolutionAccess::z(sol);
    auto& K = SolutionAccess::k(sol);
    auto& YT = SolutionAccess::ytilde(sol);

    BatchResult out;
    out.step_condition.assign(N, 1.0);

    std::vector<std::size_t> fit_rows, eval_rows, even_rows, odd_rows;
    for (std::size_t i = 0; i < Mb; ++i) ((i % 2 == 0) ? even_rows : odd_rows).push_back(i);
    if (options.split_sample) {
        if (odd_rows.empty()) throw ValidationError("split-sample solve needs at least two paths per batch");
        fit_rows = even_rows;
        eval_rows = odd_rows;
    } else {
        eval_rows.resize(Mb);
        for (std::size_t i = 0; i < Mb; ++i) eval_rows[i] = i;
    }

    std::vector<double> x(n);
    // v_next: regression targets; y_next: Y_{k+1}, used for the Z regression
    Eigen::VectorXd v_next(static_cast<Eigen::Index>(Mb));
    Eigen::VectorXd y_next(static_cast<Eigen::Index>(Mb));
    for (std::size_t i = 0; i < Mb; ++i) {
        bundle.ranked_into(begin + i, N, x);
        y_next(static_cast<Eigen::Index>(i)) = spec.terminal(x);
        Y[(begin + i) * (N + 1) + N] = y_next(static_cast<Eigen::Index>(i));
    }
    v_next = y_next;

    Eigen::MatrixXd raw(static_cast<Eigen::Index>(Mb), static_cast<Eigen::Index>(n + n_aug));
    std::vector<double> h_now(Mb);
    Eigen::VectorXd cont(static_cast<Eigen::Index>(Mb));
    Eigen::MatrixXd zbar(static_cast<Eigen::Index>(Mb), static_cast<Eigen::Index>(n));
    Eigen::MatrixXd ztarget(static_cast<Eigen::Index>(Mb), static_cast<Eigen::Index>(n));

    for (std::size_t kk = N; kk-- > 0;) {
        const double t = grid.t(kk);
        for (std::size_t i = 0; i < Mb; ++i) {
            bundle.ranked_into(begin + i, kk, x);
            const auto row = static_cast<Eigen::Index>(i);
            for (std::size_t j = 0; j < n; ++j) raw(row, static_cast<Eigen::Index>(j)) = x[j];
            h_now[i] = rule.mode == SolveMode::plain ? -std::numeric_limits<double>::infinity() : spec.obstacle(t, x);
            std::size_t c = n;
            if (has_obstacle) raw(row, static_cast<Eigen::Index>(c++)) = h_now[i];
            if (g_feature) raw(row, static_cast<Eigen::Index>(c++)) = spec.terminal(x);
        }

        if (kk == 0) {
            for (std::size_t i : eval_rows) out.first_targets.push_back(v_next(static_cast<Eigen::Index>(i)));
        }
        const bool constant_next =
            std::all_of(v_next.begin(), v_next.end(), [&](double v) { return v == v_next(0); }) &&
            std::all_of(y_next.begin(), y_next.end(), [&](double v) { return v == v_next(0); });
        if (constant_next) {
            cont.setConstant(v_next(0));
            zbar.setZero();
        } else {
            auto regress = [&](const std::vector<std::size_t>& rows, const std::vector<std::size_t>& write_rows) {
                const LeastSquaresBasis basis(raw, n, options.basis.degree, rows);
                out.step_condition[kk] = std::max(out.step_condition[kk], basis.condition());
                if (basis.reduced()) {
                    out.events.push_back({kk, basis.requested_degree(), basis.used_degree(),
                                          "rank-deficient design at batch offset " + std::to_string(begin)});
                }
                const Eigen::VectorXd c = basis.fit_predict(v_next).col(0);
                for (std::size_t i : write_rows) cont(static_cast<Eigen::Index>(i)) = c(static_cast<Eigen::Index>(i));
                if (dt > 0.0) {
                    for (std::size_t i = 0; i < Mb; ++i) {
                        const auto row = static_cast<Eigen::Index>(i);
                        const double resid = y_next(row) - c(row);
                        for (std::size_t j = 0; j < n; ++j) {
                            ztarget(row, static_cast<Eigen::Index>(j)) = resid * bundle.dbeta(begin + i, kk, j) / dt;
                        }
                    }
                    const Eigen::MatrixXd zf = basis.fit_predict(ztarget);
                    for (std::size_t i : write_rows) zbar.row(static_cast<Eigen::Index>(i)) = zf.row(static_cast<Eigen::Index>(i));
                } else {
                    for (std::size_t i : write_rows) zbar.row(static_cast<Eigen::Index>(i)).setZero();
                }
            };
            std::vector<std::size_t> all_rows(Mb);
            for (std::size_t i = 0; i < Mb; ++i) all_rows[i] = i;
            if (options.split_sample && kk == 0) {
                // the starting state is shared, so each half estimates its own mean
                regress(even_rows, even_rows);
                regress(odd_rows, odd_rows);
            } else {
                regress(fit_rows, all_rows);
            }
        }

        for (std::size_t i = 0; i < Mb; ++i) {
            const auto row = static_cast<Eigen::Index>(i);
            const std::size_t p = begin + i;
            bundle.ranked_into(p, kk, x);
            std::vector<double> z(n);
            for (std::size_t j = 0; j < n; ++j) z[j] = zbar(row, static_cast<Eigen::Index>(j));
            const double alpha = spec.generator.value(t, x, 0.0, z);
            const auto [yk, ytilde, stopped] = rule.apply(cont(row), alpha, h_now[i]);
            Y[p * (N + 1) + kk] = yk;
            YT[p * N + kk] = ytilde;
            for (std::size_t j = 0; j < n; ++j) Z[(p * N + kk) * n + j] = z[j];
            if (options.target == ContinuationTarget::regressed || stopped) {
                v_next(row) = yk;
            } else {
                v_next(row) += ytilde - cont(row);
            }
            y_next(row) = yk;
        }
    }

    for (std::size_t i = 0; i < Mb; ++i) {
        const std::size_t p = begin + i;
        for (std::size_t kk = 0; kk < N; ++kk) {
            const double dk = rule.mode == SolveMode::reflected ? Y[p * (N + 1) + kk] - YT[p * N + kk] : 0.0;
            K[p * (N + 1) + kk + 1] = K[p * (N + 1) + kk] + dk;
        }
    }
    for (std::size_t i : eval_rows) out.eval_sum += Y[(begin + i) * (N + 1)];
    out.eval_count = eval_rows.size();
    return out;
}

inline void fill_diagnostics(const PathBundle& bundle, const ProblemSpec& spec, ReflectedSolution& sol) {
    const std::size_t N = bundle.steps();
    const std::size_t M = bundle.n_paths();
    const std::size_t n = bundle.n();
    const double dt = bundle.grid().dt();
    const bool obstacle = !spec.obstacle.is_sentinel() && sol.mode != SolveMode::plain;
    std::vector<double> x(n);
    std::vector<double> mean_y(N + 1, 0.0), mean_dk(N, 0.0), sk_step(N, 0.0);
    double sk_right = 0.0, sk_left = 0.0, sup_y = 0.0, zen = 0.0;
    double violation = -std::numeric_limits<double>::infinity();
    bool monotone = true;
    std::vector<double> h_path(N + 1);
    for (std::size_t p = 0; p < M; ++p) {
        double sup_p = 0.0;
        for (std::size_t k = 0; k <= N; ++k) {
            const double y = sol.y(p, k);
            mean_y[k] += y;
            sup_p = std::max(sup_p, y * y);
            if (obstacle) {
                bundle.ranked_into(p, k, x);
                h_path[k] = spec.obstacle(bundle.grid().t(k), x);
                if (k < N) violation = std::max(violation, h_path[k] - y);
            }
        }
        sup_y += sup_p;
        for (std::size_t k = 0; k < N; ++k) {
            const double dk = sol.k(p, k + 1) - sol.k(p, k);
            if (dk < 0.0) monotone = false;
            mean_dk[k] += dk;
            if (obstacle && dk != 0.0) {
                const double right = (sol.y(p, k + 1) - h_path[k + 1]) * dk;
                sk_step[k] += right;
                sk_right += right;
                sk_left += (sol.y(p, k) - h_path[k]) * dk;
            }
            double z2 = 0.0;
            for (double v : sol.zbar(p, k)) z2 += v * v;
            zen += z2 * dt;
        }
    }
    const double m = static_cast<double>(M);
    sol.max_violation = obstacle ? violation : -std::numeric_limits<double>::infinity();
    sol.skorokhod_sum = sk_right / m;
    sol.skorokhod_left = sk_left / m;
    sol.k_nondecreasing = monotone;
    sol.sup_y_sq = sup_y / m;
    sol.z_energy = zen / m;
    double partial = 0.0;
    for (std::size_t k = N; k-- > 0;) {
        partial += sk_step[k] / m;
        auto& row = sol.step_log[k];
        row.mean_y = mean_y[k] / m;
        row.mean_dk = mean_dk[k] / m;
        row.skorokhod_partial = partial;
    }
    auto& last = sol.step_log[N];
    last.mean_y = mean_y[N] / m;
    last.skorokhod_partial = 0.0;
}

inline ReflectedSolution run_backward(const PathBundle& bundle, const ProblemSpec& spec, const SolverOptions& options,
                                      SolveMode mode, double m) {
    spec.check_dimension(bundle.n());
    const double dt = bundle.grid().dt();
    check_step_size(spec, dt);
    if (options.batches < 1) throw ValidationError("solver: batches must be at least 1");
    if (options.batches > bundle.n_paths()) {
        throw ValidationError("solver: " + std::to_string(options.batches) + " batches for " +
                              std::to_string(bundle.n_paths()) + " paths");
    }
    const std::size_t N = bundle.steps();
    const std::size_t M = bundle.n_paths();
    const std::size_t B = options.batches;
    ReflectedSolution sol(bundle.n(), M, N);
    sol.mode = mode;
    sol.penalty = m;
    const StepRule rule{mode, m, dt, spec.generator.y_slope(0.0)};

    std::vector<BatchResult> results(B);
    parallel_for(B, options.policy, [&](std::size_t b) {
        const std::size_t begin = b * M / B;
        const std::size_t end = (b + 1) * M / B;
        results[b] = solve_batch(bundle, spec, options, rule, begin, end, sol);
    });

    double total = 0.0;
    std::size_t count = 0;
    sol.step_log.resize(N + 1);
    for (std::size_t k = 0; k <= N; ++k) {
        sol.step_log[k].step = k;
        sol.step_log[k].t = bundle.grid().t(k);
    }
    for (const auto& r : results) {
        total += r.eval_sum;
        count += r.eval_count;
        sol.batch_u0.push_back(r.eval_sum / static_cast<double>(r.eval_count));
        for (std::size_t k = 0; k < N; ++k) {
            sol.step_log[k].condition = std::max(sol.step_log[k].condition, r.step_condition[k]);
        }
        sol.basis_log.insert(sol.basis_log.end(), r.events.begin(), r.events.end());
    }
    for (const auto& row : sol.step_log) sol.max_condition = std::max(sol.max_condition, row.condition);
    sol.u0 = total / static_cast<double>(count);

    if (B >= 2) {
        double mean = 0.0;
        for (double v : sol.batch_u0) mean += v;
        mean /= static_cast<double>(B);
        double var = 0.0;
        for (double v : sol.batch_u0) var += (v - mean) * (v - mean);
        var /= static_cast<double>(B - 1);
        sol.standard_error = std::sqrt(var / static_cast<double>(B));
    } else {
        // one regression: the state at t0 is shared, so u0 is an affine image
        // of the mean target at t1
        std::vector<double> v = results[0].first_targets;
        double mean = 0.0;
        for (double e : v) mean += e;
        mean /= static_cast<double>(v.size());
        double var = 0.0;
        for (double e : v) var += (e - mean) * (e - mean);
        var = v.size() > 1 ? var / static_cast<double>(v.size() - 1) : 0.0;
        sol.standard_error = std::sqrt(var / static_cast<double>(v.size())) / (1.0 - dt * rule.beta);
    }
    fill_diagnostics(bundle, spec, sol);
    return sol;
}

}  // namespace detail

/// Plain BSDE. The obstacle must be the "no obstacle" sentinel.
[[nodiscard]] inline ReflectedSolution solve_bsde(const PathBundle& bundle, const ProblemSpec& spec,
                                                  const SolverOptions& options = {}) {
    if (!spec.obstacle.is_sentinel()) {
        throw ValidationError("solve_bsde: the obstacle must be 'none'; use solve_reflected");
    }
    return detail::run_backward(bundle, spec, options, SolveMode::plain, 0.0);
}

/// Reflected BSDE by projection onto the obstacle at every grid time.
[[nodiscard]] inline ReflectedSolution solve_reflected(const PathBundle& bundle, const ProblemSpec& spec,
                                                       const SolverOptions& options = {}) {
    return detail::run_backward(bundle, spec, options, SolveMode::reflected, 0.0);
}

/// BSDE with generator F + m (y - h)^-, each implicit step solved on its two affine branches.
[[nodiscard]] inline ReflectedSolution solve_penalized(const PathBundle& bundle, const ProblemSpec& spec, double m,
                                                       const SolverOptions& options = {}) {
    if (!(m >= 0.0) || !std::isfinite(m)) throw ValidationError("solve_penalized: m must be finite and non-negative");
    return detail::run_backward(bundle, spec, options, SolveMode::penalized, m);
}

struct NumericsConfig {
    std::size_t steps = 50;
    std::size_t paths = 100000;
    std::uint64_t seed = 1;
    SolverOptions solver{};
    bool allow_nonconcave = false;
    /// Samples for the hypothesis check run before simulation; 0 skips it.
    std::size_t validation_samples = 1000;
};

struct Estimate {
    double u0 = 0.0;
    double standard_error = 0.0;
};

/// u(t0, x0) = Y^{t0,x0}(t0) by simulation and the reflected solver.
[[nodiscard]] inline Estimate estimate_u(const CoefficientProfile& profile, const ProblemSpec& spec,
                                         const SimplexPoint& x0, double t0, double T, const NumericsConfig& numerics) {
    spec.check_dimension(profile.n());
    if (numerics.validation_samples > 0) {
        require_accepted(validate_spec(spec, profile, numerics.validation_samples, numerics.seed));
    }
    SimulationOptions sim;
    sim.allow_nonconcave = numerics.allow_nonconcave;
    sim.policy = numerics.solver.policy;
    const auto bundle = simulate(profile, x0, TimeGrid(t0, T, numerics.steps), numerics.paths, numerics.seed, sim);
    const auto sol = solve_reflected(bundle, spec, numerics.solver);
    return {sol.u0, sol.standard_error};
}

/// Named-coordinate control at (p, k) through that step's rank permutation.
/// `tie` is set when two ranks coincide, where the named split is not unique.
struct NamedControl {
    std::vector<double> z;
    bool tie = false;
};

[[nodiscard]] inline NamedControl named_control(const PathBundle& bundle, const ReflectedSolution& sol, std::size_t p,
                                                std::size_t k) {
    const auto view = rank_state(bundle.named(p, k));
    NamedControl out;
    out.z = ranked_to_named_z(sol.zbar(p, k), view);
    out.tie = std::any_of(view.gaps.begin(), view.gaps.end(), [](double g) { return g == 0.0; });
    return out;
}

/// step, t, mean_Y, mean_dK, skorokhod_partial, condition
inline void write_solution_csv(std::ostream& out, const ReflectedSolution& sol) {
    write_header(out, {"step", "t", "mean_Y", "mean_dK", "skorokhod_partial", "condition"});
    for (const auto& row : sol.step_log) {
        CsvRow r;
        r << row.step << row.t << row.mean_y << row.mean_dk << row.skorokhod_partial << row.condition;
        r.write(out);
    }
}

[[nodiscard]] inline nlohmann::json solution_summary(const ReflectedSolution& sol) {
    nlohmann::json j;
    j["u0"] = sol.u0;
    j["stderr"] = sol.standard_error;
    return j;
}

[[nodiscard]] inline nlohmann::json solution_diagnostics(const ReflectedSolution& sol) {
    nlohmann::json j;
    j["batch_u0"] = sol.batch_u0;
    j["max_violation"] = std::isfinite(sol.max_violation) ? nlohmann::json(sol.max_violation) : nlohmann::json(nullptr);
    j["skorokhod_sum"] = sol.skorokhod_sum;
    j["skorokhod_left"] = sol.skorokhod_left;
    j["k_nondecreasing"] = sol.k_nondecreasing;
    j["sup_y_sq"] = sol.sup_y_sq;
    j["z_energy"] = sol.z_energy;
    j["max_condition"] = sol.max_condition;
    nlohmann::json events = nlohmann::json::array();
    for (const auto& e : sol.basis_log) {
        events.push_back({{"step", e.step}, {"requested_degree", e.requested_degree},
                          {"used_degree", e.used_degree}, {"reason", e.reason}});
    }
    j["basis_log"] = events;
    return j;
}

}  // namespace rankbsde
