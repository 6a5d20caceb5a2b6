// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.
//
//   rankbsde_acceptance [configs-dir] [scratch-dir]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "oracles/analytic.hpp"
#include "oracles/binomial.hpp"
#include "rankbsde/harness.hpp"

using namespace rankbsde;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path g_configs = RANKBSDE_CONFIG_DIR;
fs::path g_scratch = fs::temp_directory_path() / "rankbsde_acceptance";

Outcome feynman_kac() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto c = load_config(g_configs / "linear2.json");
    const auto r = cross_validate(c);
    const double secs = seconds_since(t0);
    const auto& row = r.rows.front();
    const double exact = row.point.x[0] + row.point.x[1] + (0.3 - 0.1) * (c.horizon() - row.point.t);
    const double mc_err = std::abs(row.mc - exact);
    const double pde_err = row.pde ? std::abs(*row.pde - exact) : std::numeric_limits<double>::infinity();
    const bool pass = c.numerics.paths >= 100000 && mc_err < 3.0 * row.mc_stderr && pde_err < 1e-3 && secs < 120.0;
    return {pass, "exact " + fmt(exact) + ", mc " + fmt(row.mc) + " (" + fmt(mc_err / row.mc_stderr) +
                      " s.e.), pde error " + fmt(pde_err) + ", " + fmt(secs) + " s"};
}

Outcome american_put_triple() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto c = load_config(g_configs / "american_put.json");
    const auto r = cross_validate(c);
    const double secs = seconds_since(t0);
    const auto& row = r.rows.front();
    const double tree = oracle::crr(100, 100, 0.05, 0.2, 1.0, 2000, true, true);
    const double pde = row.pde.value_or(std::numeric_limits<double>::quiet_NaN());
    const double worst = std::max({std::abs(row.mc / tree - 1.0), std::abs(pde / tree - 1.0), std::abs(row.mc / pde - 1.0)});
    const bool pass = c.numerics.paths >= 100000 && worst < 0.01 && secs < 300.0;
    return {pass, "mc " + fmt(row.mc) + ", pde " + fmt(pde) + ", tree " + fmt(tree) + ", worst gap " +
                      fmt(100.0 * worst) + "%, " + fmt(secs) + " s"};
}

Outcome penalization() {
    auto c = load_config(g_configs / "american_put.json");
    c.ladders.penalty = {10.0, 100.0, 1000.0};
    const auto t = convergence_table(c, LadderAxis::penalty);
    bool pass = t.rows.size() == 3 && t.limit.has_value();
    std::string detail;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        detail += "u" + fmt(t.rows[i].level) + " " + fmt(t.rows[i].value) + ", ";
        if (i > 0) {
            const double tol = std::max(t.rows[i].standard_error, t.rows[i - 1].standard_error);
            pass = pass && t.rows[i].value >= t.rows[i - 1].value - tol;
        }
    }
    if (t.limit) {
        const double gap = std::abs(t.rows.back().value / *t.limit - 1.0);
        pass = pass && gap < 0.02;
        detail += "reflected " + fmt(*t.limit) + ", gap " + fmt(100.0 * gap) + "%";
    }
    return {pass, detail};
}

Outcome skorokhod() {
    const CoefficientProfile profile({0.05 - 0.5 * 0.04}, {0.2}, RateCurve{0.05});
    const ProblemSpec spec(GeneratorSpec::pricing({0.05}, {0.2}, 0.05), TerminalSpec::of(TerminalKind::put_exp, 100.0),
                           ObstacleSpec::from_payoff(), 1.0);
    SolverOptions options;
    options.basis.degree = 4;
    bool pass = true, exact = true;
    double last = std::numeric_limits<double>::infinity();
    std::string detail;
    for (std::size_t steps : {64u, 128u, 256u}) {
        const auto bundle = simulate(profile, SimplexPoint({std::log(100.0)}), TimeGrid(0, 1, steps), 20000, 404);
        const auto sol = solve_reflected(bundle, spec, options);
        pass = pass && sol.skorokhod_sum < last;
        exact = exact && sol.max_violation <= 0.0 && sol.k_nondecreasing;
        last = sol.skorokhod_sum;
        detail += "N=" + std::to_string(steps) + ": " + fmt(sol.skorokhod_sum) + " ";
    }
    return {pass && exact, detail + "(Y >= h and K non-decreasing at every level: " + (exact ? "yes" : "no") + ")"};
}

Outcome ranked_brownian() {
    const CoefficientProfile profile({0.1, -0.1}, {1.0, 0.8});
    const auto b = simulate(profile, SimplexPoint({0.05, 0.0}), TimeGrid(0, 1, 100), 10000, 505);
    const auto qv = ranked_brownian_diagnostics(b);
    const double d0 = std::abs(qv.at(0, 0) - 1.0), d1 = std::abs(qv.at(1, 1) - 1.0);
    const double off = std::abs(qv.at(0, 1)) / qv.se(0, 1);
    return {d0 < 0.02 && d1 < 0.02 && off < 3.0,
            "QV diag " + fmt(qv.at(0, 0)) + ", " + fmt(qv.at(1, 1)) + "; off-diagonal " + fmt(off) + " s.e."};
}

Outcome moments() {
    const CoefficientProfile profile({0.4, 0.0, -0.4}, {1.0, 1.2, 1.3});
    const TimeGrid grid(0, 1, 100);
    const double C = oracle::second_moment_constant(3, 0.4, 1.3, 1.0);
    bool pass = true;
    std::string detail = "C = " + fmt(C) + ", ratios";
    const std::vector<double> dir{2.0 / 3.0, 1.0 / 3.0, -2.0 / 3.0};
    for (double scale : {1.0, 10.0, 100.0}) {
        std::vector<double> x(3);
        for (int i = 0; i < 3; ++i) x[i] = scale * dir[i];
        const auto b = simulate(profile, SimplexPoint(x), grid, 10000, 606);
        const double ratio = mean_of(sup_squared_norm(b)) / (1.0 + scale * scale);
        pass = pass && ratio <= C;
        detail += " " + fmt(ratio);
    }
    detail += "; E sup|dX|^2";
    const auto base = simulate(profile, SimplexPoint({0.5, 0.0, -0.5}), grid, 10000, 607);
    double last = std::numeric_limits<double>::infinity();
    for (double h : {1.0, 0.1, 0.01}) {
        auto d = sup_distance(base, simulate(profile, SimplexPoint({0.5 + h, 0.0, -0.5}), grid, 10000, 607));
        for (auto& v : d) v *= v;
        const double m2 = mean_of(d);
        pass = pass && m2 < last;
        last = m2;
        detail += " " + fmt(m2);
    }
    return {pass, detail};
}

Outcome smoothed() {
    const CoefficientProfile profile({0.5, -0.5}, {1.0, 1.5});
    const TimeGrid grid(0, 1, 100);
    const SimplexPoint x0({0.2, 0.0});
    const auto exact = simulate(profile, x0, grid, 5000, 707);
    bool pass = true;
    std::string detail = "E sup|X^m - X|";
    double last = std::numeric_limits<double>::infinity();
    for (double m : {1.0, 10.0, 100.0}) {
        const double e = mean_of(sup_distance(smoothed_simulate(profile, x0, grid, 5000, 707, m), exact));
        pass = pass && e <= last;
        last = e;
        detail += " " + fmt(e);
    }
    const CoefficientProfile sep({0.2, 0.0, -0.2}, {1.0, 1.1, 1.0});
    const SimplexPoint far({2.0, 0.0, -2.0});
    const TimeGrid short_grid(0, 0.05, 10);
    const auto a = simulate(sep, far, short_grid, 1000, 708);
    const auto b = smoothed_simulate(sep, far, short_grid, 1000, 708, 1e6);
    double worst = 0.0;
    for (std::size_t p = 0; p < a.n_paths(); ++p) {
        for (std::size_t k = 0; k <= short_grid.steps(); ++k) {
            for (std::size_t i = 0; i < 3; ++i) worst = std::max(worst, std::abs(a.named(p, k)[i] - b.named(p, k)[i]));
        }
    }
    pass = pass && worst < 1e-6;
    return {pass, detail + "; m=1e6 separated max gap " + fmt(worst)};
}

Outcome neumann_face() {
    const CoefficientProfile basket({0.02, -0.01}, {0.3, 0.2}, RateCurve{0.05});
    auto g = TerminalSpec::of(TerminalKind::basket_put_exp, 1.0);
    g.weights = {0.5, 0.5};
    const ProblemSpec put(GeneratorSpec::discount(0.05), g, ObstacleSpec::from_payoff(), 1.0);
    std::vector<double> r;
    std::string detail = "put residuals";
    for (std::size_t ng : {20u, 40u, 80u}) {
        const auto grid = SimplexGrid::gaps2({-2, 2, 81}, {0, 2, ng + 1}, 0, 1, 50);
        r.push_back(boundary_residual(solve_obstacle(basket, put, grid)).max);
        detail += " " + fmt(r.back());
    }
    bool pass = true;
    for (std::size_t i = 1; i < r.size(); ++i) {
        const double q = r[i] / r[i - 1];
        pass = pass && q > 0.375 && q < 0.625;
    }
    const CoefficientProfile linear({0.3, -0.1}, {0.5, 0.4});
    const ProblemSpec affine(GeneratorSpec::zero(), TerminalSpec::sum(), ObstacleSpec::none());
    const double ra = boundary_residual(solve_obstacle(linear, affine, SimplexGrid::gaps2({-3, 3, 200}, {0, 3, 200}, 0, 1, 50))).max;
    const CoefficientProfile equal({0.1, 0.1}, {0.3, 0.3});
    const ProblemSpec sym(GeneratorSpec::discount(0.05), TerminalSpec::of(TerminalKind::sum_put, 0.5),
                          ObstacleSpec::from_payoff(), 1.0);
    const double rs = boundary_residual(solve_obstacle(equal, sym, SimplexGrid::gaps2({-2, 2, 81}, {0, 2, 41}, 0, 1, 50))).max;
    pass = pass && ra < 1e-8 && rs < 1e-8;
    return {pass, detail + "; affine " + fmt(ra) + ", symmetric " + fmt(rs)};
}

Outcome determinism() {
    bool pass = true;
    std::string detail;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(g_configs)) {
        if (e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        const auto c = load_config(f);
        const auto base = g_scratch / c.name;
        fs::remove_all(base);
        std::vector<fs::path> dirs;
        for (unsigned threads : {1u, 1u, 4u, 4u}) {
            RunOptions o;
            o.policy.threads = threads;
            dirs.push_back(base / ("run" + std::to_string(dirs.size()) + "_t" + std::to_string(threads)));
            (void)run_scenario(c, dirs.back(), o);
        }
        std::size_t compared = 0;
        bool same = true;
        for (const auto& e : fs::directory_iterator(dirs.front())) {
            const auto name = e.path().filename();
            const auto ref = slurp(e.path());
            for (std::size_t d = 1; d < dirs.size(); ++d) same = same && fs::exists(dirs[d] / name) && slurp(dirs[d] / name) == ref;
            ++compared;
        }
        pass = pass && same && compared > 0;
        detail += c.name + " " + std::to_string(compared) + " files " + (same ? "identical" : "DIFFER") + "; ";
    }
    return {pass && !files.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
    if (argc > 1) g_configs = argv[1];
    if (argc > 2) g_scratch = argv[2];
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"Feynman-Kac cross-validation, n = 2 linear spec", feynman_kac},
        {"American put: reflected BSDE, PDE and binomial tree within 1%", american_put_triple},
        {"penalization rises monotonically to the reflected value", penalization},
        {"discrete Skorokhod sum shrinks with the time step", skorokhod},
        {"ranked Brownian motions are independent with unit variance rate", ranked_brownian},
        {"second-moment bound and continuity in initial data", moments},
        {"smoothed coefficients converge to the rank-based system", smoothed},
        {"Neumann face residual halves with the gap mesh", neumann_face},
        {"scenario outputs are bit-identical across runs and worker counts", determinism},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failures;
        std::cout << (o.pass ? "[PASS]" : "[FAIL]") << " criterion " << i + 1 << ": " << criteria[i].first << " -- "
                  << o.detail << std::endl;
    }
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
