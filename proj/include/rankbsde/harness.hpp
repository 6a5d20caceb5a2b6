#pragma once

// Experiment configuration, Monte Carlo vs PDE cross-validation,
// convergence ladders and reproducible scenario output.
//
// A configuration is one JSON document: either a problem in state
// coordinates (profile + generator/terminal/obstacle + x0) or a "market"
// block, which is reduced to log coordinates first. Everything is parsed
// and checked before any simulation runs. Seeds are mandatory.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "rankbsde/bsde_solver.hpp"
#include "rankbsde/config_io.hpp"
#include "rankbsde/csv.hpp"
#include "rankbsde/pde_solver.hpp"
#include "rankbsde/pricing.hpp"
#include "rankbsde/sde_engine.hpp"
#include "rankbsde/validation.hpp"

namespace rankbsde {

inline constexpr const char* kVersion = "0.1.0";

struct PdeNumerics {
    /// Nodes per axis; one entry applies to every axis.
    std::vector<std::size_t> nodes{101};
    std::size_t steps = 100;
    double width = 6.0;
    /// Explicit axes (s, gaps...) instead of the box around x0.
    std::vector<GridAxis> axes;
    PdeOptions options{};
};

struct Ladders {
    std::vector<std::size_t> dt;
    /// "mc" or "pde": which solver the dt ladder refines.
    std::string dt_solver = "mc";
    std::vector<std::size_t> paths;
    std::vector<std::size_t> mesh;
    std::vector<double> penalty;
};

/// |gap| <= abs + k * stderr + rel * |reference value|.
struct Tolerance {
    double abs = 1e-3;
    double k = 3.0;
    double rel = 0.0;
};

struct ExperimentConfig {
    std::string name;
    CoefficientProfile profile{{0.0}, {1.0}};
    ProblemSpec spec;
    std::optional<MarketSpec> market;
    SimplexPoint x0{std::vector<double>{0.0}};
    double t0 = 0.0;
    NumericsConfig numerics;
    PdeNumerics pde;
    Ladders ladders;
    std::vector<ProbePoint> probes;
    Tolerance tolerance;
    /// Known u(t0, x0), used as the error reference in ladders.
    std::optional<double> reference;
    std::vector<std::string> outputs;
    std::string out_dir;
    /// The parsed document, for hashing and the copy written with the outputs.
    json source;

    [[nodiscard]] double horizon() const { return spec.horizon; }
    [[nodiscard]] std::size_t n() const { return profile.n(); }
};

namespace detail {

inline const std::vector<std::string>& known_outputs() {
    static const std::vector<std::string> k{"simulate",       "estimate",         "pde",
                                            "price",          "cross_validate",   "convergence_dt",
                                            "convergence_paths", "convergence_mesh", "convergence_penalty"};
    return k;
}

inline GridAxis axis_from_json(const json& j, const std::string& where) {
    reject_unknown_keys(j, where, {"lo", "hi", "nodes"});
    return {number(j, where, "lo"), number(j, where, "hi"), require(j, where, "nodes").get<std::size_t>()};
}

inline PdeOptions pde_options_from_json(const json& j) {
    PdeOptions o;
    o.theta = number_or(j, "theta", 1.0);
    o.psor = j.value("psor", false);
    o.psor_omega = number_or(j, "psor_omega", o.psor_omega);
    o.psor_tolerance = number_or(j, "psor_tolerance", o.psor_tolerance);
    o.retain_every = j.value("retain_every", std::size_t{0});
    const std::string mode = j.value("mode", std::string("projected"));
    if (mode == "projected") o.mode = ObstacleMode::projected;
    else if (mode == "penalized") o.mode = ObstacleMode::penalized;
    else throw ValidationError("unknown pde mode \"" + mode + "\" at key \"numerics.pde.mode\"");
    o.penalty = number_or(j, "penalty", 0.0);
    return o;
}

template <typename T>
std::vector<T> list_or_empty(const json& j, const char* key) {
    return j.contains(key) ? j.at(key).get<std::vector<T>>() : std::vector<T>{};
}

}  // namespace detail

/// Parses and checks a configuration document. Throws ValidationError (or
/// SpecRejected from the dimension checks) before anything is computed.
[[nodiscard]] inline ExperimentConfig config_from_json(const json& j) {
    if (!j.is_object()) throw ValidationError("configuration must be a JSON object");
    detail::reject_unknown_keys(j, "", {"name", "n", "delta", "sigma", "rate", "generator", "terminal", "obstacle",
                                        "horizon", "x0", "t0", "market", "numerics", "probes", "tolerance",
                                        "reference", "outputs", "out"});
    ExperimentConfig c;
    c.source = j;
    c.name = j.value("name", std::string("scenario"));
    if (j.contains("market")) {
        for (const char* k : {"delta", "sigma", "generator", "terminal", "obstacle", "x0"}) {
            if (j.contains(k)) throw ValidationError(std::string("key \"") + k + "\" conflicts with \"market\"");
        }
        c.market = market_from_json(j.at("market"));
        auto lp = to_log_problem(*c.market);
        c.profile = lp.profile;
        c.spec = lp.spec;
        c.x0 = lp.x0;
        c.t0 = lp.t0;
    } else {
        c.profile = profile_from_json(j);
        c.spec = problem_from_json(j, &c.profile);
        c.x0 = SimplexPoint(detail::require(j, "", "x0").get<std::vector<double>>());
        if (c.x0.n() != c.profile.n()) throw ValidationError("x0 has the wrong dimension");
        c.t0 = detail::number_or(j, "t0", 0.0);
    }
    if (!(c.spec.horizon >= c.t0)) throw ValidationError("horizon before t0");

    const json& num = detail::require(j, "", "numerics");
    detail::reject_unknown_keys(num, "numerics", {"steps", "paths", "seed", "degree", "batches", "target",
                                                  "split_sample", "validation_samples", "allow_nonconcave", "pde",
                                                  "ladder"});
    const json& seed = detail::require(num, "numerics", "seed");
    if (!seed.is_number_unsigned()) throw ValidationError("key \"numerics.seed\" must be a non-negative integer");
    c.numerics.seed = seed.get<std::uint64_t>();
    c.numerics.steps = num.value("steps", c.numerics.steps);
    c.numerics.paths = num.value("paths", c.numerics.paths);
    c.numerics.solver.basis.degree = num.value("degree", c.market ? 4u : 2u);
    c.numerics.solver.batches = num.value("batches", c.numerics.solver.batches);
    c.numerics.solver.split_sample = num.value("split_sample", false);
    const std::string target = num.value("target", std::string("pathwise"));
    if (target == "pathwise") c.numerics.solver.target = ContinuationTarget::pathwise;
    else if (target == "regressed") c.numerics.solver.target = ContinuationTarget::regressed;
    else throw ValidationError("unknown regression target \"" + target + "\" at key \"numerics.target\"");
    c.numerics.validation_samples = num.value("validation_samples", c.numerics.validation_samples);
    c.numerics.allow_nonconcave = num.value("allow_nonconcave", false);
    if (c.numerics.steps < 1) throw ValidationError("numerics.steps must be at least 1");
    if (c.numerics.paths < c.numerics.solver.batches) throw ValidationError("numerics.paths below numerics.batches");

    if (num.contains("pde")) {
        const json& p = num.at("pde");
        detail::reject_unknown_keys(p, "numerics.pde", {"nodes", "steps", "width", "axes", "theta", "psor", "psor_omega",
                                                        "psor_tolerance", "retain_every", "mode", "penalty"});
        if (p.contains("nodes")) {
            c.pde.nodes = p.at("nodes").is_array() ? p.at("nodes").get<std::vector<std::size_t>>()
                                                   : std::vector<std::size_t>{p.at("nodes").get<std::size_t>()};
        }
        c.pde.steps = p.value("steps", c.pde.steps);
        c.pde.width = detail::number_or(p, "width", c.pde.width);
        if (p.contains("axes")) {
            for (std::size_t a = 0; a < p.at("axes").size(); ++a) {
                c.pde.axes.push_back(detail::axis_from_json(p.at("axes").at(a), "numerics.pde.axes"));
            }
            if (c.pde.axes.size() != c.n()) throw ValidationError("numerics.pde.axes needs one axis per coordinate");
        }
        c.pde.options = detail::pde_options_from_json(p);
    }
    if (c.pde.nodes.size() != 1 && c.pde.nodes.size() != c.n()) {
        throw ValidationError("numerics.pde.nodes needs one entry or one per axis");
    }
    if (num.contains("ladder")) {
        const json& l = num.at("ladder");
        detail::reject_unknown_keys(l, "numerics.ladder", {"dt", "dt_solver", "paths", "mesh", "penalty"});
        c.ladders.dt = detail::list_or_empty<std::size_t>(l, "dt");
        c.ladders.dt_solver = l.value("dt_solver", std::string("mc"));
        if (c.ladders.dt_solver != "mc" && c.ladders.dt_solver != "pde") {
            throw ValidationError("unknown dt solver \"" + c.ladders.dt_solver + "\" at key \"numerics.ladder.dt_solver\"");
        }
        c.ladders.paths = detail::list_or_empty<std::size_t>(l, "paths");
        c.ladders.mesh = detail::list_or_empty<std::size_t>(l, "mesh");
        c.ladders.penalty = detail::list_or_empty<double>(l, "penalty");
    }

    if (j.contains("probes")) {
        for (const auto& p : j.at("probes")) {
            detail::reject_unknown_keys(p, "probes", {"t", "x"});
            ProbePoint q{detail::number(p, "probes", "t"), detail::require(p, "probes", "x").get<std::vector<double>>()};
            if (q.x.size() != c.n()) throw ValidationError("probe point has the wrong dimension");
            if (q.t < c.t0 || q.t > c.spec.horizon) throw ValidationError("probe time outside [t0, horizon]");
            c.probes.push_back(std::move(q));
        }
    } else {
        c.probes.push_back({c.t0, c.x0.coords()});
    }
    if (j.contains("tolerance")) {
        const json& t = j.at("tolerance");
        detail::reject_unknown_keys(t, "tolerance", {"abs", "k", "rel"});
        c.tolerance.abs = detail::number_or(t, "abs", c.tolerance.abs);
        c.tolerance.k = detail::number_or(t, "k", c.tolerance.k);
        c.tolerance.rel = detail::number_or(t, "rel", c.tolerance.rel);
    }
    if (j.contains("reference")) c.reference = detail::number(j, "", "reference");
    c.outputs = detail::list_or_empty<std::string>(j, "outputs");
    if (c.outputs.empty()) c.outputs = c.market ? std::vector<std::string>{"price"} : std::vector<std::string>{"estimate"};
    for (const auto& o : c.outputs) {
        const auto& k = detail::known_outputs();
        if (std::find(k.begin(), k.end(), o) == k.end()) {
            throw ValidationError("unknown output \"" + o + "\" at key \"outputs\"");
        }
    }
    c.out_dir = j.value("out", std::string{});
    return c;
}

[[nodiscard]] inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open configuration " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ValidationError("configuration " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

/// 64-bit FNV-1a.
[[nodiscard]] inline std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

[[nodiscard]] inline std::string hex64(std::uint64_t v) {
    std::ostringstream s;
    s << std::hex;
    s.width(16);
    s.fill('0');
    s << v;
    return s.str();
}

/// Hash of the canonical (key-sorted, compact) configuration.
[[nodiscard]] inline std::string config_hash(const ExperimentConfig& c) { return hex64(fnv1a(c.source.dump())); }

// ---------------------------------------------------------------------------
// Solver entry points on a configuration
// ---------------------------------------------------------------------------

/// Grid over [t0, T] from the configured axes or the box around x0.
[[nodiscard]] inline SimplexGrid config_grid(const ExperimentConfig& c, std::optional<std::size_t> nodes = {},
                                             std::optional<std::size_t> steps = {}) {
    const std::size_t N = steps.value_or(c.pde.steps);
    std::vector<GridAxis> axes = c.pde.axes;
    if (axes.empty()) {
        const auto box = SimplexGrid::around(c.profile, c.x0, c.t0, c.horizon(), 3, N, c.pde.width);
        for (std::size_t a = 0; a < c.n(); ++a) axes.push_back(box.axis(a));
    }
    for (std::size_t a = 0; a < axes.size(); ++a) {
        axes[a].nodes = nodes.value_or(c.pde.nodes.size() == 1 ? c.pde.nodes[0] : c.pde.nodes[a]);
    }
    switch (axes.size()) {
        case 1: return SimplexGrid::interval(axes[0], c.t0, c.horizon(), N);
        case 2: return SimplexGrid::gaps2(axes[0], axes[1], c.t0, c.horizon(), N);
        case 3: return SimplexGrid::gaps3(axes[0], axes[1], axes[2], c.t0, c.horizon(), N);
        default: throw ValidationError("pde: only n <= 3 is supported");
    }
}

[[nodiscard]] inline GridSolution config_pde(const ExperimentConfig& c, std::optional<std::size_t> nodes = {},
                                             std::optional<std::size_t> steps = {}) {
    return solve_obstacle(c.profile, c.spec, config_grid(c, nodes, steps), c.pde.options);
}

struct McRun {
    double u = 0.0;
    double standard_error = 0.0;
};

/// Reflected (or penalized, for a penalty) solve started at (t, x).
[[nodiscard]] inline McRun config_mc(const ExperimentConfig& c, double t, const std::vector<double>& x,
                                     const ExecutionPolicy& policy, std::optional<std::size_t> steps = {},
                                     std::optional<std::size_t> paths = {}, std::optional<double> penalty = {},
                                     std::optional<std::size_t> batches = {}) {
    SimulationOptions sim;
    sim.allow_nonconcave = c.numerics.allow_nonconcave;
    sim.policy = policy;
    SolverOptions solver = c.numerics.solver;
    solver.policy = policy;
    if (batches) solver.batches = *batches;
    const auto bundle = simulate(c.profile, SimplexPoint(x), TimeGrid(t, c.horizon(), steps.value_or(c.numerics.steps)),
                                 paths.value_or(c.numerics.paths), c.numerics.seed, sim);
    const auto sol = penalty ? solve_penalized(bundle, c.spec, *penalty, solver) : solve_reflected(bundle, c.spec, solver);
    return {sol.u0, sol.standard_error};
}

inline void validate_config_spec(const ExperimentConfig& c) {
    if (c.numerics.validation_samples > 0) {
        require_accepted(validate_spec(c.spec, c.profile, c.numerics.validation_samples, c.numerics.seed));
    }
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

struct CrossRow {
    ProbePoint point;
    double mc = 0.0;
    double mc_stderr = 0.0;
    std::optional<double> pde;
    std::optional<double> gap;
    double bound = 0.0;
    /// false when the probe lies outside the truncated PDE domain (excluded)
    bool inside = true;
    bool pass = true;
};

struct CrossReport {
    std::vector<CrossRow> rows;
    /// n = 1 put/call markets: tree price at (t0, p) and the relative gaps to it.
    std::optional<double> oracle;
    std::optional<double> mc_vs_oracle;
    std::optional<double> pde_vs_oracle;
    double face_residual = 0.0;
    bool passed = true;
};

/// u(t, x) by the reflected solver and by the obstacle PDE at every probe.
[[nodiscard]] inline CrossReport cross_validate(const ExperimentConfig& c, const ExecutionPolicy& policy = {}) {
    if (c.n() > 3) throw ValidationError("cross_validate: the PDE side needs n <= 3");
    validate_config_spec(c);
    const auto grid_sol = config_pde(c);
    CrossReport report;
    report.face_residual = boundary_residual(grid_sol).max;
    for (const auto& p : c.probes) {
        CrossRow row;
        row.point = p;
        const auto mc = config_mc(c, p.t, p.x, policy);
        row.mc = mc.u;
        row.mc_stderr = mc.standard_error;
        // the terminal condition holds exactly; interpolating it would not
        if (p.t == c.horizon()) row.pde = c.spec.terminal(p.x);
        else row.pde = interpolate(grid_sol, p.t, p.x);
        row.inside = row.pde.has_value();
        if (row.inside) {
            row.gap = row.mc - *row.pde;
            row.bound = c.tolerance.abs + c.tolerance.k * row.mc_stderr + c.tolerance.rel * std::abs(*row.pde);
            row.pass = std::abs(*row.gap) <= row.bound;
            report.passed = report.passed && row.pass;
        }
        report.rows.push_back(std::move(row));
    }
    if (c.market && c.market->n() == 1) {
        report.oracle = detail::oracle_for(*c.market, 2000);
    }
    if (report.oracle && !report.rows.empty() && report.rows[0].inside && report.rows[0].point.t == c.t0 &&
        report.rows[0].point.x == c.x0.coords()) {
        const double o = *report.oracle;
        report.mc_vs_oracle = report.rows[0].mc / o - 1.0;
        report.pde_vs_oracle = *report.rows[0].pde / o - 1.0;
        if (c.tolerance.rel > 0.0) {
            report.passed = report.passed && std::abs(*report.mc_vs_oracle) <= c.tolerance.rel &&
                            std::abs(*report.pde_vs_oracle) <= c.tolerance.rel;
        }
    }
    return report;
}

[[nodiscard]] inline json to_json(const CrossReport& r) {
    json j;
    json rows = json::array();
    for (const auto& row : r.rows) {
        json e{{"t", row.point.t}, {"x", row.point.x}, {"mc", row.mc}, {"mc_stderr", row.mc_stderr},
               {"inside", row.inside}, {"pass", row.pass}, {"bound", row.bound}};
        e["pde"] = row.pde ? json(*row.pde) : json(nullptr);
        e["gap"] = row.gap ? json(*row.gap) : json(nullptr);
        rows.push_back(e);
    }
    j["probes"] = rows;
    j["face_residual"] = r.face_residual;
    if (r.oracle) {
        j["oracle"] = *r.oracle;
        j["mc_vs_oracle"] = *r.mc_vs_oracle;
        j["pde_vs_oracle"] = *r.pde_vs_oracle;
    }
    j["passed"] = r.passed;
    return j;
}

inline void write_cross_csv(std::ostream& out, const CrossReport& r) {
    write_header(out, {"t", "x", "mc", "mc_stderr", "pde", "gap", "bound", "inside", "pass"});
    for (const auto& row : r.rows) {
        std::string x;
        for (std::size_t i = 0; i < row.point.x.size(); ++i) x += (i ? ";" : "") + format_number(row.point.x[i]);
        CsvRow c;
        c << row.point.t << x << row.mc << row.mc_stderr << (row.pde ? format_number(*row.pde) : std::string("NA"))
          << (row.gap ? format_number(*row.gap) : std::string("NA")) << row.bound << static_cast<int>(row.inside)
          << static_cast<int>(row.pass);
        c.write(out);
    }
}

// ---------------------------------------------------------------------------
// Convergence ladders
// ---------------------------------------------------------------------------

enum class LadderAxis { dt, paths, mesh, penalty };

[[nodiscard]] inline std::string_view to_string(LadderAxis a) {
    switch (a) {
        case LadderAxis::dt: return "dt";
        case LadderAxis::paths: return "paths";
        case LadderAxis::mesh: return "mesh";
        case LadderAxis::penalty: return "penalty";
    }
    return "?";
}

[[nodiscard]] inline std::optional<LadderAxis> parse_ladder_axis(std::string_view s) {
    for (auto a : {LadderAxis::dt, LadderAxis::paths, LadderAxis::mesh, LadderAxis::penalty}) {
        if (to_string(a) == s) return a;
    }
    return std::nullopt;
}

struct LadderRow {
    double level = 0.0;
    double value = 0.0;
    double standard_error = 0.0;
    std::optional<double> error;
    /// value - previous value
    std::optional<double> diff;
};

struct ConvergenceTable {
    LadderAxis axis = LadderAxis::dt;
    std::vector<LadderRow> rows;
    /// Reflected value on the same seed, for the penalty ladder.
    std::optional<double> limit;
    bool monotone = false;
    std::string verdict;
};

namespace detail {

inline bool decreasing(const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (!(v[i] < v[i - 1])) return false;
    }
    return true;
}

}  // namespace detail

/// One row per ladder level at (t0, x0):
///   dt      - time steps (MC or PDE per the ladder's dt_solver); error against the reference when given
///   paths   - MC paths, one regression per level; standard error should scale like 1/sqrt(paths)
///   mesh    - PDE nodes per axis
///   penalty - penalized MC on one seed; values should rise towards the reflected value
/// With a reference the verdict asks for decreasing errors, otherwise for
/// decreasing successive differences.
[[nodiscard]] inline ConvergenceTable convergence_table(const ExperimentConfig& c, LadderAxis axis,
                                                        const ExecutionPolicy& policy = {}) {
    std::vector<double> levels;
    switch (axis) {
        case LadderAxis::dt: levels.assign(c.ladders.dt.begin(), c.ladders.dt.end()); break;
        case LadderAxis::paths: levels.assign(c.ladders.paths.begin(), c.ladders.paths.end()); break;
        case LadderAxis::mesh: levels.assign(c.ladders.mesh.begin(), c.ladders.mesh.end()); break;
        case LadderAxis::penalty: levels = c.ladders.penalty; break;
    }
    if (levels.size() < 3) {
        throw ValidationError("convergence: the " + std::string(to_string(axis)) + " ladder needs at least 3 levels");
    }
    validate_config_spec(c);
    const auto& x0 = c.x0.coords();
    auto pde_at = [&](std::optional<std::size_t> nodes, std::optional<std::size_t> steps) {
        const auto sol = config_pde(c, nodes, steps);
        const auto u = interpolate(sol, c.t0, x0);
        if (!u) throw ValidationError("convergence: x0 outside the PDE grid");
        return *u;
    };

    ConvergenceTable table;
    table.axis = axis;
    for (double level : levels) {
        LadderRow row;
        row.level = level;
        const auto ilevel = static_cast<std::size_t>(level);
        switch (axis) {
            case LadderAxis::dt:
                if (c.ladders.dt_solver == "pde") {
                    row.value = pde_at(std::nullopt, ilevel);
                } else {
                    const auto r = config_mc(c, c.t0, x0, policy, ilevel);
                    row.value = r.u;
                    row.standard_error = r.standard_error;
                }
                break;
            case LadderAxis::paths: {
                const auto r = config_mc(c, c.t0, x0, policy, std::nullopt, ilevel, std::nullopt, std::size_t{1});
                row.value = r.u;
                row.standard_error = r.standard_error;
                break;
            }
            case LadderAxis::mesh: row.value = pde_at(ilevel, std::nullopt); break;
            case LadderAxis::penalty: {
                const auto r = config_mc(c, c.t0, x0, policy, std::nullopt, std::nullopt, level);
                row.value = r.u;
                row.standard_error = r.standard_error;
                break;
            }
        }
        if (c.reference) row.error = std::abs(row.value - *c.reference);
        if (!table.rows.empty()) row.diff = row.value - table.rows.back().value;
        table.rows.push_back(row);
    }

    const auto& rows = table.rows;
    switch (axis) {
        case LadderAxis::dt:
        case LadderAxis::mesh: {
            std::vector<double> seq;
            if (c.reference) {
                for (const auto& r : rows) seq.push_back(*r.error);
                table.verdict = "error decreasing";
            } else {
                for (std::size_t i = 1; i < rows.size(); ++i) seq.push_back(std::abs(*rows[i].diff));
                table.verdict = "successive differences decreasing";
            }
            table.monotone = detail::decreasing(seq);
            break;
        }
        case LadderAxis::paths: {
            table.monotone = true;
            for (std::size_t i = 1; i < rows.size(); ++i) {
                const double expect = std::sqrt(rows[i - 1].level / rows[i].level);
                const double ratio = rows[i].standard_error / rows[i - 1].standard_error;
                table.monotone = table.monotone && std::abs(ratio / expect - 1.0) <= 0.3;
            }
            table.verdict = "standard error scales as 1/sqrt(paths) within 30%";
            break;
        }
        case LadderAxis::penalty: {
            table.monotone = true;
            for (std::size_t i = 1; i < rows.size(); ++i) {
                const double slack = std::max(rows[i].standard_error, rows[i - 1].standard_error);
                table.monotone = table.monotone && rows[i].value >= rows[i - 1].value - slack;
            }
            table.verdict = "non-decreasing in the penalty within one standard error";
            if (!c.spec.obstacle.is_sentinel()) {
                table.limit = config_mc(c, c.t0, x0, policy).u;
                for (auto& r : table.rows) r.error = std::abs(r.value - *table.limit);
            }
            break;
        }
    }
    if (!table.monotone) table.verdict = "NOT " + table.verdict;
    return table;
}

/// level, value, stderr, error, diff
inline void write_convergence_csv(std::ostream& out, const ConvergenceTable& t) {
    write_header(out, {std::string(to_string(t.axis)), "value", "stderr", "error", "diff"});
    for (const auto& r : t.rows) {
        CsvRow c;
        if (t.axis == LadderAxis::penalty) c << r.level;
        else c << static_cast<std::size_t>(r.level);
        c << r.value << r.standard_error << (r.error ? format_number(*r.error) : std::string("NA"))
          << (r.diff ? format_number(*r.diff) : std::string("NA"));
        c.write(out);
    }
}

[[nodiscard]] inline json to_json(const ConvergenceTable& t) {
    json j{{"axis", std::string(to_string(t.axis))}, {"monotone", t.monotone}, {"verdict", t.verdict}};
    if (t.limit) j["limit"] = *t.limit;
    return j;
}

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

struct RunOptions {
    ExecutionPolicy policy{};
    bool dump_paths = false;
    /// "estimate" solves the penalized equation with this m instead of projecting.
    std::optional<double> penalty;
};

struct ScenarioResult {
    std::filesystem::path directory;
    json manifest;
    /// false if a cross-validation or ladder verdict failed
    bool passed = true;
};

namespace detail {

class ArtifactWriter {
public:
    explicit ArtifactWriter(std::filesystem::path dir) : dir_(std::move(dir)) {}

    void write(const std::string& name, const std::string& operation, const std::string& content) {
        const auto path = dir_ / name;
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + path.string());
        out << content;
        if (!out) throw std::runtime_error("write failed for " + path.string());
        files_.push_back({{"file", name}, {"operation", operation}, {"fnv1a64", hex64(fnv1a(content))}});
    }

    [[nodiscard]] const json& files() const { return files_; }

private:
    std::filesystem::path dir_;
    json files_ = json::array();
};

}  // namespace detail

/// Runs the configured outputs in order and writes them, the canonical
/// configuration and a manifest into `dir` (created if missing). Worker
/// counts are not part of the configuration and do not change any byte.
inline ScenarioResult run_scenario(const ExperimentConfig& c, const std::filesystem::path& dir,
                                   const RunOptions& options = {}) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
    validate_config_spec(c);

    ScenarioResult result;
    result.directory = dir;
    detail::ArtifactWriter w(dir);
    w.write("config.json", "config_from_json", c.source.dump(2) + "\n");
    json verdicts = json::object();

    for (const auto& name : c.outputs) {
        std::ostringstream a, b;
        if (name == "simulate") {
            SimulationOptions sim;
            sim.allow_nonconcave = c.numerics.allow_nonconcave;
            sim.policy = options.policy;
            const auto bundle = simulate(c.profile, c.x0, TimeGrid(c.t0, c.horizon(), c.numerics.steps),
                                         c.numerics.paths, c.numerics.seed, sim);
            const auto qv = ranked_brownian_diagnostics(bundle);
            json j{{"concave", bundle.stats().concave},
                   {"tie_fraction", bundle.stats().tie_fraction},
                   {"triple_proximity_fraction", bundle.stats().triple_proximity_fraction}};
            j["qv_mean"] = qv.mean;
            w.write("simulate.json", "simulate", j.dump(2) + "\n");
            if (options.dump_paths) {
                write_paths_csv(a, bundle);
                w.write("paths.csv", "simulate", a.str());
            }
        } else if (name == "estimate") {
            SimulationOptions sim;
            sim.allow_nonconcave = c.numerics.allow_nonconcave;
            sim.policy = options.policy;
            SolverOptions solver = c.numerics.solver;
            solver.policy = options.policy;
            const auto bundle = simulate(c.profile, c.x0, TimeGrid(c.t0, c.horizon(), c.numerics.steps),
                                         c.numerics.paths, c.numerics.seed, sim);
            std::string op = "solve_reflected";
            if (options.penalty) op = "solve_penalized";
            else if (c.spec.obstacle.is_sentinel()) op = "solve_bsde";
            const auto sol = options.penalty ? solve_penalized(bundle, c.spec, *options.penalty, solver)
                             : c.spec.obstacle.is_sentinel() ? solve_bsde(bundle, c.spec, solver)
                                                             : solve_reflected(bundle, c.spec, solver);
            json j = solution_summary(sol);
            if (options.penalty) j["penalty"] = *options.penalty;
            j["diagnostics"] = solution_diagnostics(sol);
            w.write("estimate.json", op, j.dump(2) + "\n");
            write_solution_csv(a, sol);
            w.write("solution.csv", op, a.str());
            if (options.dump_paths) {
                write_paths_csv(b, bundle);
                w.write("paths.csv", "simulate", b.str());
            }
        } else if (name == "pde") {
            const auto sol = config_pde(c);
            w.write("pde.json", "solve_obstacle", grid_summary(sol, probe(sol, c.probes)).dump(2) + "\n");
            write_grid_csv(a, sol);
            w.write("grid.csv", "solve_obstacle", a.str());
        } else if (name == "price") {
            if (!c.market) throw ValidationError("output \"price\" needs a market configuration");
            PricingNumerics num;
            num.steps = c.numerics.steps;
            num.paths = c.numerics.paths;
            num.seed = c.numerics.seed;
            num.solver = c.numerics.solver;
            num.solver.policy = options.policy;
            num.validation_samples = 0;  // done above
            w.write("price.json", "price_american", to_json(price_american(*c.market, num)).dump(2) + "\n");
        } else if (name == "cross_validate") {
            const auto r = cross_validate(c, options.policy);
            w.write("cross_validation.json", "cross_validate", to_json(r).dump(2) + "\n");
            write_cross_csv(a, r);
            w.write("cross_validation.csv", "cross_validate", a.str());
            verdicts[name] = r.passed;
            result.passed = result.passed && r.passed;
        } else {
            const auto axis = parse_ladder_axis(std::string_view(name).substr(std::string("convergence_").size()));
            const auto t = convergence_table(c, *axis, options.policy);
            write_convergence_csv(a, t);
            w.write(name + ".csv", "convergence_table", a.str());
            w.write(name + ".json", "convergence_table", to_json(t).dump(2) + "\n");
            verdicts[name] = t.monotone;
            result.passed = result.passed && t.monotone;
        }
    }

    json m;
    m["scenario"] = c.name;
    m["config_hash"] = config_hash(c);
    m["seeds"] = json::array({c.numerics.seed});
    if (options.penalty) m["penalty"] = *options.penalty;
    m["versions"] = {{"rankbsde", kVersion},
                     {"compiler", __VERSION__},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)},
                     {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
    m["outputs"] = w.files();
    m["verdicts"] = verdicts;
    m["passed"] = result.passed;
    result.manifest = m;
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
    out << m.dump(2) << "\n";
    return result;
}

}  // namespace rankbsde
