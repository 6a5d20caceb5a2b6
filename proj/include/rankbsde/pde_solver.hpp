#pragma once

// Finite differences for the obstacle problem on the ordered domain
//
//   min(u - h, -u_t - L u - F(t, x, u, sigma grad u)) = 0,   u(T) = g,
//   du/dx_{i+1} = du/dx_i on the face x_i = x_{i+1}.
//
// Coordinates: x itself for n = 1; (s, gamma) with s = x_1 + x_2 and
// gamma = x_1 - x_2 >= 0 for n = 2, where the face condition reads
// du/dgamma = 0; (s, gamma_1, gamma_2) with gamma_i = x_i - x_{i+1} for n = 3,
// where the face conditions are mixed: v_1 = v_2 / 2 on gamma_1 = 0 and
// v_2 = v_1 / 2 on gamma_2 = 0, both normal derivatives vanishing at the corner.
//
// Rows on a face carry the PDE with ghost values from the face condition.
// Rows on the outer truncation boundary impose a zero second normal
// derivative. Time stepping is a theta-scheme; the gradient fed to F is taken
// from the previous time level so every step is a linear solve.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <json.hpp>

#include "rankbsde/core_model.hpp"
#include "rankbsde/csv.hpp"
#include "rankbsde/error.hpp"
#include "rankbsde/registry.hpp"

namespace rankbsde {

struct GridAxis {
    double lo = 0.0;
    double hi = 1.0;
    std::size_t nodes = 3;

    [[nodiscard]] double step() const { return (hi - lo) / static_cast<double>(nodes - 1); }
    [[nodiscard]] double at(std::size_t i) const {
        return i + 1 == nodes ? hi : lo + static_cast<double>(i) * step();
    }
};

/// Gap coordinates of a ranked point: (x) for n = 1, (s, gamma...) otherwise.
[[nodiscard]] inline std::vector<double> gap_coordinates(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n == 1) return {x[0]};
    std::vector<double> c(n);
    c[0] = 0.0;
    for (double v : x) c[0] += v;
    for (std::size_t i = 0; i + 1 < n; ++i) c[i + 1] = x[i] - x[i + 1];
    return c;
}

[[nodiscard]] inline std::vector<double> ranked_from_gaps(std::span<const double> c) {
    const std::size_t n = c.size();
    if (n == 1) return {c[0]};
    // x_n = (s - sum_i i * gamma_i) / n, then climb through the gaps
    double weighted = 0.0;
    for (std::size_t i = 1; i < n; ++i) weighted += static_cast<double>(i) * c[i];
    std::vector<double> x(n);
    x[n - 1] = (c[0] - weighted) / static_cast<double>(n);
    for (std::size_t i = n - 1; i-- > 0;) x[i] = x[i + 1] + c[i + 1];
    return x;
}

/// Maps a gradient in gap coordinates to ranked coordinates:
/// du/dx_j = v_s + v_{gamma_j} - v_{gamma_{j-1}}.
[[nodiscard]] inline std::vector<double> ranked_gradient(std::span<const double> v) {
    const std::size_t n = v.size();
    if (n == 1) return {v[0]};
    std::vector<double> g(n, v[0]);
    for (std::size_t j = 0; j < n; ++j) {
        if (j + 1 < n) g[j] += v[j + 1];
        if (j > 0) g[j] -= v[j];
    }
    return g;
}

class SimplexGrid {
public:
    static SimplexGrid interval(GridAxis x, double t0, double T, std::size_t steps) {
        return SimplexGrid({x}, t0, T, steps);
    }
    static SimplexGrid gaps2(GridAxis s, GridAxis gamma, double t0, double T, std::size_t steps) {
        return SimplexGrid({s, gamma}, t0, T, steps);
    }
    static SimplexGrid gaps3(GridAxis s, GridAxis gamma1, GridAxis gamma2, double t0, double T, std::size_t steps) {
        return SimplexGrid({s, gamma1, gamma2}, t0, T, steps);
    }

    /// Box around x0 wide enough that `width` standard deviations of every
    /// coordinate over [t0, T] stay inside, `nodes` per axis.
    static SimplexGrid around(const CoefficientProfile& profile, const SimplexPoint& x0, double t0, double T,
                              std::size_t nodes, std::size_t steps, double width = 6.0) {
        const std::size_t n = profile.n();
        if (x0.n() != n) throw ValidationError("grid: x0 has the wrong dimension");
        if (!(width > 0.0)) throw ValidationError("grid: width must be positive");
        const double span = std::max(T - t0, 0.0);
        const double sd = profile.max_sigma() * std::sqrt(span);
        const double drift = profile.max_abs_delta() * span;
        // s sums n coordinates, a gap differences two
        const double nn = static_cast<double>(n);
        double rs = width * std::sqrt(nn) * sd + nn * drift;
        double rg = width * std::sqrt(2.0) * sd + 2.0 * drift;
        if (!(rs > 0.0)) rs = rg = 1.0;
        const auto c = gap_coordinates(x0.coords());
        std::vector<GridAxis> axes;
        axes.push_back({c[0] - rs, c[0] + rs, nodes});
        for (std::size_t a = 1; a < n; ++a) axes.push_back({0.0, c[a] + rg, nodes});
        return SimplexGrid(std::move(axes), t0, T, steps);
    }

    [[nodiscard]] std::size_t n() const noexcept { return axes_.size(); }
    [[nodiscard]] const GridAxis& axis(std::size_t a) const { return axes_.at(a); }
    [[nodiscard]] std::size_t size() const noexcept { return size_; }
    [[nodiscard]] std::size_t time_steps() const noexcept { return steps_; }
    [[nodiscard]] double t0() const noexcept { return t0_; }
    [[nodiscard]] double horizon() const noexcept { return T_; }
    [[nodiscard]] double dt() const noexcept { return (T_ - t0_) / static_cast<double>(steps_); }
    [[nodiscard]] double t(std::size_t k) const { return k == steps_ ? T_ : t0_ + static_cast<double>(k) * dt(); }

    [[nodiscard]] std::size_t stride(std::size_t a) const { return strides_[a]; }
    [[nodiscard]] std::vector<std::size_t> multi(std::size_t node) const {
        std::vector<std::size_t> m(n());
        for (std::size_t a = 0; a < n(); ++a) {
            m[a] = node / strides_[a];
            node %= strides_[a];
        }
        return m;
    }
    [[nodiscard]] std::size_t index(std::span<const std::size_t> m) const {
        std::size_t i = 0;
        for (std::size_t a = 0; a < n(); ++a) i += m[a] * strides_[a];
        return i;
    }
    [[nodiscard]] std::vector<double> coords(std::size_t node) const {
        const auto m = multi(node);
        std::vector<double> c(n());
        for (std::size_t a = 0; a < n(); ++a) c[a] = axes_[a].at(m[a]);
        return c;
    }
    [[nodiscard]] std::vector<double> ranked(std::size_t node) const { return ranked_from_gaps(coords(node)); }

    /// Axis whose outer truncation boundary the node lies on, lowest axis
    /// first; -1 for nodes that carry the PDE (including face nodes).
    [[nodiscard]] int outer_axis(std::size_t node) const {
        const auto m = multi(node);
        for (std::size_t a = 0; a < n(); ++a) {
            const bool lo_outer = a == 0 && m[a] == 0;
            if (lo_outer || m[a] + 1 == axes_[a].nodes) return static_cast<int>(a);
        }
        return -1;
    }

    [[nodiscard]] bool contains(std::span<const double> c) const {
        for (std::size_t a = 0; a < n(); ++a) {
            if (!(c[a] >= axes_[a].lo && c[a] <= axes_[a].hi)) return false;
        }
        return true;
    }

private:
    SimplexGrid(std::vector<GridAxis> axes, double t0, double T, std::size_t steps)
        : axes_(std::move(axes)), t0_(t0), T_(T), steps_(steps) {
        if (axes_.empty() || axes_.size() > 3) throw ValidationError("grid: n must be 1, 2 or 3");
        if (!std::isfinite(t0) || !std::isfinite(T) || T < t0) throw ValidationError("grid: need t0 <= T");
        if (steps < 1) throw ValidationError("grid: at least one time step");
        for (std::size_t a = 0; a < axes_.size(); ++a) {
            const auto& ax = axes_[a];
            if (ax.nodes < 3) throw ValidationError("grid: axis " + std::to_string(a) + " needs at least 3 nodes");
            if (!(ax.hi > ax.lo) || !std::isfinite(ax.lo) || !std::isfinite(ax.hi)) {
                throw ValidationError("grid: axis " + std::to_string(a) + " must have lo < hi");
            }
            if (a > 0 && ax.lo != 0.0) {
                throw ValidationError("grid: gap axis " + std::to_string(a) + " must start exactly at 0");
            }
        }
        strides_.assign(axes_.size(), 1);
        for (std::size_t a = axes_.size() - 1; a-- > 0;) strides_[a] = strides_[a + 1] * axes_[a + 1].nodes;
        size_ = strides_[0] * axes_[0].nodes;
    }

    std::vector<GridAxis> axes_;
    double t0_, T_;
    std::size_t steps_;
    std::vector<std::size_t> strides_;
    std::size_t size_ = 0;
};

/// Generator L in gap coordinates: sum_{a<=b} A(a,b) d_a d_b + sum_a b_a d_a.
struct GapCoefficients {
    Eigen::MatrixXd second;  // upper triangle used; A(a,b) multiplies the mixed derivative as written
    Eigen::VectorXd first;
};

[[nodiscard]] inline GapCoefficients gap_coefficients(const CoefficientProfile& profile) {
    const std::size_t n = profile.n();
    const auto& d = profile.delta();
    std::vector<double> q(n);
    for (std::size_t j = 0; j < n; ++j) q[j] = profile.sigma()[j] * profile.sigma()[j];
    GapCoefficients c{Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)),
                      Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))};
    if (n == 1) {
        c.second(0, 0) = 0.5 * q[0];
        c.first(0) = d[0];
        return c;
    }
    // x_j derivative is d_s + d_{gamma_j} - d_{gamma_{j-1}}; expand (1/2) sum q_j d_{x_j}^2
    for (std::size_t j = 0; j < n; ++j) {
        std::vector<std::pair<std::size_t, double>> terms{{0, 1.0}};
        if (j + 1 < n) terms.push_back({j + 1, 1.0});
        if (j > 0) terms.push_back({j, -1.0});
        for (std::size_t u = 0; u < terms.size(); ++u) {
            const auto [a, wa] = terms[u];
            c.first(static_cast<Eigen::Index>(a)) += wa * d[j];
            c.second(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)) += 0.5 * q[j] * wa * wa;
            for (std::size_t v = u + 1; v < terms.size(); ++v) {
                const auto [b, wb] = terms[v];
                const auto lo = static_cast<Eigen::Index>(std::min(a, b));
                const auto hi = static_cast<Eigen::Index>(std::max(a, b));
                c.second(lo, hi) += q[j] * wa * wb;
            }
        }
    }
    return c;
}

struct DiscreteOperator {
    /// PDE rows: the discrete L (face ghosts folded in); outer rows empty.
    Eigen::SparseMatrix<double, Eigen::RowMajor> generator;
    /// Outer rows: u - 2 u_in + u_in2 (zero second normal derivative); other rows empty.
    Eigen::SparseMatrix<double, Eigen::RowMajor> extrapolation;
    std::vector<int> outer;
    GapCoefficients coefficients;

    /// generator + extrapolation, the operator as applied to a grid function.
    [[nodiscard]] Eigen::SparseMatrix<double, Eigen::RowMajor> combined() const { return generator + extrapolation; }
    [[nodiscard]] double cross(std::size_t a, std::size_t b) const {
        return coefficients.second(static_cast<Eigen::Index>(std::min(a, b)), static_cast<Eigen::Index>(std::max(a, b)));
    }
};

namespace detail {

using Entry = std::pair<std::size_t, double>;

// Value at a multi-index that may sit one step below a face, as a combination
// of grid values.
inline void resolve(const SimplexGrid& grid, std::vector<long> j, double w, std::vector<Entry>& out) {
    const std::size_t n = grid.n();
    auto at = [&](const std::vector<long>& m) {
        std::size_t i = 0;
        for (std::size_t a = 0; a < n; ++a) i += static_cast<std::size_t>(m[a]) * grid.stride(a);
        return i;
    };
    bool inside = true;
    for (std::size_t a = 1; a < n; ++a) inside = inside && j[a] >= 0;
    if (inside) {
        out.push_back({at(j), w});
        return;
    }
    if (n == 2) {
        j[1] = -j[1];
        out.push_back({at(j), w});
        return;
    }
    // n == 3
    if (j[1] < 0 && j[2] < 0) {
        j[1] = -j[1];
        j[2] = -j[2];
        out.push_back({at(j), w});
        return;
    }
    const std::size_t ghost_axis = j[1] < 0 ? 1 : 2;
    const std::size_t other = 3 - ghost_axis;
    const double h_ghost = grid.axis(ghost_axis).step();
    const double h_other = grid.axis(other).step();
    auto mirrored = j;
    mirrored[ghost_axis] = -j[ghost_axis];
    out.push_back({at(mirrored), w});
    // v(-h) = v(h) - 2h v_ghost = v(h) - h v_other, v_other taken on the face
    auto face = j;
    face[ghost_axis] = 0;
    const long k = face[other];
    const long last = static_cast<long>(grid.axis(other).nodes) - 1;
    if (k == 0) return;  // corner: both normal derivatives vanish
    auto plus = face, minus = face;
    double scale;
    if (k < last) {
        plus[other] = k + 1;
        minus[other] = k - 1;
        scale = 1.0 / (2.0 * h_other);
    } else {
        minus[other] = k - 1;
        scale = 1.0 / h_other;
    }
    out.push_back({at(plus), -w * h_ghost * scale});
    out.push_back({at(minus), w * h_ghost * scale});
}

}  // namespace detail

/// Discrete generator on the grid. Rejects meshes where a mixed-derivative
/// coefficient outweighs the axis weights it is paired with:
/// |A_ab| <= 2 min(A_aa h_b / h_a, A_bb h_a / h_b).
[[nodiscard]] inline DiscreteOperator assemble_operator(const CoefficientProfile& profile, const SimplexGrid& grid) {
    const std::size_t n = grid.n();
    if (profile.n() != n) {
        throw ValidationError("assemble_operator: profile has n = " + std::to_string(profile.n()) +
                              " but the grid has n = " + std::to_string(n));
    }
    DiscreteOperator op;
    op.coefficients = gap_coefficients(profile);
    const auto& A = op.coefficients.second;
    const auto& b = op.coefficients.first;
    std::vector<double> h(n);
    for (std::size_t a = 0; a < n; ++a) h[a] = grid.axis(a).step();
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t c = a + 1; c < n; ++c) {
            const double cross = std::abs(A(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(c)));
            if (cross == 0.0) continue;
            const double aa = A(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a));
            const double cc = A(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c));
            const double ratio = h[a] / h[c];
            const double lo = cross / (2.0 * cc), hi = 2.0 * aa / cross;
            if (ratio < lo || ratio > hi) {
                throw ValidationError("assemble_operator: mixed term between axes " + std::to_string(a) + " and " +
                                      std::to_string(c) + " breaks diagonal dominance at mesh ratio " +
                                      format_number(ratio) + "; admissible ratios are [" + format_number(lo) + ", " +
                                      format_number(hi) + "]");
            }
        }
    }

    const std::size_t size = grid.size();
    op.outer.resize(size);
    std::vector<Eigen::Triplet<double>> gen, ext;
    std::vector<detail::Entry> entries;
    for (std::size_t node = 0; node < size; ++node) {
        const int outer = grid.outer_axis(node);
        op.outer[node] = outer;
        const auto m = grid.multi(node);
        std::vector<long> base(m.begin(), m.end());
        if (outer >= 0) {
            const auto a = static_cast<std::size_t>(outer);
            const long dir = m[a] == 0 ? 1 : -1;
            auto in1 = base, in2 = base;
            in1[a] += dir;
            in2[a] += 2 * dir;
            auto idx = [&](const std::vector<long>& v) {
                std::size_t i = 0;
                for (std::size_t q = 0; q < n; ++q) i += static_cast<std::size_t>(v[q]) * grid.stride(q);
                return static_cast<Eigen::Index>(i);
            };
            const auto row = static_cast<Eigen::Index>(node);
            ext.emplace_back(row, row, 1.0);
            ext.emplace_back(row, idx(in1), -2.0);
            ext.emplace_back(row, idx(in2), 1.0);
            continue;
        }
        entries.clear();
        for (std::size_t a = 0; a < n; ++a) {
            const double aa = A(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)) / (h[a] * h[a]);
            const double ba = b(static_cast<Eigen::Index>(a)) / (2.0 * h[a]);
            auto up = base, dn = base;
            up[a] += 1;
            dn[a] -= 1;
            entries.push_back({node, -2.0 * aa});
            detail::resolve(grid, up, aa + ba, entries);
            detail::resolve(grid, dn, aa - ba, entries);
            for (std::size_t c = a + 1; c < n; ++c) {
                const double w = A(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(c)) / (4.0 * h[a] * h[c]);
                if (w == 0.0) continue;
                for (int sa : {-1, 1}) {
                    for (int sc : {-1, 1}) {
                        auto v = base;
                        v[a] += sa;
                        v[c] += sc;
                        detail::resolve(grid, v, sa * sc * w, entries);
                    }
                }
            }
        }
        for (const auto& [col, w] : entries) {
            gen.emplace_back(static_cast<Eigen::Index>(node), static_cast<Eigen::Index>(col), w);
        }
    }
    const auto sz = static_cast<Eigen::Index>(size);
    op.generator.resize(sz, sz);
    op.generator.setFromTriplets(gen.begin(), gen.end());
    op.extrapolation.resize(sz, sz);
    op.extrapolation.setFromTriplets(ext.begin(), ext.end());
    return op;
}

enum class ObstacleMode { projected, penalized };

namespace detail {

// u within rounding of h counts as contact; a stationary solve sitting on the
// obstacle otherwise leaves last-bit noise above it.
[[nodiscard]] inline bool touches(double u, double h) {
    return u <= h + 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(h));
}

}  // namespace detail

struct PdeOptions {
    ObstacleMode mode = ObstacleMode::projected;
    /// Penalty m for ObstacleMode::penalized.
    double penalty = 0.0;
    /// theta in [1/2, 1]; 0 selects the explicit scheme, which is CFL-checked.
    double theta = 1.0;
    /// Projected SOR on the implicit complementarity problem instead of
    /// solve-then-project.
    bool psor = false;
    double psor_omega = 1.2;
    double psor_tolerance = 1e-11;
    std::size_t psor_max_sweeps = 200000;
    /// Keep every k-th time level (t0 and T always kept); 0 picks a stride
    /// that bounds memory.
    std::size_t retain_every = 0;
};

struct GridSolution {
    explicit GridSolution(SimplexGrid g) : grid(std::move(g)) {}

    SimplexGrid grid;
    std::vector<std::size_t> retained_steps;  // increasing
    std::vector<std::vector<double>> u;
    std::vector<std::vector<std::uint8_t>> contact;
    /// Face-condition residual at each time level k = 0..N.
    std::vector<double> face_residual;
    /// max |min(u - h, -D_t u - L u - F)| over PDE rows and steps.
    double complementarity = 0.0;
    /// Same with the PDE part multiplied by dt, the residual of the algebraic
    /// complementarity problem each step solves.
    double complementarity_step = 0.0;
    ObstacleMode mode = ObstacleMode::projected;
    double penalty = 0.0;
    /// Largest number of policy iterations (penalized) or PSOR sweeps in a step.
    std::size_t max_inner_iterations = 0;

    [[nodiscard]] const std::vector<double>& at_step(std::size_t k) const {
        const auto it = std::find(retained_steps.begin(), retained_steps.end(), k);
        if (it == retained_steps.end()) throw ValidationError("grid solution: step " + std::to_string(k) + " not retained");
        return u[static_cast<std::size_t>(it - retained_steps.begin())];
    }
    [[nodiscard]] const std::vector<double>& initial() const { return u.front(); }
};

namespace detail {

// One-sided face residual at a time level: n = 2 reports |du/dgamma| at
// gamma = 0, n = 3 the mismatch of each mixed condition; faces exclude the
// outer truncation boundary.
inline double face_residual(const SimplexGrid& grid, const std::vector<int>& outer, const std::vector<double>& u) {
    const std::size_t n = grid.n();
    if (n == 1) return 0.0;
    double worst = 0.0;
    for (std::size_t node = 0; node < grid.size(); ++node) {
        if (outer[node] >= 0) continue;
        const auto m = grid.multi(node);
        for (std::size_t a = 1; a < n; ++a) {
            if (m[a] != 0) continue;
            const double ha = grid.axis(a).step();
            const double normal = (u[node + grid.stride(a)] - u[node]) / ha;
            double target = 0.0;
            if (n == 3) {
                const std::size_t o = 3 - a;
                if (m[o] == 0) {
                    target = 0.0;
                } else {
                    const double ho = grid.axis(o).step();
                    const double tangential = (u[node + grid.stride(o)] - u[node - grid.stride(o)]) / (2.0 * ho);
                    target = 0.5 * tangential;
                }
            }
            worst = std::max(worst, std::abs(normal - target));
        }
    }
    return worst;
}

// Central differences in gap coordinates (one-sided on outer rows), face
// ghosts through the same rules as the operator, mapped to ranked x.
inline std::vector<double> node_gradient(const SimplexGrid& grid, std::size_t node, const std::vector<double>& u,
                                         std::vector<Entry>& scratch) {
    const std::size_t n = grid.n();
    const auto m = grid.multi(node);
    std::vector<long> base(m.begin(), m.end());
    std::vector<double> v(n, 0.0);
    for (std::size_t a = 0; a < n; ++a) {
        const double h = grid.axis(a).step();
        const bool top = m[a] + 1 == grid.axis(a).nodes;
        const bool bottom = m[a] == 0 && a == 0;
        auto value = [&](std::vector<long> j) {
            scratch.clear();
            resolve(grid, std::move(j), 1.0, scratch);
            double s = 0.0;
            for (const auto& [i, w] : scratch) s += w * u[i];
            return s;
        };
        auto up = base, dn = base;
        up[a] += 1;
        dn[a] -= 1;
        if (top) {
            v[a] = (u[node] - value(dn)) / h;
        } else if (bottom) {
            v[a] = (value(up) - u[node]) / h;
        } else {
            v[a] = (value(up) - value(dn)) / (2.0 * h);
        }
    }
    return ranked_gradient(v);
}

inline bool generator_uses_z(const GeneratorSpec& f) {
    if (f.kind == GeneratorKind::pricing) return true;
    if (f.kind == GeneratorKind::affine) {
        return std::any_of(f.z_coef.begin(), f.z_coef.end(), [](double c) { return c != 0.0; });
    }
    return false;
}

inline double dominance_margin(const Eigen::SparseMatrix<double, Eigen::RowMajor>& S) {
    double margin = std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < S.outerSize(); ++r) {
        double diag = 0.0, off = 0.0;
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(S, r); it; ++it) {
            if (it.col() == r) diag += it.value();
            else off += std::abs(it.value());
        }
        margin = std::min(margin, std::abs(diag) - off);
    }
    return margin;
}

class LinearSystem {
public:
    void factor(const Eigen::SparseMatrix<double, Eigen::RowMajor>& S) {
        matrix_ = S;
        col_ = S;
        col_.makeCompressed();
        lu_.analyzePattern(col_);
        lu_.factorize(col_);
        if (lu_.info() != Eigen::Success) fail("factorization failed: " + lu_.lastErrorMessage());
    }
    [[nodiscard]] Eigen::VectorXd solve(const Eigen::VectorXd& rhs) {
        Eigen::VectorXd x = lu_.solve(rhs);
        if (lu_.info() != Eigen::Success || !x.allFinite()) fail("solve failed");
        return x;
    }

private:
    [[noreturn]] void fail(const std::string& what) const {
        throw NumericalError("pde linear solve: " + what + " (diagonal-dominance margin " +
                             format_number(dominance_margin(matrix_)) + ")");
    }
    Eigen::SparseMatrix<double, Eigen::RowMajor> matrix_;
    Eigen::SparseMatrix<double> col_;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
};

}  // namespace detail

[[nodiscard]] inline GridSolution solve_obstacle(const CoefficientProfile& profile, const ProblemSpec& spec,
                                                 const SimplexGrid& grid, const PdeOptions& options = {}) {
    const std::size_t n = grid.n();
    spec.check_dimension(n);
    const double theta = options.theta;
    if (!(theta == 0.0 || (theta >= 0.5 && theta <= 1.0))) {
        throw ValidationError("solve_obstacle: theta must be 0 (explicit) or in [1/2, 1]");
    }
    if (options.mode == ObstacleMode::penalized && (!(options.penalty >= 0.0) || !std::isfinite(options.penalty))) {
        throw ValidationError("solve_obstacle: penalty must be finite and non-negative");
    }
    if (options.psor && !(options.psor_omega > 0.0 && options.psor_omega < 2.0)) {
        throw ValidationError("solve_obstacle: PSOR relaxation must lie in (0, 2)");
    }
    const auto op = assemble_operator(profile, grid);
    const std::size_t size = grid.size();
    const std::size_t N = grid.time_steps();
    const double dt = grid.dt();
    const double beta = spec.generator.y_slope(0.0);
    const bool has_obstacle = !spec.obstacle.is_sentinel();
    // penalty mode with m = 0 leaves the obstacle unenforced
    const bool penalty_mode = options.mode == ObstacleMode::penalized && has_obstacle;
    const bool penalized = penalty_mode && options.penalty > 0.0;
    const bool uses_z = detail::generator_uses_z(spec.generator);
    const auto& sigma = profile.sigma();

    std::vector<std::vector<double>> x(size);
    for (std::size_t i = 0; i < size; ++i) x[i] = grid.ranked(i);

    using SpMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;
    const auto sz = static_cast<Eigen::Index>(size);
    SpMat pde_identity(sz, sz);
    {
        std::vector<Eigen::Triplet<double>> t;
        for (std::size_t i = 0; i < size; ++i) {
            if (op.outer[i] < 0) t.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i), 1.0);
        }
        pde_identity.setFromTriplets(t.begin(), t.end());
    }
    const SpMat Lb = op.generator + beta * pde_identity;
    const SpMat S = SpMat(pde_identity - (theta * dt) * Lb) + op.extrapolation;
    const SpMat R = pde_identity + ((1.0 - theta) * dt) * Lb;

    if (theta == 0.0 && dt > 0.0) {
        double worst = 0.0;
        for (Eigen::Index r = 0; r < Lb.outerSize(); ++r) worst = std::max(worst, -Lb.coeff(r, r));
        if (penalized) worst += options.penalty;
        if (dt * worst > 1.0) {
            throw ValidationError("solve_obstacle: explicit step violates the CFL bound dt * max|L_ii| = " +
                                  format_number(dt * worst) + " > 1; use at least " +
                                  std::to_string(static_cast<std::size_t>(std::ceil(N * dt * worst))) + " steps");
        }
    }

    GridSolution sol(grid);
    sol.mode = options.mode;
    sol.penalty = options.penalty;
    std::size_t retain = options.retain_every;
    if (retain == 0) retain = std::max<std::size_t>(1, (N * size) / 4000000 + 1);

    Eigen::VectorXd u(sz), h(sz), next(sz), rhs(sz), f(sz);
    h.setConstant(-std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < size; ++i) u(static_cast<Eigen::Index>(i)) = spec.terminal(x[i]);

    std::vector<std::vector<double>> levels;
    std::vector<std::vector<std::uint8_t>> contacts;
    std::vector<std::size_t> steps_kept;
    sol.face_residual.assign(N + 1, 0.0);
    auto as_vector = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    auto keep = [&](std::size_t k, const std::vector<std::uint8_t>& c) {
        if (k == 0 || k == N || k % retain == 0) {
            steps_kept.push_back(k);
            levels.push_back(as_vector(u));
            contacts.push_back(c);
        }
    };
    std::vector<std::uint8_t> contact(size, 0);
    {
        const auto uv = as_vector(u);
        sol.face_residual[N] = detail::face_residual(grid, op.outer, uv);
        if (has_obstacle) {
            for (std::size_t i = 0; i < size; ++i) contact[i] = detail::touches(uv[i], spec.obstacle(grid.t(N), x[i]));
        }
        keep(N, contact);
    }

    detail::LinearSystem system;
    if (theta > 0.0 && !penalized && !options.psor) system.factor(S);
    std::vector<detail::Entry> scratch;
    std::vector<double> z(n);
    const double m = options.penalty;

    for (std::size_t k = N; k-- > 0;) {
        const double t = grid.t(k);
        next = u;
        const auto next_v = as_vector(next);
        for (std::size_t i = 0; i < size; ++i) {
            const auto row = static_cast<Eigen::Index>(i);
            if (has_obstacle) h(row) = spec.obstacle(t, x[i]);
            if (op.outer[i] >= 0) {
                f(row) = 0.0;
                continue;
            }
            std::fill(z.begin(), z.end(), 0.0);
            if (uses_z) {
                const auto grad = detail::node_gradient(grid, i, next_v, scratch);
                for (std::size_t j = 0; j < n; ++j) z[j] = sigma[j] * grad[j];
            }
            f(row) = spec.generator.value(t, x[i], 0.0, z);
        }
        rhs = R * next + dt * f;
        std::size_t inner = 0;

        if (theta == 0.0) {
            u = rhs;
            // outer rows from the inside out: highest axis first
            for (int a = static_cast<int>(n) - 1; a >= 0; --a) {
                for (std::size_t i = 0; i < size; ++i) {
                    if (op.outer[i] != a) continue;
                    double s = 0.0;
                    for (SpMat::InnerIterator it(op.extrapolation, static_cast<Eigen::Index>(i)); it; ++it) {
                        if (it.col() != static_cast<Eigen::Index>(i)) s -= it.value() * u(it.col());
                    }
                    u(static_cast<Eigen::Index>(i)) = s;
                }
            }
            if (penalized) {
                for (std::size_t i = 0; i < size; ++i) {
                    const auto r = static_cast<Eigen::Index>(i);
                    if (op.outer[i] < 0 && next(r) < h(r)) u(r) += dt * m * (h(r) - next(r));
                }
            }
        } else if (penalized) {
            // policy iteration over the active set {u < h}
            std::vector<std::uint8_t> active(size, 0);
            for (std::size_t i = 0; i < size; ++i) {
                active[i] = op.outer[i] < 0 && next(static_cast<Eigen::Index>(i)) < h(static_cast<Eigen::Index>(i));
            }
            for (;;) {
                ++inner;
                if (inner > 200) throw NumericalError("penalized pde step: active set did not settle in 200 iterations");
                SpMat P(sz, sz);
                std::vector<Eigen::Triplet<double>> t3;
                Eigen::VectorXd b = rhs;
                for (std::size_t i = 0; i < size; ++i) {
                    if (!active[i]) continue;
                    const auto r = static_cast<Eigen::Index>(i);
                    t3.emplace_back(r, r, dt * m);
                    b(r) += dt * m * h(r);
                }
                P.setFromTriplets(t3.begin(), t3.end());
                system.factor(SpMat(S + P));
                u = system.solve(b);
                bool changed = false;
                for (std::size_t i = 0; i < size; ++i) {
                    const auto r = static_cast<Eigen::Index>(i);
                    const std::uint8_t now = op.outer[i] < 0 && u(r) < h(r);
                    if (now != active[i]) {
                        active[i] = now;
                        changed = true;
                    }
                }
                if (!changed) break;
            }
        } else if (options.psor && has_obstacle && !penalty_mode) {
            u = next.cwiseMax(h);
            const double omega = options.psor_omega;
            for (;;) {
                ++inner;
                if (inner > options.psor_max_sweeps) {
                    throw NumericalError("pde PSOR: no convergence after " + std::to_string(options.psor_max_sweeps) +
                                         " sweeps");
                }
                double change = 0.0, scale = 1.0;
                for (Eigen::Index r = 0; r < sz; ++r) {
                    double diag = 0.0, acc = rhs(r);
                    for (SpMat::InnerIterator it(S, r); it; ++it) {
                        if (it.col() == r) diag = it.value();
                        else acc -= it.value() * u(it.col());
                    }
                    const double w = op.outer[static_cast<std::size_t>(r)] >= 0 ? 1.0 : omega;
                    const double gs = acc / diag;
                    const double v = std::max(u(r) + w * (gs - u(r)), h(r));
                    change = std::max(change, std::abs(v - u(r)));
                    scale = std::max(scale, std::abs(v));
                    u(r) = v;
                }
                if (change <= options.psor_tolerance * scale) break;
            }
        } else {
            if (options.psor) system.factor(S);  // no obstacle: PSOR reduces to the linear solve
            u = system.solve(rhs);
        }

        std::fill(contact.begin(), contact.end(), 0);
        if (has_obstacle) {
            for (std::size_t i = 0; i < size; ++i) {
                const auto r = static_cast<Eigen::Index>(i);
                if (!penalty_mode && detail::touches(u(r), h(r))) {
                    u(r) = h(r);
                    contact[i] = 1;
                } else if (penalty_mode) {
                    contact[i] = detail::touches(u(r), h(r));
                }
            }
        }
        sol.max_inner_iterations = std::max(sol.max_inner_iterations, inner);

        // residual of min(u - h, -D_t u - L u - F) on PDE rows
        const Eigen::VectorXd Lu = Lb * u;
        const Eigen::VectorXd Lnext = Lb * next;
        for (std::size_t i = 0; i < size; ++i) {
            if (op.outer[i] >= 0) continue;
            const auto r = static_cast<Eigen::Index>(i);
            const double pde = dt > 0.0 ? (u(r) - next(r)) / dt - theta * Lu(r) - (1.0 - theta) * Lnext(r) - f(r) : 0.0;
            const double c = has_obstacle ? std::min(u(r) - h(r), pde) : pde;
            const double cs = has_obstacle ? std::min(u(r) - h(r), dt * pde) : dt * pde;
            sol.complementarity = std::max(sol.complementarity, std::abs(c));
            sol.complementarity_step = std::max(sol.complementarity_step, std::abs(cs));
        }
        sol.face_residual[k] = detail::face_residual(grid, op.outer, as_vector(u));
        keep(k, contact);
    }

    // stored backward; flip to increasing steps
    std::reverse(steps_kept.begin(), steps_kept.end());
    std::reverse(levels.begin(), levels.end());
    std::reverse(contacts.begin(), contacts.end());
    sol.retained_steps = std::move(steps_kept);
    sol.u = std::move(levels);
    sol.contact = std::move(contacts);
    return sol;
}

struct FaceResidualReport {
    double max = 0.0;
    std::size_t worst_step = 0;
    std::vector<double> per_step;
};

[[nodiscard]] inline FaceResidualReport boundary_residual(const GridSolution& sol) {
    FaceResidualReport r;
    r.per_step = sol.face_residual;
    for (std::size_t k = 0; k < r.per_step.size(); ++k) {
        if (r.per_step[k] > r.max) {
            r.max = r.per_step[k];
            r.worst_step = k;
        }
    }
    return r;
}

struct ProbePoint {
    double t = 0.0;
    std::vector<double> x;  // ranked, non-increasing
};

struct ProbeValue {
    ProbePoint point;
    std::optional<double> u;  // empty outside the truncated domain
};

/// Multilinear interpolation in space, linear between retained time levels.
[[nodiscard]] inline std::optional<double> interpolate(const GridSolution& sol, double t, std::span<const double> x) {
    const auto& grid = sol.grid;
    const std::size_t n = grid.n();
    if (x.size() != n) throw ValidationError("probe: point has the wrong dimension");
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if (x[i] < x[i + 1]) throw ValidationError("probe: ranked coordinates must be non-increasing");
    }
    if (!(t >= grid.t0() && t <= grid.horizon())) return std::nullopt;
    const auto c = gap_coordinates(x);
    if (!grid.contains(c)) return std::nullopt;

    std::vector<std::size_t> cell(n);
    std::vector<double> frac(n);
    for (std::size_t a = 0; a < n; ++a) {
        const auto& ax = grid.axis(a);
        const double pos = (c[a] - ax.lo) / ax.step();
        std::size_t i = static_cast<std::size_t>(std::floor(pos));
        i = std::min(i, ax.nodes - 2);
        cell[a] = i;
        frac[a] = std::clamp(pos - static_cast<double>(i), 0.0, 1.0);
    }
    auto spatial = [&](const std::vector<double>& level) {
        double v = 0.0;
        for (std::size_t corner = 0; corner < (std::size_t{1} << n); ++corner) {
            double w = 1.0;
            std::size_t node = 0;
            for (std::size_t a = 0; a < n; ++a) {
                const bool hi = (corner >> a) & 1U;
                w *= hi ? frac[a] : 1.0 - frac[a];
                node += (cell[a] + (hi ? 1 : 0)) * grid.stride(a);
            }
            if (w != 0.0) v += w * level[node];
        }
        return v;
    };
    const auto& steps = sol.retained_steps;
    std::size_t hi = 0;
    while (hi + 1 < steps.size() && grid.t(steps[hi]) < t) ++hi;
    if (hi == 0 || grid.t(steps[hi]) == t) return spatial(sol.u[hi]);
    const double ta = grid.t(steps[hi - 1]), tb = grid.t(steps[hi]);
    const double w = (t - ta) / (tb - ta);
    return (1.0 - w) * spatial(sol.u[hi - 1]) + w * spatial(sol.u[hi]);
}

[[nodiscard]] inline std::vector<ProbeValue> probe(const GridSolution& sol, const std::vector<ProbePoint>& points) {
    std::vector<ProbeValue> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back({p, interpolate(sol, p.t, p.x)});
    return out;
}

/// t, grid coordinates (x | s,gamma | s,gamma_1,gamma_2), u, contact; one
/// block per retained time level.
inline void write_grid_csv(std::ostream& out, const GridSolution& sol) {
    const auto& grid = sol.grid;
    std::vector<std::string> header{"t"};
    if (grid.n() == 1) header.push_back("x");
    else header.push_back("s");
    if (grid.n() == 2) header.push_back("gamma");
    if (grid.n() == 3) {
        header.push_back("gamma_1");
        header.push_back("gamma_2");
    }
    header.push_back("u");
    header.push_back("contact");
    write_header(out, header);
    for (std::size_t l = 0; l < sol.retained_steps.size(); ++l) {
        const double t = grid.t(sol.retained_steps[l]);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            CsvRow r;
            r << t;
            for (double c : grid.coords(i)) r << c;
            r << sol.u[l][i] << static_cast<int>(sol.contact[l][i]);
            r.write(out);
        }
    }
}

[[nodiscard]] inline nlohmann::json grid_summary(const GridSolution& sol, const std::vector<ProbeValue>& probes) {
    nlohmann::json j;
    j["n"] = sol.grid.n();
    std::vector<std::size_t> nodes;
    for (std::size_t a = 0; a < sol.grid.n(); ++a) nodes.push_back(sol.grid.axis(a).nodes);
    j["nodes"] = nodes;
    j["time_steps"] = sol.grid.time_steps();
    j["mode"] = sol.mode == ObstacleMode::projected ? "projected" : "penalized";
    if (sol.mode == ObstacleMode::penalized) j["penalty"] = sol.penalty;
    j["face_residual_max"] = boundary_residual(sol).max;
    j["complementarity"] = sol.complementarity;
    j["complementarity_step"] = sol.complementarity_step;
    nlohmann::json list = nlohmann::json::array();
    for (const auto& p : probes) {
        nlohmann::json e{{"t", p.point.t}, {"x", p.point.x}};
        e["u"] = p.u ? nlohmann::json(*p.u) : nlohmann::json(nullptr);
        e["inside"] = p.u.has_value();
        list.push_back(e);
    }
    j["probes"] = list;
    return j;
}

}  // namespace rankbsde
