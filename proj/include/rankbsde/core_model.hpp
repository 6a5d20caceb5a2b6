#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rankbsde/error.hpp"

namespace rankbsde {

/// Deterministic short rate r(t). Only the constant curve is supported.
struct RateCurve {
    double value = 0.0;

    [[nodiscard]] double operator()(double /*t*/) const noexcept { return value; }
    [[nodiscard]] double sup_abs() const noexcept { return std::abs(value); }
    /// Integral of r over [t0, t1].
    [[nodiscard]] double integral(double t0, double t1) const noexcept { return value * (t1 - t0); }
};

/// True iff a_{i+1} >= (a_i + a_{i+2}) / 2 for every consecutive triple.
[[nodiscard]] inline bool check_concavity(std::span<const double> sigma_sq) {
    for (std::size_t i = 0; i + 2 < sigma_sq.size(); ++i) {
        if (2.0 * sigma_sq[i + 1] < sigma_sq[i] + sigma_sq[i + 2]) return false;
    }
    return true;
}

/// Rank-indexed drifts and volatilities: the particle currently ranked j
/// (largest first) moves with drift delta[j] and volatility sigma[j].
class CoefficientProfile {
public:
    CoefficientProfile(std::vector<double> delta, std::vector<double> sigma, RateCurve rate = {})
        : delta_(std::move(delta)), sigma_(std::move(sigma)), rate_(rate) {
        if (delta_.empty()) throw ValidationError("profile: n must be at least 1");
        if (delta_.size() != sigma_.size()) {
            throw ValidationError("profile: delta has " + std::to_string(delta_.size()) +
                                  " entries but sigma has " + std::to_string(sigma_.size()));
        }
        for (std::size_t j = 0; j < sigma_.size(); ++j) {
            if (!std::isfinite(delta_[j])) throw ValidationError("profile: delta must be finite");
            if (!(sigma_[j] > 0.0) || !std::isfinite(sigma_[j])) {
                throw ValidationError("profile: sigma[" + std::to_string(j) + "] must be positive");
            }
        }
        if (!std::isfinite(rate_.value)) throw ValidationError("profile: rate must be finite");
        std::vector<double> sq(sigma_.size());
        std::transform(sigma_.begin(), sigma_.end(), sq.begin(), [](double s) { return s * s; });
        concave_ = check_concavity(sq);
    }

    [[nodiscard]] std::size_t n() const noexcept { return delta_.size(); }
    [[nodiscard]] const std::vector<double>& delta() const noexcept { return delta_; }
    [[nodiscard]] const std::vector<double>& sigma() const noexcept { return sigma_; }
    [[nodiscard]] const RateCurve& rate() const noexcept { return rate_; }
    [[nodiscard]] bool concave() const noexcept { return concave_; }
    [[nodiscard]] double max_sigma() const { return *std::max_element(sigma_.begin(), sigma_.end()); }
    [[nodiscard]] double max_abs_delta() const {
        double m = 0.0;
        for (double d : delta_) m = std::max(m, std::abs(d));
        return m;
    }

private:
    std::vector<double> delta_;
    std::vector<double> sigma_;
    RateCurve rate_;
    bool concave_ = true;
};

/// Named-to-ranked bookkeeping for one configuration.
///
/// rank_of[i] is the rank position (0 = largest) of named particle i and
/// named_at[j] is its inverse. Ties go to the lowest named index, so the
/// assignment is always a bijection.
struct RankView {
    std::vector<double> ranked;
    std::vector<std::size_t> rank_of;
    std::vector<std::size_t> named_at;
    std::vector<double> gaps;

    [[nodiscard]] std::size_t n() const noexcept { return ranked.size(); }
};

/// Fills `order` with named indices sorted by value descending, index ascending.
inline void rank_order(std::span<const double> x, std::span<std::size_t> order) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return x[a] > x[b]; });
}

[[nodiscard]] inline RankView rank_state(std::span<const double> x) {
    for (double v : x) {
        if (!std::isfinite(v)) throw ValidationError("rank_state: input must be finite");
    }
    const std::size_t n = x.size();
    RankView view;
    view.named_at.resize(n);
    rank_order(x, view.named_at);
    view.rank_of.resize(n);
    view.ranked.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        view.rank_of[view.named_at[j]] = j;
        view.ranked[j] = x[view.named_at[j]];
    }
    view.gaps.resize(n > 0 ? n - 1 : 0);
    for (std::size_t j = 0; j + 1 < n; ++j) view.gaps[j] = view.ranked[j] - view.ranked[j + 1];
    return view;
}

/// Recovers the named vector from ranked values.
[[nodiscard]] inline std::vector<double> unrank(std::span<const double> ranked, const RankView& view) {
    if (ranked.size() != view.n()) throw ValidationError("unrank: dimension mismatch");
    std::vector<double> named(ranked.size());
    for (std::size_t j = 0; j < ranked.size(); ++j) named[view.named_at[j]] = ranked[j];
    return named;
}

/// Shares held in the j-th ranked asset: zbar[j] = z[named_at[j]].
[[nodiscard]] inline std::vector<double> named_to_ranked_z(std::span<const double> z, const RankView& view) {
    if (z.size() != view.n()) {
        throw ValidationError("named_to_ranked_z: z has " + std::to_string(z.size()) +
                              " entries, view has " + std::to_string(view.n()));
    }
    std::vector<double> zbar(z.size());
    for (std::size_t j = 0; j < z.size(); ++j) zbar[j] = z[view.named_at[j]];
    return zbar;
}

[[nodiscard]] inline std::vector<double> ranked_to_named_z(std::span<const double> zbar, const RankView& view) {
    if (zbar.size() != view.n()) throw ValidationError("ranked_to_named_z: dimension mismatch");
    return unrank(zbar, view);
}

/// A point of the closed ordered domain: coordinates non-increasing with at
/// most one adjacent equality (interior, or on exactly one face).
class SimplexPoint {
public:
    explicit SimplexPoint(std::vector<double> coords) : coords_(std::move(coords)) {
        if (coords_.empty()) throw ValidationError("simplex point: empty coordinates");
        for (double v : coords_) {
            if (!std::isfinite(v)) throw ValidationError("simplex point: coordinates must be finite");
        }
        for (std::size_t i = 0; i + 1 < coords_.size(); ++i) {
            if (coords_[i] < coords_[i + 1]) {
                throw ValidationError("simplex point: coordinates must be non-increasing");
            }
            if (coords_[i] == coords_[i + 1]) {
                if (face_) {
                    throw ValidationError("simplex point: lies on two faces (x_" + std::to_string(*face_ + 1) +
                                          " = x_" + std::to_string(*face_ + 2) + " and x_" +
                                          std::to_string(i + 1) + " = x_" + std::to_string(i + 2) + ")");
                }
                face_ = i;
            }
        }
    }

    [[nodiscard]] const std::vector<double>& coords() const noexcept { return coords_; }
    [[nodiscard]] std::size_t n() const noexcept { return coords_.size(); }
    [[nodiscard]] bool interior() const noexcept { return !face_.has_value(); }
    /// Zero-based i such that x_i = x_{i+1}, when on a face.
    [[nodiscard]] std::optional<std::size_t> face() const noexcept { return face_; }

private:
    std::vector<double> coords_;
    std::optional<std::size_t> face_;
};

[[nodiscard]] inline double euclidean_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace rankbsde
