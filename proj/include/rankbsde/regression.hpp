#pragma once

// Least-squares conditional expectations for the backward solvers.
//
// Candidate columns, in order: intercept, monomials of the standardized
// ranked coordinates by increasing degree, then the standardized obstacle
// and payoff features. Columns are admitted by Gram-Schmidt against the ones
// already kept. Constant or duplicated columns are dropped silently; a
// rejected monomial that does vary means the design is rank-deficient at
// that degree, so the degree is lowered and the fit restarted.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rankbsde/error.hpp"

namespace rankbsde {

/// Regression family: polynomials in ranked coordinates up to `degree`,
/// plus obstacle/payoff features when the solver supplies them.
struct RegressionBasis {
    unsigned degree = 2;
};

struct BasisEvent {
    std::size_t step = 0;
    unsigned requested_degree = 0;
    unsigned used_degree = 0;
    std::string reason;
};

/// Exponent vectors with 1 <= |e| <= degree in n variables, by degree, then
/// lexicographically descending within a degree.
[[nodiscard]] inline std::vector<std::vector<unsigned>> monomial_exponents(std::size_t n, unsigned degree) {
    std::vector<std::vector<unsigned>> out;
    std::vector<unsigned> e(n, 0);
    for (unsigned d = 1; d <= degree; ++d) {
        // enumerate compositions of d into n parts
        auto recurse = [&](auto&& self, std::size_t pos, unsigned left) -> void {
            if (pos + 1 == n) {
                e[pos] = left;
                out.push_back(e);
                return;
            }
            for (unsigned v = left + 1; v-- > 0;) {
                e[pos] = v;
                self(self, pos + 1, left - v);
            }
        };
        if (n > 0) recurse(recurse, 0, d);
    }
    return out;
}

/// A fitted design on one time step. Rows are paths; `fit_rows` selects the
/// rows the coefficients are estimated from (all rows when empty), and
/// predictions are produced for every row.
class LeastSquaresBasis {
public:
    /// raw: rows x (n_coords + n_aug) with ranked coordinates first.
    LeastSquaresBasis(const Eigen::MatrixXd& raw, std::size_t n_coords, unsigned degree,
                      std::vector<std::size_t> fit_rows = {})
        : n_coords_(n_coords), requested_degree_(degree), fit_rows_(std::move(fit_rows)) {
        if (fit_rows_.empty()) {
            fit_rows_.resize(static_cast<std::size_t>(raw.rows()));
            for (std::size_t i = 0; i < fit_rows_.size(); ++i) fit_rows_[i] = i;
        }
        if (fit_rows_.empty()) throw ValidationError("regression: no rows to fit");
        standardize(raw);
        for (unsigned d = degree + 1; d-- > 0;) {
            if (select(d)) {
                used_degree_ = d;
                break;
            }
        }
        compute_condition();
    }

    /// Least-squares predictions at every row, one column per target.
    /// targets has one row per raw row; only fit rows are read.
    [[nodiscard]] Eigen::MatrixXd fit_predict(const Eigen::MatrixXd& targets) const {
        Eigen::MatrixXd gathered(static_cast<Eigen::Index>(fit_rows_.size()), targets.cols());
        for (std::size_t i = 0; i < fit_rows_.size(); ++i) {
            gathered.row(static_cast<Eigen::Index>(i)) = targets.row(static_cast<Eigen::Index>(fit_rows_[i]));
        }
        const Eigen::MatrixXd qty = q_.transpose() * gathered;
        const Eigen::MatrixXd coef = r_.triangularView<Eigen::Upper>().solve(qty);
        return design_ * coef;
    }

    [[nodiscard]] double condition() const noexcept { return condition_; }
    [[nodiscard]] unsigned requested_degree() const noexcept { return requested_degree_; }
    [[nodiscard]] unsigned used_degree() const noexcept { return used_degree_; }
    [[nodiscard]] std::size_t columns() const noexcept { return columns_.size(); }
    /// Columns dropped as constant or duplicate at the degree finally used.
    [[nodiscard]] std::size_t deduplicated() const noexcept { return deduplicated_; }
    [[nodiscard]] bool reduced() const noexcept { return used_degree_ < requested_degree_; }

private:
    struct Column {
        std::vector<unsigned> exponents;  // empty for the intercept
        std::optional<std::size_t> feature;  // augmented feature index
    };

    static constexpr double kRejectTol = 1e-9;

    void standardize(const Eigen::MatrixXd& raw) {
        raw_ = raw;
        const auto cols = raw.cols();
        varies_.assign(static_cast<std::size_t>(cols), false);
        for (Eigen::Index c = 0; c < cols; ++c) {
            double mean = 0.0, lo = raw(static_cast<Eigen::Index>(fit_rows_[0]), c), hi = lo;
            for (std::size_t i : fit_rows_) {
                const double v = raw(static_cast<Eigen::Index>(i), c);
                mean += v;
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            mean /= static_cast<double>(fit_rows_.size());
            double var = 0.0;
            for (std::size_t i : fit_rows_) {
                const double d = raw(static_cast<Eigen::Index>(i), c) - mean;
                var += d * d;
            }
            const double sd = std::sqrt(var / static_cast<double>(fit_rows_.size()));
            const bool varies = hi > lo && sd > 0.0;
            varies_[static_cast<std::size_t>(c)] = varies;
            for (Eigen::Index i = 0; i < raw.rows(); ++i) {
                raw_(i, c) = varies ? (raw(i, c) - mean) / sd : 0.0;
            }
        }
    }

    [[nodiscard]] Eigen::VectorXd column_values(const Column& col) const {
        const Eigen::Index rows = raw_.rows();
        Eigen::VectorXd v = Eigen::VectorXd::Ones(rows);
        if (col.feature) return raw_.col(static_cast<Eigen::Index>(n_coords_ + *col.feature));
        for (std::size_t j = 0; j < col.exponents.size(); ++j) {
            for (unsigned p = 0; p < col.exponents[j]; ++p) v.array() *= raw_.col(static_cast<Eigen::Index>(j)).array();
        }
        return v;
    }

    [[nodiscard]] bool column_varies(const Column& col) const {
        if (col.feature) return varies_[n_coords_ + *col.feature];
        for (std::size_t j = 0; j < col.exponents.size(); ++j) {
            if (col.exponents[j] > 0 && !varies_[j]) return false;
        }
        return true;
    }

    // Returns false when a varying monomial is rejected (degree too high).
    bool select(unsigned degree) {
        std::vector<Column> candidates;
        candidates.push_back({});
        for (auto& e : monomial_exponents(n_coords_, degree)) candidates.push_back({e, std::nullopt});
        const std::size_t n_aug = static_cast<std::size_t>(raw_.cols()) - n_coords_;
        for (std::size_t a = 0; a < n_aug; ++a) candidates.push_back({{}, a});

        const Eigen::Index mf = static_cast<Eigen::Index>(fit_rows_.size());
        std::vector<Eigen::VectorXd> q;
        std::vector<Eigen::VectorXd> rcols;
        columns_.clear();
        deduplicated_ = 0;
        for (const auto& cand : candidates) {
            const bool is_monomial = !cand.feature && !cand.exponents.empty();
            if (!column_varies(cand) && (cand.feature || is_monomial)) {
                ++deduplicated_;
                continue;
            }
            const Eigen::VectorXd all = column_values(cand);
            Eigen::VectorXd c(mf);
            for (Eigen::Index i = 0; i < mf; ++i) c(i) = all(static_cast<Eigen::Index>(fit_rows_[static_cast<std::size_t>(i)]));
            const double norm0 = c.norm();
            Eigen::VectorXd coeffs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(q.size()) + 1);
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t j = 0; j < q.size(); ++j) {
                    const double proj = q[j].dot(c);
                    c.noalias() -= proj * q[j];
                    coeffs(static_cast<Eigen::Index>(j)) += proj;
                }
            }
            const double norm = c.norm();
            if (!(norm > kRejectTol * norm0) || norm0 == 0.0) {
                if (is_monomial) return false;
                ++deduplicated_;
                continue;
            }
            coeffs(static_cast<Eigen::Index>(q.size())) = norm;
            q.push_back(c / norm);
            rcols.push_back(coeffs);
            columns_.push_back(cand);
        }

        const Eigen::Index r = static_cast<Eigen::Index>(columns_.size());
        q_.resize(mf, r);
        r_ = Eigen::MatrixXd::Zero(r, r);
        design_.resize(raw_.rows(), r);
        for (Eigen::Index j = 0; j < r; ++j) {
            q_.col(j) = q[static_cast<std::size_t>(j)];
            r_.col(j).head(j + 1) = rcols[static_cast<std::size_t>(j)];
            design_.col(j) = column_values(columns_[static_cast<std::size_t>(j)]);
        }
        return true;
    }

    void compute_condition() {
        // cond of the column-normalized design = cond(R D^{-1}), D = column norms
        Eigen::MatrixXd scaled = r_;
        for (Eigen::Index j = 0; j < scaled.cols(); ++j) scaled.col(j) /= r_.col(j).norm();
        const Eigen::JacobiSVD<Eigen::MatrixXd> svd(scaled);
        const auto& s = svd.singularValues();
        condition_ = s(s.size() - 1) > 0.0 ? s(0) / s(s.size() - 1) : std::numeric_limits<double>::infinity();
    }

    std::size_t n_coords_;
    unsigned requested_degree_;
    unsigned used_degree_ = 0;
    std::vector<std::size_t> fit_rows_;
    Eigen::MatrixXd raw_;
    std::vector<bool> varies_;
    std::vector<Column> columns_;
    std::size_t deduplicated_ = 0;
    Eigen::MatrixXd q_;
    Eigen::MatrixXd r_;
    Eigen::MatrixXd design_;
    double condition_ = 1.0;
};

}  // namespace rankbsde
