#pragma once

// Closed-form references used as test oracles. Nothing here calls library code.

#include <cmath>
#include <cstddef>

namespace oracle {

/// X(T) for dX = mu dt + s dW, X(0) = x0.
inline double abm_mean(double x0, double mu, double T) { return x0 + mu * T; }
inline double abm_variance(double s, double T) { return s * s * T; }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Black-Scholes European prices without dividends.
inline double bs_call(double S, double K, double r, double sigma, double T) {
    if (T <= 0.0) return std::fmax(S - K, 0.0);
    const double sd = sigma * std::sqrt(T);
    const double d1 = (std::log(S / K) + (r + 0.5 * sigma * sigma) * T) / sd;
    return S * normal_cdf(d1) - K * std::exp(-r * T) * normal_cdf(d1 - sd);
}

inline double bs_put(double S, double K, double r, double sigma, double T) {
    return bs_call(S, K, r, sigma, T) - S + K * std::exp(-r * T);
}

/// y' = r y backward from y(T) = 1: y(t) = exp(-r (T - t)).
inline double discount_factor(double r, double tau) { return std::exp(-r * tau); }

/// Backward-Euler (implicit) discount with N steps: (1 + r dt)^{-N}.
inline double implicit_discount(double r, double tau, std::size_t steps) {
    const double dt = tau / static_cast<double>(steps);
    return std::pow(1.0 + r * dt, -static_cast<double>(steps));
}

/// Upper bound on E[sup_t |X(t)|^2] / (1 + |x|^2) for a drift bounded by
/// d_max and volatility bounded by s_max per coordinate, n coordinates,
/// horizon T: (a+b+c)^2 <= 3(a^2+b^2+c^2) plus Doob's L2 inequality.
inline double second_moment_constant(std::size_t n, double d_max, double s_max, double T) {
    const double nn = static_cast<double>(n);
    return std::fmax(3.0, 3.0 * nn * d_max * d_max * T * T + 12.0 * nn * s_max * s_max * T);
}

}  // namespace oracle
