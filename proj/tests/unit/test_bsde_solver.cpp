#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "oracles/analytic.hpp"
#include "oracles/binomial.hpp"
#include "rankbsde/bsde_solver.hpp"

using namespace rankbsde;

namespace {

ProblemSpec american_put_spec() {
    return ProblemSpec(GeneratorSpec::pricing({0.05}, {0.2}, 0.05), TerminalSpec::of(TerminalKind::put_exp, 100.0),
                       ObstacleSpec::from_payoff(), 1.0);
}

CoefficientProfile put_profile() { return CoefficientProfile({0.05 - 0.5 * 0.04}, {0.2}, RateCurve{0.05}); }

SolverOptions put_options() {
    SolverOptions o;
    o.basis.degree = 4;
    return o;
}

}  // namespace

TEST(Regression, MonomialEnumeration) {
    EXPECT_EQ(monomial_exponents(1, 3).size(), 3u);
    EXPECT_EQ(monomial_exponents(2, 2).size(), 5u);
    EXPECT_EQ(monomial_exponents(3, 2).size(), 9u);
    const auto e = monomial_exponents(2, 2);
    EXPECT_EQ(e[0], (std::vector<unsigned>{1, 0}));
    EXPECT_EQ(e[2], (std::vector<unsigned>{2, 0}));
}

TEST(Regression, ReproducesPolynomialExactly) {
    Eigen::MatrixXd raw(50, 1);
    Eigen::MatrixXd y(50, 1);
    for (int i = 0; i < 50; ++i) {
        raw(i, 0) = 0.1 * i - 2.0;
        y(i, 0) = 1.0 - 2.0 * raw(i, 0) + 0.5 * raw(i, 0) * raw(i, 0);
    }
    const LeastSquaresBasis basis(raw, 1, 2);
    EXPECT_EQ(basis.columns(), 3u);
    EXPECT_FALSE(basis.reduced());
    const auto fit = basis.fit_predict(y);
    for (int i = 0; i < 50; ++i) EXPECT_NEAR(fit(i, 0), y(i, 0), 1e-10);
    EXPECT_GE(basis.condition(), 1.0);
}

TEST(Regression, DuplicatesAreDroppedWithoutReduction) {
    Eigen::MatrixXd raw(30, 3);  // x, h = x, g = constant
    for (int i = 0; i < 30; ++i) {
        raw(i, 0) = std::sin(i);
        raw(i, 1) = raw(i, 0);
        raw(i, 2) = 4.0;
    }
    const LeastSquaresBasis basis(raw, 1, 2);
    EXPECT_EQ(basis.columns(), 3u);
    EXPECT_EQ(basis.deduplicated(), 2u);
    EXPECT_FALSE(basis.reduced());
}

TEST(Regression, TooFewRowsReducesDegree) {
    Eigen::MatrixXd raw(4, 2);
    raw << 1.0, 0.5, 2.0, 0.1, 3.5, -1.0, 0.2, 0.3;
    const LeastSquaresBasis basis(raw, 2, 2);
    EXPECT_TRUE(basis.reduced());
    EXPECT_EQ(basis.used_degree(), 1u);
    EXPECT_EQ(basis.columns(), 3u);
}

TEST(Regression, ConstantStateGivesMean) {
    Eigen::MatrixXd raw = Eigen::MatrixXd::Constant(10, 2, 3.0);
    Eigen::MatrixXd y(10, 1);
    for (int i = 0; i < 10; ++i) y(i, 0) = i;
    const LeastSquaresBasis basis(raw, 2, 3);
    EXPECT_EQ(basis.columns(), 1u);
    EXPECT_FALSE(basis.reduced());
    EXPECT_NEAR(basis.fit_predict(y)(0, 0), 4.5, 1e-14);
}

TEST(SolveBsde, DriftOfSingleParticle) {
    const CoefficientProfile profile({0.5}, {1.0});
    const auto bundle = simulate(profile, SimplexPoint({0.0}), TimeGrid(0, 1, 20), 100000, 21);
    const ProblemSpec spec(GeneratorSpec::zero(), TerminalSpec::coordinate(1), ObstacleSpec::none());
    const auto sol = solve_bsde(bundle, spec);
    EXPECT_LT(std::abs(sol.u0 - 0.5), 3.0 * sol.standard_error);
    EXPECT_GT(sol.standard_error, 0.0);
}

TEST(SolveBsde, DiscountingOde) {
    const CoefficientProfile profile({0.0}, {1.0});
    const auto bundle = simulate(profile, SimplexPoint({0.0}), TimeGrid(0, 1, 50), 1000, 22);
    const ProblemSpec spec(GeneratorSpec::discount(0.1), TerminalSpec::constant(1.0), ObstacleSpec::none());
    const auto sol = solve_bsde(bundle, spec);
    EXPECT_LT(std::abs(sol.u0 - oracle::discount_factor(0.1, 1.0)), 1e-2);
    EXPECT_NEAR(sol.u0, oracle::implicit_discount(0.1, 1.0, 50), 1e-14);
    EXPECT_NEAR(sol.standard_error, 0.0, 1e-14);
}

TEST(SolveBsde, ConstantTerminalIsExact) {
    const CoefficientProfile profile({0.1, -0.1}, {1.0, 1.0});
    const auto bundle = simulate(profile, SimplexPoint({1.0, 0.0}), TimeGrid(0, 1, 10), 500, 23);
    const ProblemSpec spec(GeneratorSpec::zero(), TerminalSpec::constant(7.0), ObstacleSpec::none());
    const auto sol = solve_bsde(bundle, spec);
    for (double v : sol.raw_y()) EXPECT_EQ(v, 7.0);
    for (double v : sol.raw_z()) EXPECT_EQ(v, 0.0);
    for (double v : sol.raw_k()) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(sol.u0, 7.0);
}

TEST(SolveBsde, RejectsObstacleAndLargeSteps) {
    const CoefficientProfile profile({0.0}, {1.0});
    const auto bundle = simulate(profile, SimplexPoint({0.0}), TimeGrid(0, 1, 2), 20, 24);
    EXPECT_THROW((void)solve_bsde(bundle, ProblemSpec(GeneratorSpec::zero(), TerminalSpec::constant(1.0),
                                                      ObstacleSpec::constant(0.0))),
                 ValidationError);
    EXPECT_THROW((void)solve_bsde(bundle, ProblemSpec(GeneratorSpec::discount(3.0), TerminalSpec::constant(1.0),
                                                      ObstacleSpec::none())),
                 ValidationError);
}

TEST(SolveBsde, LinearZDependence) {
    // F = a z with g(x) = x: Y_t = x_t + (delta + a sigma)(T - t) for n = 1.
    const double a = 0.3, delta = 0.2, sigma = 1.5;
    const CoefficientProfile profile({delta}, {sigma});
    GeneratorSpec f;
    f.kind = GeneratorKind::affine;
    f.z_coef = {a};
    const auto bundle = simulate(profile, SimplexPoint({1.0}), TimeGrid(0, 1, 20), 50000, 25);
    const auto sol = solve_bsde(bundle, ProblemSpec(f, TerminalSpec::coordinate(1), ObstacleSpec::none()));
    EXPECT_LT(std::abs(sol.u0 - (1.0 + delta + a * sigma)), 3.0 * sol.standard_error + 1e-3);
    double zmean = 0.0;
    for (double v : sol.raw_z()) zmean += v;
    zmean /= static_cast<double>(sol.raw_z().size());
    EXPECT_NEAR(zmean, sigma, 0.03);
}

TEST(SolveBsde, ZeroHorizonReturnsPayoff) {
    const CoefficientProfile profile({0.3, 0.0}, {1.0, 1.0});
    const SimplexPoint x0({2.0, 0.5});
    const auto bundle = simulate(profile, x0, TimeGrid(1.0, 1.0, 1), 30, 26);
    const ProblemSpec spec(GeneratorSpec::discount(0.05), TerminalSpec::of(TerminalKind::call, 1.0),
                           ObstacleSpec::none());
    EXPECT_EQ(solve_bsde(bundle, spec).u0, 1.0);
}

TEST(SolveReflected, SentinelMatchesPlainBitForBit) {
    const CoefficientProfile profile({0.2, -0.2}, {1.0, 1.2});
    const auto bundle = simulate(profile, SimplexPoint({0.5, 0.0}), TimeGrid(0, 1, 16), 2000, 27);
    const ProblemSpec spec(GeneratorSpec::discount(0.1), TerminalSpec::of(TerminalKind::put, 0.5, 2),
                           ObstacleSpec::none());
    const auto plain = solve_bsde(bundle, spec);
    const auto refl = solve_reflected(bundle, spec);
    EXPECT_EQ(plain.raw_y(), refl.raw_y());
    EXPECT_EQ(plain.raw_z(), refl.raw_z());
    for (double v : refl.raw_k()) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(plain.u0, refl.u0);
    EXPECT_EQ(plain.standard_error, refl.standard_error);
}

TEST(SolveReflected, ObstacleEqualToConstantTerminal) {
    const CoefficientProfile profile({0.0}, {1.0});
    const auto bundle = simulate(profile, SimplexPoint({0.0}), TimeGrid(0, 1, 10), 200, 28);
    const ProblemSpec spec(GeneratorSpec::zero(), TerminalSpec::constant(5.0), ObstacleSpec::constant(5.0));
    const auto sol = solve_reflected(bundle, spec);
    for (double v : sol.raw_y()) EXPECT_EQ(v, 5.0);
    for (double v : sol.raw_k()) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(sol.skorokhod_sum, 0.0);
    EXPECT_EQ(sol.skorokhod_left, 0.0);
}

TEST(SolveReflected, AmericanPutAgainstBinomialTree) {
    const auto bundle = simulate(put_profile(), SimplexPoint({std::log(100.0)}), TimeGrid(0, 1, 50), 100000, 29);
    const auto sol = solve_reflected(bundle, american_put_spec(), put_options());
    const double tree = oracle::crr(100, 100, 0.05, 0.2, 1.0, 2000, true, true);
    EXPECT_LT(std::abs(sol.u0 / tree - 1.0), 0.01) << "u0 " << sol.u0 << " tree " << tree;
    EXPECT_LE(sol.max_violation, 0.0);
    EXPECT_TRUE(sol.k_nondecreasing);
    EXPECT_EQ(sol.skorokhod_left, 0.0);
    for (std::size_t p = 0; p < 100; ++p) {
        EXPECT_EQ(sol.k(p, 0), 0.0);
        EXPECT_EQ(sol.y(p, 50), american_put_spec().terminal(bundle.ranked_state(p, 50)));
    }
}

TEST(SolveReflected, InvariantsOnTwoParticlePut) {
    const CoefficientProfile profile({0.1, -0.1}, {0.3, 0.25});
    const auto bundle = simulate(profile, SimplexPoint({0.1, 0.0}), TimeGrid(0, 1, 32), 4000, 30);
    const ProblemSpec spec(GeneratorSpec::discount(0.05), TerminalSpec::of(TerminalKind::put_exp, 1.1, 2),
                           ObstacleSpec::from_payoff());
    const auto sol = solve_reflected(bundle, spec);
    std::vector<double> x(2);
    for (std::size_t p = 0; p < sol.n_paths(); ++p) {
        for (std::size_t k = 0; k <= sol.steps(); ++k) {
            bundle.ranked_into(p, k, x);
            if (k < sol.steps()) EXPECT_GE(sol.y(p, k), spec.obstacle(bundle.grid().t(k), x));
            if (k > 0) EXPECT_GE(sol.k(p, k), sol.k(p, k - 1));
        }
        EXPECT_EQ(sol.k(p, 0), 0.0);
    }
    EXPECT_GT(sol.skorokhod_sum, -1e-12);
}

TEST(SolveReflected, ComparisonInObstacle) {
    const auto bundle = simulate(put_profile(), SimplexPoint({std::log(100.0)}), TimeGrid(0, 1, 25), 20000, 31);
    auto low = american_put_spec();
    auto high = american_put_spec();
    low.obstacle.offset = -2.0;
    const auto a = solve_reflected(bundle, low);
    const auto b = solve_reflected(bundle, high);
    EXPECT_LE(a.u0, b.u0 + std::hypot(a.standard_error, b.standard_error));
}

TEST(SolveReflected, SkorokhodSumShrinksWithStep) {
    double last = std::numeric_limits<double>::infinity();
    for (std::size_t steps : {16u, 32u, 64u}) {
        const auto bundle = simulate(put_profile(), SimplexPoint({std::log(100.0)}), TimeGrid(0, 1, steps), 20000, 32);
        const auto sol = solve_reflected(bundle, american_put_spec());
        EXPECT_GE(sol.skorokhod_sum, 0.0);
        EXPECT_LT(sol.skorokhod_sum, last) << steps;
        last = sol.skorokhod_sum;
    }
}

TEST(SolvePenalized, ZeroPenaltyIsPlain) {
    const auto bundle = simulate(put_profile(), SimplexPoint({std::log(100.0)}), TimeGrid(0, 1, 20), 5000, 33);
    auto spec = american_put_spec();
    spec.obstacle = ObstacleSpec::none();
    const auto plain = solve_bsde(bundle, spec);
    const auto pen = solve_penalized(bundle, spec, 0.0);
    EXPECT_EQ(plain.raw_y(), pen.raw_y());
    EXPECT_EQ(plain.u0, pen.u0);
    const auto pen_obstacle = solve_penalized(bundle, american_put_spec(), 0.0);
    EXPECT_EQ(plain.raw_y(), pen_obstacle.raw_y());
}

TEST(SolvePenalized, MonotoneInPenaltyAndCloseToReflected) {
    const auto bundle = simulate(put_profile(), SimplexPoint({std::log(100.0)}), TimeGrid(0, 1, 50), 50000, 34);
    const auto spec = american_put_spec();
    double last = -std::numeric_limits<double>::infinity();
    double last_se = 0.0;
    double u1000 = 0.0;
    for (double m : {10.0, 100.0, 1000.0}) {
        const auto sol = solve_penalized(bundle, spec, m, put_options());
        EXPECT_GE(sol.u0 + last_se, last) << m;
        last = sol.u0;
        last_se = sol.standard_error;
        u1000 = sol.u0;
        for (double v : sol.raw_k()) EXPECT_EQ(v, 0.0);
    }
    const auto refl = solve_reflected(bundle, spec, put_options());
    EXPECT_LT(std::abs(u1000 / refl.u0 - 1.0), 0.02);
}

TEST(SolvePenalized, RejectsNegativePenalty) {
    const auto bundle = simulate(put_profile(), SimplexPoint({0.0}), TimeGrid(0, 1, 2), 10, 35);
    EXPECT_THROW((void)solve_penalized(bundle, american_put_spec(), -1.0), ValidationError);
}

TEST(Batches, DeterministicAcrossWorkers) {
    const auto bundle = simulate(put_profile(), SimplexPoint({std::log(100.0)}), TimeGrid(0, 1, 20), 8000, 36);
    SolverOptions one, four;
    four.policy.threads = 4;
    const auto a = solve_reflected(bundle, american_put_spec(), one);
    const auto b = solve_reflected(bundle, american_put_spec(), four);
    EXPECT_EQ(a.raw_y(), b.raw_y());
    EXPECT_EQ(a.u0, b.u0);
    EXPECT_EQ(a.standard_error, b.standard_error);
}

TEST(Batches, SingleBatchUsesPerPathSpread) {
    const CoefficientProfile profile({0.5}, {1.0});
    const auto bundle = simulate(profile, SimplexPoint({0.0}), TimeGrid(0, 1, 10), 20000, 37);
    SolverOptions opt;
    opt.batches = 1;
    const auto sol = solve_bsde(bundle, ProblemSpec(GeneratorSpec::zero(), TerminalSpec::coordinate(1),
                                                    ObstacleSpec::none()), opt);
    EXPECT_NEAR(sol.standard_error, 1.0 / std::sqrt(20000.0), 0.1 / std::sqrt(20000.0));
    EXPECT_LT(std::abs(sol.u0 - 0.5), 3.0 * sol.standard_error);
}

TEST(Batches, SplitSampleEstimate) {
    const auto bundle = simulate(put_profile(), SimplexPoint({std::log(100.0)}), TimeGrid(0, 1, 25), 40000, 38);
    SolverOptions opt;
    opt.split_sample = true;
    const auto split = solve_reflected(bundle, american_put_spec(), opt);
    const auto full = solve_reflected(bundle, american_put_spec());
    EXPECT_LT(std::abs(split.u0 - full.u0), 3.0 * std::hypot(split.standard_error, full.standard_error));
}

TEST(EstimateU, AnalyticAndZeroHorizon) {
    const CoefficientProfile profile({0.5}, {1.0});
    NumericsConfig num;
    num.steps = 10;
    num.paths = 50000;
    const ProblemSpec spec(GeneratorSpec::zero(), TerminalSpec::coordinate(1), ObstacleSpec::none());
    const auto e = estimate_u(profile, spec, SimplexPoint({2.0}), 0.0, 1.0, num);
    EXPECT_LT(std::abs(e.u0 - 2.5), 3.0 * e.standard_error);
    const auto z = estimate_u(profile, spec, SimplexPoint({2.0}), 1.0, 1.0, num);
    EXPECT_EQ(z.u0, 2.0);
    EXPECT_EQ(z.standard_error, 0.0);

    num.seed = 2;
    const auto e2 = estimate_u(profile, spec, SimplexPoint({2.0}), 0.0, 1.0, num);
    EXPECT_LT(std::abs(e.u0 - e2.u0), 3.0 * std::hypot(e.standard_error, e2.standard_error));
}

TEST(EstimateU, RejectsInvalidSpec) {
    const CoefficientProfile profile({0.0}, {1.0});
    const ProblemSpec spec(GeneratorSpec::zero(), TerminalSpec::coordinate(1), ObstacleSpec::from_payoff(std::nullopt, 1.0));
    NumericsConfig num;
    num.paths = 100;
    EXPECT_THROW((void)estimate_u(profile, spec, SimplexPoint({0.0}), 0.0, 1.0, num), SpecRejected);
}

TEST(Moments, StableAcrossSeeds) {
    std::vector<double> sup_y, zen;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto bundle = simulate(put_profile(), SimplexPoint({std::log(100.0)}), TimeGrid(0, 1, 20), 100000, seed);
        const auto sol = solve_reflected(bundle, american_put_spec());
        EXPECT_TRUE(std::isfinite(sol.sup_y_sq));
        EXPECT_TRUE(std::isfinite(sol.z_energy));
        sup_y.push_back(sol.sup_y_sq);
        zen.push_back(sol.z_energy);
    }
    auto cv = [](const std::vector<double>& v) {
        double m = 0, s = 0;
        for (double e : v) m += e;
        m /= v.size();
        for (double e : v) s += (e - m) * (e - m);
        return std::sqrt(s / (v.size() - 1)) / m;
    };
    EXPECT_LT(cv(sup_y), 0.1);
    EXPECT_LT(cv(zen), 0.1);
}

TEST(NamedControl, FlagsTies) {
    const CoefficientProfile profile({0.0, 0.0}, {1.0, 1.0});
    const auto bundle = simulate(profile, SimplexPoint({0.0, 0.0}), TimeGrid(0, 1, 4), 50, 39);
    const auto sol = solve_bsde(bundle, ProblemSpec(GeneratorSpec::zero(), TerminalSpec::coordinate(1),
                                                    ObstacleSpec::none()));
    const auto start = named_control(bundle, sol, 0, 0);
    EXPECT_TRUE(start.tie);
    const auto later = named_control(bundle, sol, 0, 1);
    EXPECT_FALSE(later.tie);
    const auto view = rank_state(bundle.named(0, 1));
    EXPECT_EQ(named_to_ranked_z(later.z, view)[0], sol.zbar(0, 1, 0));
}

TEST(SolutionCsv, Layout) {
    const CoefficientProfile profile({0.0}, {1.0});
    const auto bundle = simulate(profile, SimplexPoint({0.0}), TimeGrid(0, 1, 5), 100, 40);
    const auto sol = solve_bsde(bundle, ProblemSpec(GeneratorSpec::zero(), TerminalSpec::coordinate(1),
                                                    ObstacleSpec::none()));
    std::ostringstream out;
    write_solution_csv(out, sol);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "step,t,mean_Y,mean_dK,skorokhod_partial,condition");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 6);
    const auto j = solution_summary(sol);
    EXPECT_TRUE(j.contains("u0"));
    EXPECT_TRUE(j.contains("stderr"));
}
