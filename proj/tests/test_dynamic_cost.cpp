#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ballistic/dynamic_cost.hpp"

using namespace ballistic;

namespace {

// closed-form fixed-end cost for L = alpha x^2/2 + beta p^2/2 in d = 1
double harmonic_c(double alpha, double beta, double y, double x, double T) {
    double w = std::sqrt(alpha / beta);
    return std::sqrt(alpha * beta) * ((x * x + y * y) * std::cosh(w * T) - 2 * x * y) / (2 * std::sinh(w * T));
}

double golden_min(const std::function<double(double)>& f, double lo, double hi) {
    const double g = (std::sqrt(5.0) - 1) / 2;
    double a = lo, b = hi, c = b - g * (b - a), d = a + g * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > 1e-10) {
        if (fc < fd) b = d, d = c, fd = fc, c = b - g * (b - a), fc = f(c);
        else a = c, c = d, fc = fd, d = a + g * (b - a), fd = f(d);
    }
    return f(0.5 * (a + b));
}

// Euler-Lagrange shooting for L = x^4/4 + p^2/2 (x'' = x^3) with RK4; returns the action
double quartic_shooting(double y, double x, double T) {
    auto integrate = [&](double v0, double& action) {
        const int n = 20000;
        double h = T / n, a = y, b = v0;
        action = 0.0;
        auto lag = [](double q, double p) { return q * q * q * q / 4 + p * p / 2; };
        for (int k = 0; k < n; ++k) {
            // state (a, b, action)
            auto fa = [](double, double bb) { return bb; };
            auto fb = [](double aa, double) { return aa * aa * aa; };
            double k1a = fa(a, b), k1b = fb(a, b), k1s = lag(a, b);
            double k2a = fa(a + h / 2 * k1a, b + h / 2 * k1b), k2b = fb(a + h / 2 * k1a, b + h / 2 * k1b),
                   k2s = lag(a + h / 2 * k1a, b + h / 2 * k1b);
            double k3a = fa(a + h / 2 * k2a, b + h / 2 * k2b), k3b = fb(a + h / 2 * k2a, b + h / 2 * k2b),
                   k3s = lag(a + h / 2 * k2a, b + h / 2 * k2b);
            double k4a = fa(a + h * k3a, b + h * k3b), k4b = fb(a + h * k3a, b + h * k3b),
                   k4s = lag(a + h * k3a, b + h * k3b);
            a += h / 6 * (k1a + 2 * k2a + 2 * k3a + k4a);
            b += h / 6 * (k1b + 2 * k2b + 2 * k3b + k4b);
            action += h / 6 * (k1s + 2 * k2s + 2 * k3s + k4s);
        }
        return a;
    };
    double lo = -10, hi = 10, s = 0;
    for (int it = 0; it < 100; ++it) {
        double mid = 0.5 * (lo + hi);
        if (integrate(mid, s) < x) lo = mid;
        else hi = mid;
    }
    integrate(0.5 * (lo + hi), s);
    return s;
}

LagrangianSpec quartic_potential() {
    return LagrangianSpec::state_potential(ConvexTerm::power(4.0), 1);
}

}  // namespace

TEST(FixedEndCost, ConstantPathIsFree) {
    for (auto L : {LagrangianSpec::quadratic_free(1), LagrangianSpec::power_kinetic(3.0, 1)})
        for (double T : {0.5, 1.0, 3.0}) EXPECT_EQ(fixed_end_cost(L, {0.7}, {0.7}, T).value.raw(), 0.0);
}

TEST(FixedEndCost, QuadraticFreeClosedForm) {
    auto r = fixed_end_cost(LagrangianSpec::quadratic_free(1), {1.0}, {2.0}, 1.0);
    EXPECT_DOUBLE_EQ(r.value.raw(), 0.5);
    auto r2 = fixed_end_cost(LagrangianSpec::quadratic_free(2), {1.0, -1.0}, {2.0, 1.0}, 2.0);
    EXPECT_DOUBLE_EQ(r2.value.raw(), 5.0 / 4.0);
    EXPECT_THROW(fixed_end_cost(LagrangianSpec::quadratic_free(1), {0.0}, {1.0}, 0.0), Error);
}

TEST(FixedEndCost, HarmonicMatchesClosedForm) {
    auto L = LagrangianSpec::harmonic(1.0, 1.0, 1);
    auto r = fixed_end_cost(L, {0.0}, {1.0}, 1.0);
    EXPECT_NEAR(r.value.raw(), harmonic_c(1, 1, 0, 1, 1), 1e-7);
    EXPECT_NEAR(r.value.raw(), 0.65651764274966565, 1e-7);  // cosh(1)/(2 sinh(1))
    for (auto [a, b] : {std::pair{2.0, 0.5}, std::pair{0.3, 1.7}}) {
        FixedEndKernel K(LagrangianSpec::harmonic(a, b, 1), 1.3);
        EXPECT_EQ(K.mode(), FixedEndKernel::Mode::quadratic_form);
        for (double y : {-1.0, 0.25})
            for (double x : {-0.5, 2.0}) EXPECT_NEAR(K({y}, {x}).raw(), harmonic_c(a, b, y, x, 1.3), 1e-6);
    }
}

TEST(FixedEndCost, RefinementConvergesBetweenLevels) {
    auto L = LagrangianSpec::harmonic(1.0, 1.0, 1);
    auto solve = [&](int N) { return solve_path(PathProblem{L, 1.0, N, EndSpec::at({0.0}), EndSpec::at({1.0})}).value.raw(); };
    double v128 = solve(128), v256 = solve(256);
    EXPECT_LT(std::abs(v256 - v128), 1e-5);
    EXPECT_NEAR(v256, harmonic_c(1, 1, 0, 1, 1), 1e-5);
}

TEST(FixedEndCost, PathMatchesEulerLagrange) {
    // harmonic minimizer x(t) = sinh(t)/sinh(1) for y=0, x=1
    auto r = fixed_end_cost(LagrangianSpec::harmonic(1.0, 1.0, 1), {0.0}, {1.0}, 1.0);
    const int N = static_cast<int>(r.path.size()) - 1;
    for (int k = 0; k <= N; k += N / 8) EXPECT_NEAR(r.path[k][0], std::sinh(double(k) / N) / std::sinh(1.0), 1e-5);
    // end momenta: -d/dy c and d/dx c from the closed form
    EXPECT_NEAR(r.start_momentum[0], 1.0 / std::sinh(1.0), 1e-6);
    EXPECT_NEAR(r.end_momentum[0], std::cosh(1.0) / std::sinh(1.0), 1e-6);
}

TEST(FixedEndCost, GenericPotentialAgainstShooting) {
    auto L = quartic_potential();
    for (auto [y, x] : {std::pair{0.0, 1.0}, std::pair{-0.5, 1.5}}) {
        auto r = fixed_end_cost(L, {y}, {x}, 1.0);
        EXPECT_NEAR(r.value.raw(), quartic_shooting(y, x, 1.0), 1e-6);
    }
}

TEST(FixedEndCost, PowerKineticClosedForm) {
    auto L = LagrangianSpec::power_kinetic(3.0, 1);
    auto r = fixed_end_cost(L, {0.0}, {2.0}, 2.0);
    EXPECT_DOUBLE_EQ(r.value.raw(), 2.0 * 1.0 / 3.0);
}

TEST(FixedEndCost, TabulatedHarmonic) {
    TabulatedTable t;
    for (int i = 0; i <= 60; ++i) t.xs.push_back(-3 + 0.1 * i);
    for (int j = 0; j <= 80; ++j) t.ps.push_back(-4 + 0.1 * j);
    for (double x : t.xs)
        for (double p : t.ps) t.values.push_back(0.5 * x * x + 0.5 * p * p);
    auto L = LagrangianSpec::tabulated(t);
    auto r = fixed_end_cost(L, {0.0}, {1.0}, 1.0, PathOptions{32, 256, 1e-5, true});
    EXPECT_NEAR(r.value.raw(), harmonic_c(1, 1, 0, 1, 1), 1e-2);
}

TEST(FixedEndCost, NonConvexTableFails) {
    TabulatedTable t;
    for (int i = 0; i <= 20; ++i) t.xs.push_back(-1 + 0.1 * i);
    for (int j = 0; j <= 20; ++j) t.ps.push_back(-1 + 0.1 * j);
    for (double x : t.xs)
        for (double p : t.ps) t.values.push_back(std::cos(3 * x) + 0.5 * p * p);
    EXPECT_THROW(
        {
            try {
                fixed_end_cost(LagrangianSpec::tabulated(t), {0.0}, {0.5}, 1.0);
            } catch (const Error& e) {
                EXPECT_EQ(e.kind(), ErrorKind::solver_failure);
                throw;
            }
        },
        Error);
}

TEST(BallisticCost, TimeZeroIsPairing) {
    EXPECT_EQ(ballistic_cost(LagrangianSpec::harmonic(1, 1, 2), {1.0, 2.0}, {3.0, -1.0}, 0.0).value.raw(), 1.0);
}

TEST(BallisticCost, QuadraticFree) {
    auto r = ballistic_cost(LagrangianSpec::quadratic_free(1), {1.0}, {2.0}, 1.0);
    EXPECT_DOUBLE_EQ(r.value.raw(), 1.5);
    // cross-check by one-variable minimization of <v,y> + c_T(y,x)
    double g = golden_min([](double y) { return y + (2 - y) * (2 - y) / 2; }, -10, 10);
    EXPECT_NEAR(r.value.raw(), g, 1e-9);
}

TEST(BallisticCost, StateIndependentStructure) {
    auto L = LagrangianSpec::power_kinetic(3.0, 1);
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> U(-2, 2);
    for (int rep = 0; rep < 10; ++rep) {
        double v = U(rng), x = U(rng);
        double b = ballistic_cost(L, {v}, {x}, 1.0).value.raw();
        double oracle = golden_min([&](double y) { return v * y + std::pow(std::abs(x - y), 3) / 3; }, x - 10, x + 10);
        EXPECT_NEAR(b, oracle, 1e-8);
        // <v,x> - c*(v) with c*(v) = |v|^{3/2}/(3/2)
        EXPECT_NEAR(b, v * x - std::pow(std::abs(v), 1.5) / 1.5, 1e-12);
    }
}

TEST(BallisticCost, HarmonicAgainstInfConvolution) {
    auto L = LagrangianSpec::harmonic(1.0, 2.0, 1);
    for (auto [v, x] : {std::pair{0.5, 1.0}, std::pair{-1.0, 0.3}}) {
        auto r = ballistic_cost(L, {v}, {x}, 1.0);
        double oracle = golden_min([&](double y) { return v * y + harmonic_c(1, 2, y, x, 1); }, -20, 20);
        EXPECT_NEAR(r.value.raw(), oracle, 1e-6);
        double ystar = r.y_star[0];
        EXPECT_NEAR(v * ystar + harmonic_c(1, 2, ystar, x, 1), oracle, 1e-6);
    }
}

TEST(BallisticCost, GenericPotential) {
    auto L = quartic_potential();
    auto r = ballistic_cost(L, {0.5}, {1.0}, 1.0);
    double oracle = golden_min([&](double y) { return 0.5 * y + fixed_end_cost(L, {y}, {1.0}, 1.0).value.raw(); }, -3, 3);
    EXPECT_NEAR(r.value.raw(), oracle, 1e-6);
}

TEST(BallisticCost, ConvexInStateConcaveInCostate) {
    for (auto L : {LagrangianSpec::harmonic(1, 1, 1), LagrangianSpec::power_kinetic(3.0, 1), quartic_potential()}) {
        auto bx = ConvexFunctionSamples::from_function(
            GridSpec::uniform(1, -1.5, 1.5, 13), [&](const Point& x) { return ballistic_cost(L, {0.7}, x, 1.0).value.raw(); },
            SampleKind::convex);
        EXPECT_TRUE(bx.midpoint_check(1e-7));
        auto bv = ConvexFunctionSamples::from_function(
            GridSpec::uniform(1, -1.5, 1.5, 13), [&](const Point& v) { return ballistic_cost(L, v, {0.4}, 1.0).value.raw(); },
            SampleKind::concave);
        EXPECT_TRUE(bv.midpoint_check(1e-7));
    }
}

TEST(BallisticCost, TripleDualityRecoversFixedEnd) {
    auto L = LagrangianSpec::harmonic(1.0, 1.0, 1);
    BallisticKernel B(L, 1.0);
    for (auto [y, x] : {std::pair{0.0, 1.0}, std::pair{-0.4, 0.8}}) {
        double best = -1e300;
        for (int i = 0; i <= 4000; ++i) {
            double v = -5 + 10.0 * i / 4000;
            best = std::max(best, B({v}, {x}).value.raw() - v * y);
        }
        EXPECT_NEAR(best, harmonic_c(1, 1, y, x, 1), 1e-3);
    }
}

TEST(DualFixedEndCost, KineticTypeIsZeroOnDiagonal) {
    EXPECT_EQ(dual_fixed_end_cost(LagrangianSpec::quadratic_free(1), {0.3}, {0.3}, 1.0).value.raw(), 0.0);
}

TEST(DualFixedEndCost, HarmonicSelfDual) {
    auto L = LagrangianSpec::harmonic(1.0, 1.0, 1);
    auto Lt = dual_lagrangian(L);
    for (auto [u, w] : {std::pair{0.0, 1.0}, std::pair{0.5, -0.25}})
        EXPECT_NEAR(dual_fixed_end_cost(Lt, {u}, {w}, 1.0).value.raw(), fixed_end_cost(L, {u}, {w}, 1.0).value.raw(), 1e-5);
}

TEST(DualFixedEndCost, QuadraticFreeDualPinsTheCostate) {
    auto Lt = dual_lagrangian(LagrangianSpec::quadratic_free(1));
    EXPECT_NEAR(dual_fixed_end_cost(Lt, {0.6}, {0.6}, 2.0).value.raw(), 2.0 * 0.18, 1e-12);
    EXPECT_TRUE(dual_fixed_end_cost(Lt, {0.6}, {0.7}, 2.0).value.is_pos_inf());
}

TEST(DualFixedEndCost, BallisticIsSupOverDualCost) {
    for (auto L : {LagrangianSpec::harmonic(1.0, 2.0, 1), LagrangianSpec::harmonic(1.0, 1.0, 1)}) {
        auto Lt = dual_lagrangian(L);
        FixedEndKernel Kt(Lt, 1.0);
        std::mt19937_64 rng(4);
        std::uniform_real_distribution<double> U(-1, 1);
        for (int rep = 0; rep < 5; ++rep) {
            double v = U(rng), x = U(rng);
            double best = -1e300;
            for (int i = 0; i <= 4000; ++i) {
                double w = -6 + 12.0 * i / 4000;
                best = std::max(best, w * x - Kt({v}, {w}).raw());
            }
            EXPECT_NEAR(best, ballistic_cost(L, {v}, {x}, 1.0).value.raw(), 1e-3);
        }
    }
}

TEST(HamiltonianFlow, FreeFlightIsExact) {
    auto H = hamiltonian(LagrangianSpec::quadratic_free(1));
    auto tr = hamiltonian_flow(H, {{0.5}, {1.5}, 0.0}, 2.0, 10);
    EXPECT_NEAR(tr.points.back().x[0], 0.5 + 2.0 * 1.5, 1e-14);
    EXPECT_EQ(tr.points.back().v[0], 1.5);
    EXPECT_THROW(hamiltonian_flow(H, {{0.0}, {0.0}, 0.0}, 1.0, 0), Error);
}

TEST(HamiltonianFlow, HarmonicEnergyAndExactSolution) {
    auto H = hamiltonian(LagrangianSpec::harmonic(1.0, 1.0, 1));
    auto tr = hamiltonian_flow(H, {{1.0}, {0.0}, 0.0}, 1.0, 1000);
    EXPECT_LE(tr.energy_drift, 1e-6);
    // x' = v, v' = x: x = cosh t
    EXPECT_NEAR(tr.points.back().x[0], std::cosh(1.0), 1e-6);
    EXPECT_NEAR(tr.points.back().v[0], std::sinh(1.0), 1e-6);
    for (std::size_t k = 1; k < tr.points.size(); ++k) EXPECT_GT(tr.points[k].t, tr.points[k - 1].t);
}

TEST(HamiltonianFlow, Reversible) {
    auto H = hamiltonian(quartic_potential());
    PhasePoint s{{0.3}, {-0.8}, 0.0};
    auto fw = hamiltonian_flow(H, s, 1.0, 500);
    auto bw = hamiltonian_flow(H, fw.points.back(), -1.0, 500);
    EXPECT_NEAR(bw.points.back().x[0], 0.3, 1e-8);
    EXPECT_NEAR(bw.points.back().v[0], -0.8, 1e-8);
}

TEST(HamiltonianFlow, TrajectoryFromPathMomentumHitsEndpoint) {
    for (auto L : {LagrangianSpec::harmonic(1.0, 2.0, 1), quartic_potential()}) {
        auto r = fixed_end_cost(L, {0.2}, {1.1}, 1.0);
        auto tr = hamiltonian_flow(hamiltonian(L), {{0.2}, r.start_momentum, 0.0}, 1.0, 1000);
        EXPECT_NEAR(tr.points.back().x[0], 1.1, 1e-3);
        EXPECT_NEAR(tr.points.back().v[0], r.end_momentum[0], 1e-3);
    }
}

TEST(HamiltonianFlow, TabulatedUsesNumericDerivatives) {
    TabulatedTable t;
    for (int i = 0; i <= 40; ++i) t.xs.push_back(-2 + 0.1 * i);
    for (int j = 0; j <= 40; ++j) t.ps.push_back(-2 + 0.1 * j);
    for (std::size_t i = 0; i < t.xs.size(); ++i)
        for (double p : t.ps) t.values.push_back(0.5 * p * p);
    auto H = hamiltonian(LagrangianSpec::tabulated(t));
    auto tr = hamiltonian_flow(H, {{0.0}, {0.5}, 0.0}, 1.0, 20);
    EXPECT_NEAR(tr.points.back().x[0], 0.5, 1e-3);
}

TEST(HopfLax, LinearDataGivesBallisticCost) {
    auto L = LagrangianSpec::harmonic(1.0, 1.0, 1);
    const double v = 0.6;
    auto f = ConvexFunctionSamples::from_function(GridSpec::uniform(1, -6, 6, 2401), [&](const Point& y) { return v * y[0]; });
    auto grid = GridSpec::uniform(1, -1, 1, 9);
    auto G = hopf_lax_forward(L, f, {1.0}, grid);
    for (std::size_t i = 0; i < grid.size(); ++i)
        EXPECT_NEAR(G.values[0][i].raw(), ballistic_cost(L, {v}, grid.point(i), 1.0).value.raw(), 1e-4);
    EXPECT_EQ(G.pinned_count(), 0u);
}

TEST(HopfLax, QuadraticDataQuadraticFree) {
    auto f = ConvexFunctionSamples::from_function(GridSpec::uniform(1, -4, 4, 801), [](const Point& y) { return 0.5 * y[0] * y[0]; });
    auto grid = GridSpec::uniform(1, -2, 2, 41);
    auto G = hopf_lax_forward(LagrangianSpec::quadratic_free(1), f, {0.0, 1.0}, grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double x = grid.point(i)[0];
        EXPECT_NEAR(G.values[1][i].raw(), x * x / 4, 1e-3);
        EXPECT_NEAR(G.values[0][i].raw(), 0.5 * x * x, 1e-12);
    }
}

TEST(HopfLax, Semigroup) {
    auto L = LagrangianSpec::quadratic_free(1);
    auto g = GridSpec::uniform(1, -4, 4, 401);
    auto f = ConvexFunctionSamples::from_function(g, [](const Point& y) { return std::abs(y[0]) + 0.25 * y[0] * y[0]; });
    auto G = hopf_lax_forward(L, f, {0.4, 1.0}, g);
    ConvexFunctionSamples s;
    s.grid = g;
    s.values = G.values[0];
    auto G2 = hopf_lax_forward(L, s, {0.6}, g);
    double tol = 2 * g.spacing() * g.spacing();
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (std::abs(g.point(i)[0]) > 2) continue;
        EXPECT_NEAR(G2.values[0][i].raw(), G.values[1][i].raw(), tol + 1e-9);
    }
}

TEST(HopfLax, SmallTimeRecoversData) {
    auto g = GridSpec::uniform(1, -2, 2, 201);
    auto f = ConvexFunctionSamples::from_function(g, [](const Point& y) { return std::cos(y[0]); });
    auto G = hopf_lax_forward(LagrangianSpec::quadratic_free(1), f, {1e-3}, g);
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (g.is_boundary(i)) continue;
        EXPECT_NEAR(G.values[0][i].raw(), f.values[i].raw(), 1e-2);
    }
}

TEST(HopfLax, BoundaryPinnedIsFlagged) {
    auto g = GridSpec::uniform(1, -1, 1, 21);
    auto f = ConvexFunctionSamples::from_function(g, [](const Point& y) { return 3.0 * y[0]; });
    auto G = hopf_lax_forward(LagrangianSpec::quadratic_free(1), f, {1.0}, g);
    EXPECT_GT(G.pinned_count(), 0u);
}

TEST(HopfLax, BackwardLinearQuadraticFree) {
    const double w = 0.8, T = 1.0;
    auto f = ConvexFunctionSamples::from_function(GridSpec::uniform(1, -6, 6, 1201), [&](const Point& z) { return w * z[0]; });
    auto grid = GridSpec::uniform(1, -1, 1, 11);
    auto G = hopf_lax_backward(LagrangianSpec::quadratic_free(1), f, T, {0.0, 0.5}, grid);
    for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t i = 0; i < grid.size(); ++i) {
            double x = grid.point(i)[0], t = G.times[s];
            EXPECT_NEAR(G.values[s][i].raw(), w * x + (T - t) * w * w / 2, 1e-3);
        }
}

TEST(HopfLax, BackwardTerminalSliceIsData) {
    auto g = GridSpec::uniform(1, -1, 1, 21);
    auto f = ConvexFunctionSamples::from_function(g, [](const Point& z) { return -z[0] * z[0] + 0.3 * z[0]; });
    auto G = hopf_lax_backward(LagrangianSpec::harmonic(1, 1, 1), f, 2.0, {2.0}, g);
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(G.values[0][i], f.values[i]);
}

TEST(HopfLax, BackwardPreservesConcavity) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> U(0.2, 2.0);
    auto g = GridSpec::uniform(1, -2, 2, 81);
    for (int rep = 0; rep < 4; ++rep) {
        double a = U(rng), b = U(rng) - 1.0;
        auto f = ConvexFunctionSamples::from_function(g, [&](const Point& z) { return -a * z[0] * z[0] + b * z[0] - std::abs(z[0] - 0.3); },
                                                      SampleKind::concave);
        ASSERT_TRUE(f.midpoint_check());
        auto G = hopf_lax_backward(LagrangianSpec::harmonic(0.5, 1.0, 1), f, 1.0, {0.0, 0.5}, g);
        for (auto& slice : G.values) {
            ConvexFunctionSamples s;
            s.grid = g;
            s.values = slice;
            s.kind = SampleKind::concave;
            EXPECT_TRUE(s.midpoint_check(1e-9));
        }
    }
}

TEST(HopfLax, DualBackwardTag) {
    auto Lt = dual_lagrangian(LagrangianSpec::harmonic(1, 1, 1));
    auto g = GridSpec::uniform(1, -1, 1, 11);
    auto k = ConvexFunctionSamples::from_function(g, [](const Point& w) { return -w[0] * w[0]; });
    auto G = dual_hopf_lax_backward(Lt, k, 1.0, {0.5, 1.0}, g);
    EXPECT_EQ(G.tag, EquationTag::dual_HJ_backward);
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(G.values[1][i], k.values[i]);
}

TEST(Export, CsvShapes) {
    auto g = GridSpec::uniform(1, 0, 1, 3);
    auto f = ConvexFunctionSamples::from_function(g, [](const Point& y) { return y[0]; });
    auto G = hopf_lax_forward(LagrangianSpec::quadratic_free(1), f, {0.0}, g);
    auto csv = G.to_csv();
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,x0,value");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
    auto H = hamiltonian(LagrangianSpec::quadratic_free(1));
    auto tcsv = trajectory_csv(hamiltonian_flow(H, {{0.0}, {1.0}, 0.0}, 1.0, 4), H);
    EXPECT_EQ(tcsv.substr(0, tcsv.find('\n')), "t,x0,v0,H");
    EXPECT_EQ(std::count(tcsv.begin(), tcsv.end(), '\n'), 6);
}
