#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "convex_core.hpp"
#include "dynamic_cost.hpp"

namespace ballistic {

// One end of a separable boundary cost l(a,b) = l0(a) + l1(b). Either
// c|z|^2/2 + <s,z> + k with c >= 0, or the indicator of {z = s} plus k. This set
// is closed under conjugation, so the dual boundary cost stays in it.
struct EndCost {
    bool pinned = false;
    double c = 0.0;
    Point s;
    double k = 0.0;

    static EndCost quadratic(double c, const Point& center) {
        if (!(c > 0.0)) throw Error(ErrorKind::invalid_input, "quadratic end cost needs c > 0");
        EndCost e;
        e.c = c;
        e.s = scaled(-c, center);
        e.k = 0.5 * c * norm2(center);
        return e;
    }
    static EndCost linear(const Point& slope) {
        EndCost e;
        e.s = slope;
        return e;
    }
    static EndCost point(const Point& z) {
        EndCost e;
        e.pinned = true;
        e.s = z;
        return e;
    }

    ExtReal eval(const Point& z) const {
        if (pinned) return max_abs_diff(z, s) <= 1e-12 ? ExtReal(k) : ExtReal::pos_inf();
        return 0.5 * c * norm2(z) + dot(s, z) + k;
    }
    bool differentiable() const { return !pinned; }
    Point grad(const Point& z) const { return axpy(c, z, s); }

    EndCost conjugate() const {
        EndCost e;
        if (pinned) {
            e.s = s;
            e.k = -k;
        } else if (c > 0.0) {
            e.c = 1.0 / c;
            e.s = scaled(-1.0 / c, s);
            e.k = norm2(s) / (2.0 * c) - k;
        } else {
            e.pinned = true;
            e.s = s;
            e.k = -k;
        }
        return e;
    }
    // z -> f(-z)
    EndCost reflected() const {
        EndCost e = *this;
        e.s = scaled(-1.0, s);
        return e;
    }

    EndSpec as_end_spec() const {
        if (pinned) {
            EndSpec e = EndSpec::at(s);
            e.offset = k;
            return e;
        }
        EndSpec e = EndSpec::free_with(c > 0.0 ? ConvexTerm::quadratic(c) : ConvexTerm::zero());
        e.tilt = s;
        e.offset = k;
        return e;
    }

    std::string describe() const {
        std::ostringstream o;
        if (pinned) o << "pinned at " << point_str(s);
        else if (c > 0.0) o << "quadratic c=" << c << " tilt " << point_str(s);
        else o << "linear " << point_str(s);
        return o.str();
    }
};

struct BoundaryCost {
    std::string family = "quadratic";
    EndCost start, end;

    // l(a,b) = (ca|a - a0|^2 + cb|b - b0|^2) / 2
    static BoundaryCost quadratic(double ca, double cb, const Point& a0, const Point& b0) {
        return {"quadratic", EndCost::quadratic(ca, a0), EndCost::quadratic(cb, b0)};
    }
    static BoundaryCost pinned_start(const Point& a0, double cb, const Point& b0) {
        return {"pinned-start", EndCost::point(a0), EndCost::quadratic(cb, b0)};
    }
    static BoundaryCost pinned_both(const Point& a0, const Point& b0) {
        return {"pinned-both", EndCost::point(a0), EndCost::point(b0)};
    }
    // l(a,b) = <v,a> + indicator{b = x}
    static BoundaryCost ballistic(const Point& v, const Point& x) {
        return {"ballistic", EndCost::linear(v), EndCost::point(x)};
    }

    ExtReal eval(const Point& a, const Point& b) const { return start.eval(a) + end.eval(b); }

    // (p, q) -> l*(p, -q), the boundary term of the dual problem
    BoundaryCost dual() const { return {family + "*", start.conjugate(), end.conjugate().reflected()}; }

    // midpoint convexity on seeded points around the finite domain
    bool convexity_check(int d, int samples = 200, std::uint64_t seed = 7) const {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> U(-3.0, 3.0);
        auto sample = [&](const EndCost& e) {
            Point z(d);
            for (auto& c : z) c = U(rng);
            return e.pinned ? e.s : z;
        };
        for (int i = 0; i < samples; ++i) {
            Point a1 = sample(start), a2 = sample(start), b1 = sample(end), b2 = sample(end);
            Point am = scaled(0.5, axpy(1.0, a1, a2)), bm = scaled(0.5, axpy(1.0, b1, b2));
            double lhs = eval(am, bm).raw(), rhs = 0.5 * (eval(a1, b1).raw() + eval(a2, b2).raw());
            if (lhs > rhs + 1e-10 * (1.0 + std::abs(rhs))) return false;
        }
        return true;
    }
};

struct BolzaInstance {
    std::string name;
    LagrangianSpec L = LagrangianSpec::harmonic(1.0, 1.0);
    BoundaryCost ell;
    double T = 1.0;
    int N = 256;
};

struct BolzaSolution {
    std::vector<double> times;
    std::vector<Point> primal_path, dual_path;
    double primal_value = 0.0, dual_value = 0.0;
    double gap = 0.0;  // primal + dual, zero when there is no duality gap
    double transversality_residual = 0.0;
    int N = 0;
    std::vector<std::string> notes;

    std::string to_csv() const {
        std::ostringstream o;
        o.precision(17);
        o << "t";
        const std::size_t d = primal_path.empty() ? 0 : primal_path[0].size();
        for (std::size_t c = 0; c < d; ++c) o << ",x" << c;
        for (std::size_t c = 0; c < d; ++c) o << ",v" << c;
        o << "\n";
        for (std::size_t k = 0; k < times.size(); ++k) {
            o << times[k];
            for (double x : primal_path[k]) o << "," << x;
            for (double v : dual_path[k]) o << "," << v;
            o << "\n";
        }
        return o.str();
    }
};

namespace detail {

inline void check_bolza(const BolzaInstance& I) {
    if (I.N < 2) throw Error(ErrorKind::invalid_input, "Bolza discretization needs N >= 2");
    if (!(I.T > 0.0)) throw Error(ErrorKind::invalid_input, "Bolza horizon must be positive");
    if (I.L.table) throw Error(ErrorKind::unsupported, "Bolza solver takes separable registry Lagrangians");
    if (!I.L.jointly_convex()) throw Error(ErrorKind::invalid_input, "Bolza problem needs a jointly convex Lagrangian");
    if (!I.ell.convexity_check(I.L.dim)) throw Error(ErrorKind::invalid_input, "boundary cost failed the convexity check");
}

// Forward scheme for the primal: L evaluated at the left node of each step.
// The dual uses L~ at the right node, which is the exact transpose, so the
// discrete pair has no duality gap beyond solver round-off.
inline PathProblem primal_problem(const BolzaInstance& I) {
    PathProblem P;
    P.L = I.L;
    P.T = I.T;
    P.N = I.N;
    P.left = I.ell.start.as_end_spec();
    P.right = I.ell.end.as_end_spec();
    P.theta = 0.0;
    return P;
}

inline PathProblem dual_problem(const BolzaInstance& I) {
    PathProblem P;
    P.L = dual_lagrangian(I.L);
    P.T = I.T;
    P.N = I.N;
    BoundaryCost dl = I.ell.dual();
    P.left = dl.start.as_end_spec();
    P.right = dl.end.as_end_spec();
    P.theta = 1.0;
    return P;
}

}  // namespace detail

inline double bolza_primal_objective(const BolzaInstance& I, const std::vector<Point>& X) {
    return detail::action_value(detail::primal_problem(I), X);
}

inline double bolza_dual_objective(const BolzaInstance& I, const std::vector<Point>& V) {
    return detail::action_value(detail::dual_problem(I), V);
}

inline BolzaSolution solve_bolza(const BolzaInstance& I) {
    detail::check_bolza(I);
    auto P = detail::primal_problem(I);
    auto D = detail::dual_problem(I);
    auto ps = solve_path(P);
    auto ds = solve_path(D);
    if (!ps.value.is_finite()) throw Error(ErrorKind::solver_failure, "primal Bolza problem is infeasible");
    if (!ds.value.is_finite()) throw Error(ErrorKind::solver_failure, "dual Bolza problem is infeasible");
    BolzaSolution s;
    s.N = I.N;
    s.primal_path = ps.nodes;
    s.dual_path = ds.nodes;
    s.primal_value = ps.value.raw();
    s.dual_value = ds.value.raw();
    s.gap = s.primal_value + s.dual_value;
    const double h = I.T / I.N;
    for (int k = 0; k <= I.N; ++k) s.times.push_back(k * h);
    // (v(0), -v(T)) must be a subgradient of l at (x(0), x(T))
    const auto& st = I.ell.start;
    const auto& en = I.ell.end;
    if (st.differentiable())
        s.transversality_residual = std::max(s.transversality_residual, max_abs_diff(s.dual_path.front(), st.grad(s.primal_path.front())));
    if (en.differentiable())
        s.transversality_residual = std::max(s.transversality_residual,
                                             max_abs_diff(scaled(-1.0, s.dual_path.back()), en.grad(s.primal_path.back())));
    BoundaryCost dl = I.ell.dual();
    if (dl.start.pinned) s.notes.push_back("dual start restricted to the domain of l*: v(0) = " + point_str(dl.start.s));
    if (dl.end.pinned) s.notes.push_back("dual end restricted to the domain of l*: v(T) = " + point_str(dl.end.s));
    if (!st.differentiable() || !en.differentiable())
        s.notes.push_back("transversality checked only at differentiable ends");
    return s;
}

struct HamiltonianResidual {
    double state = 0.0;    // max |x' - dH/dv|
    double costate = 0.0;  // max |v' + dH/dx|
    double max() const { return std::max(state, costate); }
};

// forward differences at the nodes t_0..t_{N-1}; O(h) by construction
inline HamiltonianResidual hamiltonian_system_check(const BolzaSolution& s, const HamiltonianSpec& H) {
    HamiltonianResidual r;
    for (int k = 0; k + 1 < static_cast<int>(s.times.size()); ++k) {
        const double h = s.times[k + 1] - s.times[k];
        const Point& x = s.primal_path[k];
        const Point& v = s.dual_path[k];
        Point xd = scaled(1.0 / h, axpy(-1.0, x, s.primal_path[k + 1]));
        Point vd = scaled(1.0 / h, axpy(-1.0, v, s.dual_path[k + 1]));
        r.state = std::max(r.state, max_abs_diff(xd, H.dH_dq(x, v)));
        r.costate = std::max(r.costate, max_abs_diff(scaled(-1.0, vd), H.dH_dx(x, v)));
    }
    return r;
}

// Instances used by the duality study and the demo suite.
inline std::vector<BolzaInstance> bolza_registry(int N = 256) {
    std::vector<BolzaInstance> out;
    auto add = [&](std::string name, LagrangianSpec L, BoundaryCost ell, double T) {
        BolzaInstance I;
        I.name = std::move(name);
        I.L = std::move(L);
        I.ell = std::move(ell);
        I.T = T;
        I.N = N;
        out.push_back(std::move(I));
    };
    add("harmonic-quadratic", LagrangianSpec::harmonic(1.0, 1.0), BoundaryCost::quadratic(1.0, 1.0, {1.0}, {-0.5}), 1.0);
    add("harmonic-pinned-start", LagrangianSpec::harmonic(2.0, 0.5), BoundaryCost::pinned_start({0.5}, 1.0, {1.5}), 1.0);
    add("harmonic-pinned-both", LagrangianSpec::harmonic(1.0, 1.0), BoundaryCost::pinned_both({-0.5}, {1.0}), 1.5);
    add("free-ballistic", LagrangianSpec::quadratic_free(1), BoundaryCost::ballistic({0.8}, {1.5}), 1.0);
    add("harmonic-ballistic", LagrangianSpec::harmonic(1.0, 1.0), BoundaryCost::ballistic({-0.4}, {0.7}), 2.0);
    return out;
}

}  // namespace ballistic
