#pragma once

#include <Eigen/Dense>

#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "convex_core.hpp"

namespace ballistic {

// ---------------------------------------------------------------------------
// Discrete action over piecewise-linear paths x_0..x_N on a uniform grid:
//   J = sum_k h L((1-theta) x_k + theta x_{k+1}, (x_{k+1} - x_k)/h) + l0(x_0) + l1(x_N).
// The default theta = 1/2 is the midpoint rule; its errors expand in even
// powers of h, which is what the Richardson step relies on. theta = 0 and 1
// are the forward scheme and its transpose used by the Bolza pair.

struct EndSpec {
    bool fixed = true;
    Point value;      // used when fixed
    ConvexTerm term;  // boundary cost when free
    Point tilt;       // optional extra <tilt, x> when free
    double offset = 0.0;

    static EndSpec at(Point v) {
        EndSpec e;
        e.fixed = true;
        e.value = std::move(v);
        return e;
    }
    static EndSpec free_with(ConvexTerm t) {
        EndSpec e;
        e.fixed = false;
        e.term = std::move(t);
        return e;
    }
};

struct PathProblem {
    LagrangianSpec L;
    double T = 1.0;
    int N = 64;
    EndSpec left, right;
    double theta = 0.5;
};

struct PathSolution {
    ExtReal value = ExtReal::pos_inf();
    std::vector<Point> nodes;
    Point left_momentum, right_momentum;  // costate at t=0 and t=T (discrete adjoint)
    int N = 0;
    int iterations = 0;
    bool converged = false;
};

struct PathOptions {
    int N0 = 32;
    int N_cap = 1024;
    double tol = 1e-5;
    bool richardson = true;
};

namespace detail {

inline double end_value(const EndSpec& e, const Point& x) {
    if (e.fixed) return e.offset;
    double v = e.term.eval(x).raw() + e.offset;
    return e.tilt.empty() ? v : v + dot(e.tilt, x);
}

inline Point end_grad(const EndSpec& e, const Point& x) {
    if (e.fixed) return Point(x.size(), 0.0);
    Point g = e.term.grad(x);
    return e.tilt.empty() ? g : axpy(1.0, e.tilt, g);
}

inline Point state_at(const PathProblem& P, const std::vector<Point>& X, int k) {
    return axpy(P.theta, X[k + 1], scaled(1.0 - P.theta, X[k]));
}

inline double action_value(const PathProblem& P, const std::vector<Point>& X) {
    const double h = P.T / P.N;
    double J = end_value(P.left, X.front()) + end_value(P.right, X.back());
    for (int k = 0; k < P.N; ++k) {
        Point m = state_at(P, X, k);
        Point p = scaled(1.0 / h, axpy(-1.0, X[k], X[k + 1]));
        ExtReal l = P.L.eval(m, p);
        if (!l.is_finite()) return std::numeric_limits<double>::infinity();
        J += h * l.raw();
    }
    return J;
}

inline void segment_derivatives(const LagrangianSpec& L, const Point& m, const Point& p, double h, double theta,
                                Point& Lx, Point& Lp, Eigen::MatrixXd& Hseg) {
    const int d = static_cast<int>(m.size());
    Lx = L.grad_x(m, p);
    Lp = L.grad_p(m, p);
    Eigen::MatrixXd Lxx, Lxp, Lpp;
    L.hessian(m, p, Lxx, Lxp, Lpp);
    Eigen::MatrixXd Hl(2 * d, 2 * d);
    Hl << Lxx, Lxp, Lxp.transpose(), Lpp;
    Eigen::MatrixXd Jm(2 * d, 2 * d);
    Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
    Jm << (1.0 - theta) * I, theta * I, -I / h, I / h;
    Hseg = h * Jm.transpose() * Hl * Jm;
}

inline void momenta(const PathProblem& P, const std::vector<Point>& X, Point& left, Point& right) {
    const double h = P.T / P.N;
    {
        Point m = state_at(P, X, 0);
        Point p = scaled(1.0 / h, axpy(-1.0, X[0], X[1]));
        left = axpy(-(1.0 - P.theta) * h, P.L.grad_x(m, p), P.L.grad_p(m, p));
    }
    {
        const int k = P.N - 1;
        Point m = state_at(P, X, k);
        Point p = scaled(1.0 / h, axpy(-1.0, X[k], X[k + 1]));
        right = axpy(P.theta * h, P.L.grad_x(m, p), P.L.grad_p(m, p));
    }
}

// Damped Newton with a block-tridiagonal Hessian.
inline PathSolution newton_path(const PathProblem& P, std::vector<Point> X) {
    const int N = P.N, d = P.L.dim;
    const double h = P.T / N;
    if (P.left.fixed) X.front() = P.left.value;
    if (P.right.fixed) X.back() = P.right.value;
    const int lo = P.left.fixed ? 1 : 0, hi = P.right.fixed ? N - 1 : N;
    if (P.L.table && !P.L.table_convex())
        throw Error(ErrorKind::solver_failure, "tabulated Lagrangian gives a non-convex discretized action");
    PathSolution sol;
    sol.N = N;
    double J = action_value(P, X);
    if (!std::isfinite(J)) throw Error(ErrorKind::solver_failure, "initial path has infinite action");
    if (hi < lo) {
        sol.value = J;
        sol.nodes = X;
        sol.converged = true;
        momenta(P, X, sol.left_momentum, sol.right_momentum);
        return sol;
    }
    for (int it = 0; it < 100; ++it) {
        std::vector<Eigen::VectorXd> g(N + 1, Eigen::VectorXd::Zero(d));
        std::vector<Eigen::MatrixXd> D(N + 1, Eigen::MatrixXd::Zero(d, d)), B(N, Eigen::MatrixXd::Zero(d, d));
        for (int k = 0; k < N; ++k) {
            Point m = state_at(P, X, k);
            Point p = scaled(1.0 / h, axpy(-1.0, X[k], X[k + 1]));
            Point Lx, Lp;
            Eigen::MatrixXd Hs;
            segment_derivatives(P.L, m, p, h, P.theta, Lx, Lp, Hs);
            for (int c = 0; c < d; ++c) {
                g[k](c) += (1.0 - P.theta) * h * Lx[c] - Lp[c];
                g[k + 1](c) += P.theta * h * Lx[c] + Lp[c];
            }
            D[k] += Hs.topLeftCorner(d, d);
            D[k + 1] += Hs.bottomRightCorner(d, d);
            B[k] += Hs.topRightCorner(d, d);
        }
        if (!P.left.fixed) {
            Point gr = end_grad(P.left, X[0]);
            for (int c = 0; c < d; ++c) g[0](c) += gr[c];
            D[0] += P.left.term.hess(X[0]);
        }
        if (!P.right.fixed) {
            Point gr = end_grad(P.right, X[N]);
            for (int c = 0; c < d; ++c) g[N](c) += gr[c];
            D[N] += P.right.term.hess(X[N]);
        }
        // block Thomas on nodes lo..hi solving H dx = -g
        const int n = hi - lo + 1;
        std::vector<Eigen::MatrixXd> S(n);
        std::vector<Eigen::VectorXd> r(n);
        std::vector<Eigen::LDLT<Eigen::MatrixXd>> F(n);
        const double reg = 1e-13;
        for (int a = 0; a < n; ++a) {
            int k = lo + a;
            S[a] = D[k] + reg * Eigen::MatrixXd::Identity(d, d);
            r[a] = -g[k];
            if (a > 0) {
                Eigen::MatrixXd M = F[a - 1].solve(B[k - 1]).transpose();  // B^T S^{-1}
                S[a] -= M * B[k - 1];
                r[a] -= M * r[a - 1];
            }
            F[a].compute(S[a]);
        }
        std::vector<Eigen::VectorXd> dx(n);
        dx[n - 1] = F[n - 1].solve(r[n - 1]);
        for (int a = n - 2; a >= 0; --a) dx[a] = F[a].solve(r[a] - B[lo + a] * dx[a + 1]);
        double slope = 0.0;
        for (int a = 0; a < n; ++a) slope += g[lo + a].dot(dx[a]);
        if (!std::isfinite(slope)) throw Error(ErrorKind::solver_failure, "non-finite Newton step");
        sol.iterations = it + 1;
        if (-slope < 1e-22 * (1.0 + std::abs(J))) {
            sol.converged = true;
            break;
        }
        if (slope > 0) {
            // Hessian lost definiteness: fall back to steepest descent
            for (int a = 0; a < n; ++a) dx[a] = -g[lo + a];
            slope = 0.0;
            for (int a = 0; a < n; ++a) slope -= g[lo + a].squaredNorm();
        }
        double s = 1.0, Jn = J;
        std::vector<Point> Xn;
        for (int ls = 0; ls < 60; ++ls) {
            Xn = X;
            for (int a = 0; a < n; ++a)
                for (int c = 0; c < d; ++c) Xn[lo + a][c] += s * dx[a](c);
            Jn = action_value(P, Xn);
            if (std::isfinite(Jn) && Jn <= J + 1e-4 * s * slope + 1e-15 * std::abs(J)) break;
            s *= 0.5;
        }
        if (!(Jn <= J + 1e-12 * (1 + std::abs(J)))) {
            sol.converged = true;  // no further decrease available at machine precision
            break;
        }
        X = std::move(Xn);
        bool small = std::abs(J - Jn) <= 1e-16 * (1 + std::abs(J)) && s == 1.0;
        J = Jn;
        if (small) {
            sol.converged = true;
            break;
        }
    }
    sol.value = J;
    sol.nodes = std::move(X);
    momenta(P, sol.nodes, sol.left_momentum, sol.right_momentum);
    return sol;
}

inline std::vector<Point> initial_path(const PathProblem& P) {
    const int d = P.L.dim;
    Point a = P.left.fixed ? P.left.value : (P.right.fixed ? P.right.value : Point(d, 0.0));
    Point b = P.right.fixed ? P.right.value : a;
    std::vector<Point> X(P.N + 1);
    for (int k = 0; k <= P.N; ++k) {
        double s = double(k) / P.N;
        X[k] = axpy(s, axpy(-1.0, a, b), a);
    }
    return X;
}

inline std::vector<Point> refine_path(const std::vector<Point>& X) {
    std::vector<Point> Y;
    Y.reserve(2 * X.size());
    for (std::size_t k = 0; k + 1 < X.size(); ++k) {
        Y.push_back(X[k]);
        Y.push_back(scaled(0.5, axpy(1.0, X[k], X[k + 1])));
    }
    Y.push_back(X.back());
    return Y;
}

// velocity pinned (K = indicator{a}): x(t) = x0 + a t, only x0 may move
inline PathSolution affine_path(const PathProblem& P) {
    const int d = P.L.dim, N = P.N;
    const Point a = P.L.K.anchor;
    const double h = P.T / N;
    auto build = [&](const Point& x0) {
        std::vector<Point> X(N + 1);
        for (int k = 0; k <= N; ++k) X[k] = axpy(k * h, a, x0);
        return X;
    };
    PathSolution sol;
    sol.N = N;
    if (P.left.fixed || P.right.fixed) {
        Point x0 = P.left.fixed ? P.left.value : axpy(-P.T, a, P.right.value);
        auto X = build(x0);
        if (P.right.fixed && max_abs_diff(X.back(), P.right.value) > 1e-9 * (1 + norm(P.right.value))) {
            sol.value = ExtReal::pos_inf();
            sol.nodes = X;
            sol.converged = true;
            return sol;
        }
        sol.value = action_value(P, X);
        sol.nodes = X;
    } else {
        // Newton in x0 on a smooth convex function of d variables
        Point x0(d, 0.0);
        for (int it = 0; it < 100; ++it) {
            auto X = build(x0);
            Eigen::VectorXd g = Eigen::VectorXd::Zero(d);
            Eigen::MatrixXd H = Eigen::MatrixXd::Zero(d, d);
            for (int k = 0; k < N; ++k) {
                Point m = state_at(P, X, k);
                Point gx = P.L.V.grad(m);
                for (int c = 0; c < d; ++c) g(c) += h * gx[c];
                H += h * P.L.V.hess(m);
            }
            Point gl = end_grad(P.left, X.front()), gr = end_grad(P.right, X.back());
            for (int c = 0; c < d; ++c) g(c) += gl[c] + gr[c];
            H += P.left.term.hess(X.front()) + P.right.term.hess(X.back());
            H += 1e-13 * Eigen::MatrixXd::Identity(d, d);
            Eigen::VectorXd step = H.ldlt().solve(-g);
            double J = action_value(P, X), s = 1.0;
            Point xn;
            for (int ls = 0; ls < 60; ++ls) {
                xn = x0;
                for (int c = 0; c < d; ++c) xn[c] += s * step(c);
                if (action_value(P, build(xn)) <= J + 1e-4 * s * g.dot(step) + 1e-15 * std::abs(J)) break;
                s *= 0.5;
            }
            double delta = 0.0;
            for (int c = 0; c < d; ++c) delta = std::max(delta, std::abs(xn[c] - x0[c]));
            x0 = xn;
            sol.iterations = it + 1;
            if (delta < 1e-15 * (1 + norm(x0))) break;
        }
        sol.nodes = build(x0);
        sol.value = action_value(P, sol.nodes);
    }
    sol.converged = true;
    // costate at the ends from the free-end stationarity (zero for fixed ends is not meaningful; report V-balance)
    Point acc(d, 0.0);
    for (int k = 0; k < N; ++k) acc = axpy(h, P.L.V.grad(state_at(P, sol.nodes, k)), acc);
    sol.left_momentum = end_grad(P.left, sol.nodes.front());
    sol.right_momentum = axpy(1.0, acc, sol.left_momentum);
    return sol;
}

// state pinned (V = indicator{a}): the path sits at a
inline PathSolution pinned_state_path(const PathProblem& P) {
    const Point a = P.L.V.anchor;
    PathSolution sol;
    sol.N = P.N;
    sol.nodes.assign(P.N + 1, a);
    sol.converged = true;
    bool ok = (!P.left.fixed || max_abs_diff(P.left.value, a) <= 1e-12) &&
              (!P.right.fixed || max_abs_diff(P.right.value, a) <= 1e-12);
    sol.value = ok ? ExtReal(action_value(P, sol.nodes)) : ExtReal::pos_inf();
    sol.left_momentum = sol.right_momentum = P.L.K.grad(Point(P.L.dim, 0.0));
    return sol;
}

}  // namespace detail

inline PathSolution solve_path(const PathProblem& P, const std::vector<Point>* init = nullptr) {
    if (P.N < 1) throw Error(ErrorKind::invalid_input, "path needs N >= 1");
    if (!(P.T > 0.0)) throw Error(ErrorKind::invalid_input, "path horizon must be positive");
    if (!P.L.table) {
        if (P.L.K.kind == TermKind::point_indicator) return detail::affine_path(P);
        if (P.L.V.kind == TermKind::point_indicator) return detail::pinned_state_path(P);
        if (P.L.K.kind == TermKind::linear || P.L.K.kind == TermKind::zero ||
            (P.L.K.kind == TermKind::quadratic && P.L.K.coef() <= 0.0))
            throw Error(ErrorKind::unsupported, "velocity term is not coercive: " + P.L.K.describe());
    }
    std::vector<Point> X = init && static_cast<int>(init->size()) == P.N + 1 ? *init : detail::initial_path(P);
    return detail::newton_path(P, std::move(X));
}

// N-doubling from opt.N0 until the raw value moves by less than opt.tol; the
// returned value and end momenta are Richardson-extrapolated from the last two levels.
inline PathSolution solve_path_refined(PathProblem P, const PathOptions& opt = {}) {
    P.N = opt.N0;
    PathSolution prev = solve_path(P);
    if (!prev.value.is_finite()) return prev;
    for (int N = 2 * opt.N0; N <= opt.N_cap; N *= 2) {
        P.N = N;
        auto init = detail::refine_path(prev.nodes);
        PathSolution cur = solve_path(P, &init);
        if (!cur.value.is_finite()) return cur;
        double diff = std::abs(cur.value.raw() - prev.value.raw());
        if (diff < opt.tol || N * 2 > opt.N_cap) {
            PathSolution out = cur;
            if (opt.richardson) {
                out.value = cur.value.raw() + (cur.value.raw() - prev.value.raw()) / 3.0;
                out.left_momentum = axpy(1.0 / 3.0, axpy(-1.0, prev.left_momentum, cur.left_momentum), cur.left_momentum);
                out.right_momentum = axpy(1.0 / 3.0, axpy(-1.0, prev.right_momentum, cur.right_momentum), cur.right_momentum);
            }
            out.converged = cur.converged && diff < opt.tol;
            return out;
        }
        prev = std::move(cur);
    }
    return prev;
}

// ---------------------------------------------------------------------------
// Fixed-end cost c_T(y,x) with the minimizing path and end momenta.

struct FixedEndResult {
    ExtReal value;
    std::vector<Point> path;
    Point start_momentum;  // v(0) = -d/dy c_T(y,x)
    Point end_momentum;    // v(T) = d/dx c_T(y,x)
    int N = 0;
    bool converged = true;
};

// Kernel for a fixed (L, T). For families whose discrete action is a quadratic
// form in the endpoints the coefficients are computed once by path solves and
// reused; V = 0 families use the exact straight-line value.
class FixedEndKernel {
public:
    enum class Mode { trivial, kinetic_only, quadratic_form, generic };

    FixedEndKernel(LagrangianSpec L, double T, PathOptions opt = {}) : L_(std::move(L)), T_(T), opt_(opt) {
        if (T_ < 0.0) throw Error(ErrorKind::invalid_input, "negative horizon");
        if (T_ == 0.0) mode_ = Mode::trivial;
        else if (!L_.table && L_.V.kind == TermKind::zero) mode_ = Mode::kinetic_only;
        else if (!L_.table && L_.V.kind == TermKind::quadratic && L_.V.coef() >= 0.0 &&
                 L_.K.kind == TermKind::quadratic && L_.K.coef() > 0.0) {
            mode_ = Mode::quadratic_form;
            compute_quadratic_form();
        } else mode_ = Mode::generic;
    }

    Mode mode() const { return mode_; }
    double T() const { return T_; }
    const LagrangianSpec& lagrangian() const { return L_; }
    // c(y,x) = A|y|^2 + B<y,x> + C|x|^2 in quadratic_form mode
    std::array<double, 3> quadratic_coefficients() const { return {A_, B_, C_}; }

    ExtReal operator()(const Point& y, const Point& x) const { return solve(y, x, false).value; }

    FixedEndResult solve(const Point& y, const Point& x, bool want_path = true) const {
        FixedEndResult r;
        const int d = L_.dim;
        if (static_cast<int>(y.size()) != d || static_cast<int>(x.size()) != d)
            throw Error(ErrorKind::invalid_input, "point dimension does not match the Lagrangian");
        switch (mode_) {
            case Mode::trivial:
                r.value = max_abs_diff(x, y) <= 1e-12 ? ExtReal(0.0) : ExtReal::pos_inf();
                r.start_momentum = r.end_momentum = Point(d, 0.0);
                if (want_path) r.path = {y, x};
                return r;
            case Mode::kinetic_only: {
                Point p = scaled(1.0 / T_, axpy(-1.0, y, x));
                ExtReal k = L_.K.eval(p);
                r.value = k.is_finite() ? ExtReal(T_ * k.raw()) : k;
                r.start_momentum = r.end_momentum = L_.K.grad(p);
                if (want_path) {
                    const int n = 16;
                    for (int i = 0; i <= n; ++i) r.path.push_back(axpy(double(i) / n, axpy(-1.0, y, x), y));
                }
                return r;
            }
            case Mode::quadratic_form: {
                r.value = A_ * norm2(y) + B_ * dot(y, x) + C_ * norm2(x);
                r.start_momentum = axpy(-2 * A_, y, scaled(-B_, x));
                r.end_momentum = axpy(B_, y, scaled(2 * C_, x));
                r.N = N_;
                if (want_path) {
                    PathProblem P{L_, T_, N_, EndSpec::at(y), EndSpec::at(x)};
                    r.path = solve_path(P).nodes;
                }
                return r;
            }
            case Mode::generic: {
                PathProblem P{L_, T_, opt_.N0, EndSpec::at(y), EndSpec::at(x)};
                auto s = solve_path_refined(P, opt_);
                r.value = s.value;
                r.start_momentum = s.left_momentum;
                r.end_momentum = s.right_momentum;
                r.N = s.N;
                r.converged = s.converged;
                if (want_path) r.path = std::move(s.nodes);
                return r;
            }
        }
        return r;
    }

private:
    void compute_quadratic_form() {
        // one-dimensional reduction: the action is isotropic across coordinates
        LagrangianSpec L1 = L_;
        L1.dim = 1;
        auto coeffs = [&](int N) {
            auto c = [&](double y, double x) {
                PathProblem P{L1, T_, N, EndSpec::at({y}), EndSpec::at({x})};
                return solve_path(P).value.raw();
            };
            double a = c(1, 0), cc = c(0, 1), b = c(1, 1) - a - cc;
            return std::array<double, 3>{a, b, cc};
        };
        auto prev = coeffs(opt_.N0);
        int N = opt_.N0;
        std::array<double, 3> cur = prev;
        bool done = false;
        while (!done) {
            N *= 2;
            cur = coeffs(N);
            double diff = 0.0;
            for (int k = 0; k < 3; ++k) diff = std::max(diff, std::abs(cur[k] - prev[k]));
            // values are bounded by |y|^2 + |x|^2 scale; converge coefficients at the value tolerance
            if (diff < opt_.tol || 2 * N > opt_.N_cap) done = true;
            else prev = cur;
        }
        N_ = N;
        for (int k = 0; k < 3; ++k) {
            double e = opt_.richardson ? cur[k] + (cur[k] - prev[k]) / 3.0 : cur[k];
            (k == 0 ? A_ : k == 1 ? B_ : C_) = e;
        }
    }

    LagrangianSpec L_;
    double T_;
    PathOptions opt_;
    Mode mode_ = Mode::generic;
    double A_ = 0, B_ = 0, C_ = 0;
    int N_ = 0;
};

inline FixedEndResult fixed_end_cost(const LagrangianSpec& L, const Point& y, const Point& x, double T,
                                     const PathOptions& opt = {}) {
    if (!(T > 0.0)) throw Error(ErrorKind::invalid_input, "fixed-end cost needs T > 0");
    return FixedEndKernel(L, T, opt).solve(y, x, true);
}

// c~_T(u,w): the same computation with the dual Lagrangian on costate space
inline FixedEndResult dual_fixed_end_cost(const LagrangianSpec& Ltilde, const Point& u, const Point& w, double T,
                                          const PathOptions& opt = {}) {
    return fixed_end_cost(Ltilde, u, w, T, opt);
}

// ---------------------------------------------------------------------------
// Ballistic cost b_T(v,x) = inf_y <v,y> + c_T(y,x).

struct BallisticResult {
    ExtReal value;
    Point y_star;        // minimizing initial point
    Point end_momentum;  // w = d/dx b_T(v,x), the costate at time T
    int expansions = 0;
};

class BallisticKernel {
public:
    BallisticKernel(LagrangianSpec L, double T, PathOptions opt = {})
        : fe_(std::move(L), T, opt), opt_(opt) {}

    const FixedEndKernel& fixed_end() const { return fe_; }
    double T() const { return fe_.T(); }

    BallisticResult operator()(const Point& v, const Point& x) const {
        const LagrangianSpec& L = fe_.lagrangian();
        const int d = L.dim;
        BallisticResult r;
        if (fe_.mode() == FixedEndKernel::Mode::trivial) {
            r.value = dot(v, x);
            r.y_star = x;
            r.end_momentum = v;
            return r;
        }
        if (fe_.mode() == FixedEndKernel::Mode::kinetic_only) {
            // b_T(v,x) = <v,x> - T K*(v), minimizer y = x - T grad K*(v)
            ConvexTerm ks = L.K.conjugate(d);
            ExtReal kv = ks.eval(v);
            if (!kv.is_finite()) throw Error(ErrorKind::unbounded_below, "ballistic cost is -inf (K* infinite at v)");
            r.value = dot(v, x) - T() * kv.raw();
            r.y_star = axpy(-T(), ks.grad(v), x);
            r.end_momentum = v;
            return r;
        }
        if (fe_.mode() == FixedEndKernel::Mode::quadratic_form) {
            auto [A, B, C] = fe_.quadratic_coefficients();
            if (!(A > 0.0)) throw Error(ErrorKind::unbounded_below, "ballistic cost unbounded below in y");
            r.y_star = scaled(-1.0 / (2 * A), axpy(B, x, v));
            r.value = dot(v, r.y_star) + fe_(r.y_star, x).raw();
            r.end_momentum = axpy(B, r.y_star, scaled(2 * C, x));
            return r;
        }
        // generic: coarse y-grid along the coordinate axes with box expansion, then
        // a free-left-end path solve
        double R = 2.0 * (1.0 + norm(x) + T() * norm(v));
        Point best_y = x;
        for (int ex = 0; ex <= 4; ++ex) {
            const int n = 11;
            double bestv = std::numeric_limits<double>::infinity();
            bool on_boundary = false;
            for (int c = 0; c < d; ++c)
                for (int i = 0; i < n; ++i) {
                    Point y = best_y;
                    y[c] = x[c] - R + 2 * R * i / (n - 1);
                    ExtReal cy = FixedEndKernel(L, T(), PathOptions{16, 16, 1.0, false})(y, x);
                    if (!cy.is_finite()) continue;
                    double val = dot(v, y) + cy.raw();
                    if (val < bestv) {
                        bestv = val;
                        on_boundary = (i == 0 || i == n - 1);
                        best_y = y;
                    }
                }
            r.expansions = ex;
            if (!on_boundary) break;
            if (ex == 4) throw Error(ErrorKind::unbounded_below, "ballistic minimizer pinned to the expanded box");
            R *= 2.0;
        }
        PathProblem P{L, T(), opt_.N0, EndSpec::free_with(ConvexTerm::linear(v)), EndSpec::at(x)};
        auto s = solve_path_refined(P, opt_);
        r.value = s.value;
        r.y_star = s.nodes.front();
        r.end_momentum = s.right_momentum;
        return r;
    }

private:
    FixedEndKernel fe_;
    PathOptions opt_;
};

inline BallisticResult ballistic_cost(const LagrangianSpec& L, const Point& v, const Point& x, double T,
                                      const PathOptions& opt = {}) {
    if (T < 0.0) throw Error(ErrorKind::invalid_input, "ballistic cost needs T >= 0");
    return BallisticKernel(L, T, opt)(v, x);
}

// ---------------------------------------------------------------------------
// Hamiltonian flow by Stormer-Verlet (separable closed forms) or implicit
// midpoint (tabulated family). Negative T integrates backwards.

struct PhasePoint {
    Point x, v;
    double t = 0.0;
};

struct FlowTrajectory {
    std::vector<PhasePoint> points;
    double h = 0.0;
    int steps = 0;
    double energy_drift = 0.0;  // max |H_k - H_0|
};

inline FlowTrajectory hamiltonian_flow(const HamiltonianSpec& H, const PhasePoint& start, double T, int steps) {
    if (steps <= 0) throw Error(ErrorKind::invalid_input, "flow needs a positive step count");
    FlowTrajectory tr;
    tr.steps = steps;
    tr.h = T / steps;
    const double h = tr.h;
    PhasePoint s = start;
    tr.points.push_back(s);
    auto energy = [&](const PhasePoint& p) { return H.eval(p.x, p.v).raw(); };
    const double H0 = energy(s);
    for (int k = 0; k < steps; ++k) {
        if (H.closed_form) {
            s.v = axpy(0.5 * h, scaled(-1.0, H.dH_dx(s.x, s.v)), s.v);
            s.x = axpy(h, H.dH_dq(s.x, s.v), s.x);
            s.v = axpy(0.5 * h, scaled(-1.0, H.dH_dx(s.x, s.v)), s.v);
        } else {
            PhasePoint n = s;
            for (int it = 0; it < 50; ++it) {
                Point xm = scaled(0.5, axpy(1.0, s.x, n.x)), vm = scaled(0.5, axpy(1.0, s.v, n.v));
                PhasePoint m{axpy(h, H.dH_dq(xm, vm), s.x), axpy(-h, H.dH_dx(xm, vm), s.v), 0.0};
                double delta = std::max(max_abs_diff(m.x, n.x), max_abs_diff(m.v, n.v));
                n = m;
                if (delta < 1e-13) break;
            }
            s.x = n.x;
            s.v = n.v;
        }
        s.t = start.t + (k + 1) * h;
        for (double c : s.x)
            if (!std::isfinite(c)) throw Error(ErrorKind::solver_failure, "flow state became non-finite");
        for (double c : s.v)
            if (!std::isfinite(c)) throw Error(ErrorKind::solver_failure, "flow state became non-finite");
        tr.points.push_back(s);
        double e = energy(s);
        if (std::isfinite(e) && std::isfinite(H0)) tr.energy_drift = std::max(tr.energy_drift, std::abs(e - H0));
    }
    return tr;
}

// ---------------------------------------------------------------------------
// Variational (Hopf-Lax) solutions on grids.

enum class EquationTag { HJ_forward, HJ_backward, dual_HJ_backward };

inline const char* to_string(EquationTag t) {
    switch (t) {
        case EquationTag::HJ_forward: return "HJ_forward";
        case EquationTag::HJ_backward: return "HJ_backward";
        case EquationTag::dual_HJ_backward: return "dual_HJ_backward";
    }
    return "?";
}

struct GridField {
    GridSpec grid;
    std::vector<double> times;
    std::vector<std::vector<ExtReal>> values;  // [slice][point]
    std::vector<std::vector<char>> boundary_pinned;
    EquationTag tag = EquationTag::HJ_forward;

    std::size_t pinned_count() const {
        std::size_t c = 0;
        for (const auto& s : boundary_pinned)
            for (char b : s) c += b;
        return c;
    }

    std::string to_csv() const {
        std::ostringstream os;
        os.precision(17);
        os << "t";
        for (int k = 0; k < grid.dim(); ++k) os << ",x" << k;
        os << ",value\n";
        for (std::size_t s = 0; s < times.size(); ++s)
            for (std::size_t i = 0; i < grid.size(); ++i) {
                os << times[s];
                for (double c : grid.point(i)) os << "," << c;
                os << "," << values[s][i].str() << "\n";
            }
        return os.str();
    }
};

namespace detail {

// extremize f(y) +- kernel over the sample grid for every target point
template <class Cost>
void convolve(const ConvexFunctionSamples& f, const GridSpec& grid, Cost cost, bool minimize,
              std::vector<ExtReal>& out, std::vector<char>& pinned) {
    const std::size_t n = f.grid.size(), m = grid.size();
    out.assign(m, minimize ? ExtReal::pos_inf() : ExtReal::neg_inf());
    pinned.assign(m, 0);
    std::vector<Point> ys(n);
    std::vector<char> bnd(n);
    for (std::size_t i = 0; i < n; ++i) ys[i] = f.grid.point(i), bnd[i] = f.grid.is_boundary(i);
    for (std::size_t j = 0; j < m; ++j) {
        Point x = grid.point(j);
        double best = minimize ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        std::vector<double> vals(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (!f.values[i].is_finite()) {
                vals[i] = minimize ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
                continue;
            }
            ExtReal c = cost(ys[i], x);
            double v;
            if (minimize) v = c.is_finite() ? f.values[i].raw() + c.raw() : std::numeric_limits<double>::infinity();
            else v = c.is_finite() ? f.values[i].raw() - c.raw() : -std::numeric_limits<double>::infinity();
            vals[i] = v;
            if (minimize ? v < best : v > best) best = v;
        }
        if (!std::isfinite(best)) {
            out[j] = minimize ? ExtReal::pos_inf() : ExtReal::neg_inf();
            continue;
        }
        out[j] = best;
        bool interior = false;
        for (std::size_t i = 0; i < n && !interior; ++i)
            if (!bnd[i] && std::abs(vals[i] - best) <= 1e-12 * (1 + std::abs(best))) interior = true;
        pinned[j] = !interior && n > 1;
    }
}

}  // namespace detail

// Phi_{f,+}(t,x) = min_y f(y) + c_t(y,x)
inline GridField hopf_lax_forward(const LagrangianSpec& L, const ConvexFunctionSamples& f,
                                  const std::vector<double>& times, const GridSpec& grid, const PathOptions& opt = {}) {
    GridField G;
    G.grid = grid;
    G.times = times;
    G.tag = EquationTag::HJ_forward;
    for (double t : times) {
        if (t < 0.0) throw Error(ErrorKind::invalid_input, "Hopf-Lax time must be >= 0");
        std::vector<ExtReal> vals;
        std::vector<char> pin;
        FixedEndKernel K(L, t, opt);
        detail::convolve(f, grid, [&](const Point& y, const Point& x) { return K(y, x); }, true, vals, pin);
        G.values.push_back(std::move(vals));
        G.boundary_pinned.push_back(std::move(pin));
    }
    return G;
}

// Phi_{f,-}(t,x) = max_z f(z) - c_{T-t}(x,z)
inline GridField hopf_lax_backward(const LagrangianSpec& L, const ConvexFunctionSamples& f, double T,
                                   const std::vector<double>& times, const GridSpec& grid,
                                   const PathOptions& opt = {}) {
    GridField G;
    G.grid = grid;
    G.times = times;
    G.tag = EquationTag::HJ_backward;
    for (double t : times) {
        if (t > T || t < 0.0) throw Error(ErrorKind::invalid_input, "backward time outside [0,T]");
        std::vector<ExtReal> vals;
        std::vector<char> pin;
        FixedEndKernel K(L, T - t, opt);
        detail::convolve(f, grid, [&](const Point& z, const Point& x) { return K(x, z); }, false, vals, pin);
        G.values.push_back(std::move(vals));
        G.boundary_pinned.push_back(std::move(pin));
    }
    return G;
}

// Phi~_{k,-}(t,v) = max_w k(w) - c~_{T-t}(v,w) with the dual Lagrangian
inline GridField dual_hopf_lax_backward(const LagrangianSpec& Ltilde, const ConvexFunctionSamples& k, double T,
                                        const std::vector<double>& times, const GridSpec& grid,
                                        const PathOptions& opt = {}) {
    GridField G = hopf_lax_backward(Ltilde, k, T, times, grid, opt);
    G.tag = EquationTag::dual_HJ_backward;
    return G;
}

inline std::string trajectory_csv(const FlowTrajectory& tr, const HamiltonianSpec& H) {
    std::ostringstream os;
    os.precision(17);
    const std::size_t d = tr.points.front().x.size();
    os << "t";
    for (std::size_t k = 0; k < d; ++k) os << ",x" << k;
    for (std::size_t k = 0; k < d; ++k) os << ",v" << k;
    os << ",H\n";
    for (const auto& p : tr.points) {
        os << p.t;
        for (double c : p.x) os << "," << c;
        for (double c : p.v) os << "," << c;
        os << "," << H.eval(p.x, p.v).str() << "\n";
    }
    return os.str();
}

}  // namespace ballistic
