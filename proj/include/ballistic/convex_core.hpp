#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "core.hpp"

namespace ballistic {

// ---------------------------------------------------------------------------
// Closed convex terms on R^d. Every registry Lagrangian is L(x,p) = V(x) + K(p)
// with V, K drawn from this small set, which is closed under conjugation.
// Coefficients are stored so that conjugating twice gives back the same bits.

enum class TermKind { zero, quadratic, power, point_indicator, linear };

struct ConvexTerm {
    TermKind kind = TermKind::zero;
    double num = 1.0, den = 1.0;       // quadratic: c |z|^2 / 2 with c = num / den
    double expo = 2.0, dual_expo = 2.0;  // power: |z|^expo / expo
    Point anchor;                      // point_indicator location, linear slope

    static ConvexTerm zero() { return {}; }
    static ConvexTerm quadratic(double c) {
        ConvexTerm t;
        t.kind = TermKind::quadratic;
        t.num = c;
        t.den = 1.0;
        return t;
    }
    static ConvexTerm power(double a) {
        if (!(a > 1.0)) throw Error(ErrorKind::invalid_input, "power exponent must exceed 1");
        ConvexTerm t;
        t.kind = TermKind::power;
        t.expo = a;
        t.dual_expo = a / (a - 1.0);
        return t;
    }
    static ConvexTerm point(Point a) {
        ConvexTerm t;
        t.kind = TermKind::point_indicator;
        t.anchor = std::move(a);
        return t;
    }
    static ConvexTerm linear(Point a) {
        ConvexTerm t;
        t.kind = TermKind::linear;
        t.anchor = std::move(a);
        return t;
    }

    double coef() const { return num / den; }

    bool is_convex() const { return kind != TermKind::quadratic || coef() >= 0.0; }
    bool finite_everywhere() const { return kind != TermKind::point_indicator; }

    ExtReal eval(const Point& z) const {
        switch (kind) {
            case TermKind::zero: return 0.0;
            case TermKind::quadratic: return 0.5 * coef() * norm2(z);
            case TermKind::power: return std::pow(norm(z), expo) / expo;
            case TermKind::point_indicator:
                return max_abs_diff(z, anchor) <= 1e-12 ? ExtReal(0.0) : ExtReal::pos_inf();
            case TermKind::linear: return dot(anchor, z);
        }
        return 0.0;
    }

    Point grad(const Point& z) const {
        Point g(z.size(), 0.0);
        switch (kind) {
            case TermKind::zero: break;
            case TermKind::quadratic: g = scaled(coef(), z); break;
            case TermKind::power: {
                double r = norm(z);
                if (r > 0.0) g = scaled(std::pow(r, expo - 2.0), z);
                break;
            }
            case TermKind::point_indicator: break;  // subgradient selection 0
            case TermKind::linear: g = anchor; break;
        }
        return g;
    }

    Eigen::MatrixXd hess(const Point& z) const {
        const int d = static_cast<int>(z.size());
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
        if (kind == TermKind::quadratic) {
            h.diagonal().setConstant(coef());
        } else if (kind == TermKind::power) {
            // floor the radius so the Newton systems stay finite at z = 0
            double r = std::max(norm(z), 1e-6);
            Eigen::VectorXd u(d);
            for (int i = 0; i < d; ++i) u(i) = z[i] / r;
            h = std::pow(r, expo - 2.0) *
                (Eigen::MatrixXd::Identity(d, d) + (expo - 2.0) * u * u.transpose());
        }
        return h;
    }

    // Legendre conjugate; needs the dimension because zero <-> indicator of 0.
    ConvexTerm conjugate(int dim) const {
        switch (kind) {
            case TermKind::zero: return point(Point(dim, 0.0));
            case TermKind::quadratic: {
                if (coef() < 0.0)
                    throw Error(ErrorKind::unsupported, "conjugate of a concave quadratic term");
                if (coef() == 0.0) return point(Point(dim, 0.0));
                ConvexTerm t = *this;
                std::swap(t.num, t.den);
                return t;
            }
            case TermKind::power: {
                ConvexTerm t = *this;
                std::swap(t.expo, t.dual_expo);
                return t;
            }
            case TermKind::point_indicator: return linear(anchor);
            case TermKind::linear: return point(anchor);
        }
        return {};
    }

    // growth exponent used as the coercivity exponent of a kinetic term
    double growth() const {
        switch (kind) {
            case TermKind::quadratic: return coef() > 0.0 ? 2.0 : 0.0;
            case TermKind::power: return expo;
            case TermKind::point_indicator: return std::numeric_limits<double>::infinity();
            default: return 1.0;
        }
    }

    ExtReal infimum() const {
        switch (kind) {
            case TermKind::quadratic: return coef() >= 0.0 ? ExtReal(0.0) : ExtReal::neg_inf();
            case TermKind::linear: return norm(anchor) == 0.0 ? ExtReal(0.0) : ExtReal::neg_inf();
            default: return 0.0;
        }
    }

    std::string describe() const {
        std::ostringstream os;
        os.precision(10);
        switch (kind) {
            case TermKind::zero: os << "0"; break;
            case TermKind::quadratic: os << coef() << "|z|^2/2"; break;
            case TermKind::power: os << "|z|^" << expo << "/" << expo; break;
            case TermKind::point_indicator: os << "indicator{z=" << point_str(anchor) << "}"; break;
            case TermKind::linear: os << "<" << point_str(anchor) << ",z>"; break;
        }
        return os.str();
    }

    friend bool operator==(const ConvexTerm& a, const ConvexTerm& b) {
        return a.kind == b.kind && a.num == b.num && a.den == b.den && a.expo == b.expo &&
               a.dual_expo == b.dual_expo && a.anchor == b.anchor;
    }
};

// ---------------------------------------------------------------------------
// Tabulated Lagrangian in d = 1: samples on a tensor grid (x_i, p_j), bilinear
// in between and +inf outside the table.

struct TabulatedTable {
    std::vector<double> xs, ps;
    std::vector<double> values;  // values[i * ps.size() + j] = L(xs[i], ps[j])

    double at(std::size_t i, std::size_t j) const { return values[i * ps.size() + j]; }

    ExtReal eval(double x, double p) const {
        auto locate = [](const std::vector<double>& ax, double z, std::size_t& k, double& w) {
            if (z < ax.front() - 1e-12 || z > ax.back() + 1e-12) return false;
            auto it = std::upper_bound(ax.begin(), ax.end(), z);
            k = std::min<std::size_t>(std::max<std::ptrdiff_t>(it - ax.begin() - 1, 0), ax.size() - 2);
            w = (z - ax[k]) / (ax[k + 1] - ax[k]);
            w = std::clamp(w, 0.0, 1.0);
            return true;
        };
        std::size_t i, j;
        double wx, wp;
        if (!locate(xs, x, i, wx) || !locate(ps, p, j, wp)) return ExtReal::pos_inf();
        return (1 - wx) * (1 - wp) * at(i, j) + wx * (1 - wp) * at(i + 1, j) +
               (1 - wx) * wp * at(i, j + 1) + wx * wp * at(i + 1, j + 1);
    }
};

enum class Family { quadratic_free, harmonic, power_kinetic, state_potential, tabulated, separable };

inline const char* to_string(Family f) {
    switch (f) {
        case Family::quadratic_free: return "quadratic-free";
        case Family::harmonic: return "harmonic";
        case Family::power_kinetic: return "power-kinetic";
        case Family::state_potential: return "state-potential";
        case Family::tabulated: return "tabulated-convex";
        case Family::separable: return "separable";
    }
    return "?";
}

struct AssumptionBounds {
    // constants for the growth clauses: L(x,p) >= theta(max(0,|p| - alpha|x|)) - beta|x|
    std::optional<double> alpha, beta, rho;
    std::string theta;  // human-readable profile, empty when no explicit theta is known
    std::function<double(double)> theta_fn;
};

struct LagrangianSpec {
    Family family = Family::quadratic_free;
    int dim = 1;
    ConvexTerm V;  // state part
    ConvexTerm K;  // velocity part
    std::optional<TabulatedTable> table;
    bool time_dependent = false;

    bool separable() const { return family != Family::tabulated; }

    static LagrangianSpec quadratic_free(int d = 1) {
        LagrangianSpec L;
        L.family = Family::quadratic_free;
        L.dim = d;
        L.V = ConvexTerm::zero();
        L.K = ConvexTerm::quadratic(1.0);
        return L;
    }
    static LagrangianSpec harmonic(double alpha, double beta, int d = 1) {
        if (!(beta > 0.0)) throw Error(ErrorKind::invalid_input, "harmonic family needs beta > 0");
        LagrangianSpec L;
        L.family = Family::harmonic;
        L.dim = d;
        L.V = ConvexTerm::quadratic(alpha);
        L.K = ConvexTerm::quadratic(beta);
        return L;
    }
    static LagrangianSpec power_kinetic(double delta, int d = 1) {
        LagrangianSpec L;
        L.family = Family::power_kinetic;
        L.dim = d;
        L.V = ConvexTerm::zero();
        L.K = ConvexTerm::power(delta);
        return L;
    }
    // |p|^2/2 + U(x) with U one of quadratic (k|x|^2/2), quartic (|x|^4/4), linear (<a,x>)
    static LagrangianSpec state_potential(ConvexTerm U, int d = 1) {
        LagrangianSpec L;
        L.family = Family::state_potential;
        L.dim = d;
        L.V = std::move(U);
        L.K = ConvexTerm::quadratic(1.0);
        return L;
    }
    static LagrangianSpec tabulated(TabulatedTable t) {
        if (t.xs.size() < 2 || t.ps.size() < 2 || t.values.size() != t.xs.size() * t.ps.size())
            throw Error(ErrorKind::invalid_input, "tabulated Lagrangian needs a full grid of at least 2x2");
        LagrangianSpec L;
        L.family = Family::tabulated;
        L.dim = 1;
        L.table = std::move(t);
        return L;
    }
    static LagrangianSpec separable_terms(ConvexTerm V, ConvexTerm K, int d) {
        LagrangianSpec L;
        L.family = Family::separable;
        L.dim = d;
        L.V = std::move(V);
        L.K = std::move(K);
        if (L.V.kind == TermKind::quadratic && L.V.coef() >= 0.0 && L.K.kind == TermKind::quadratic &&
            L.K.coef() > 0.0)
            L.family = Family::harmonic;
        return L;
    }

    double alpha() const { return V.kind == TermKind::quadratic ? V.coef() : 0.0; }
    double beta() const { return K.kind == TermKind::quadratic ? K.coef() : 0.0; }

    ExtReal eval(const Point& x, const Point& p) const {
        if (table) return table->eval(x.at(0), p.at(0));
        return V.eval(x) + K.eval(p);
    }

    // derivatives; finite differences on the table
    Point grad_x(const Point& x, const Point& p) const {
        if (!table) return V.grad(x);
        double hx = (table->xs[1] - table->xs[0]);
        return {fd1([&](double s) { return table->eval(s, p[0]).raw(); }, x[0], hx)};
    }
    Point grad_p(const Point& x, const Point& p) const {
        if (!table) return K.grad(p);
        double hp = (table->ps[1] - table->ps[0]);
        return {fd1([&](double s) { return table->eval(x[0], s).raw(); }, p[0], hp)};
    }
    // Hessian blocks (Lxx, Lxp, Lpp)
    void hessian(const Point& x, const Point& p, Eigen::MatrixXd& Lxx, Eigen::MatrixXd& Lxp,
                 Eigen::MatrixXd& Lpp) const {
        if (!table) {
            Lxx = V.hess(x);
            Lpp = K.hess(p);
            Lxp = Eigen::MatrixXd::Zero(dim, dim);
            return;
        }
        double hx = table->xs[1] - table->xs[0], hp = table->ps[1] - table->ps[0];
        auto f = [&](double a, double b) { return table->eval(a, b).raw(); };
        double x0 = x[0], p0 = p[0];
        Lxx = Eigen::MatrixXd::Constant(1, 1, (f(x0 + hx, p0) - 2 * f(x0, p0) + f(x0 - hx, p0)) / (hx * hx));
        Lpp = Eigen::MatrixXd::Constant(1, 1, (f(x0, p0 + hp) - 2 * f(x0, p0) + f(x0, p0 - hp)) / (hp * hp));
        Lxp = Eigen::MatrixXd::Constant(
            1, 1, (f(x0 + hx, p0 + hp) - f(x0 + hx, p0 - hp) - f(x0 - hx, p0 + hp) + f(x0 - hx, p0 - hp)) /
                      (4 * hx * hp));
        for (auto* m : {&Lxx, &Lpp, &Lxp})
            if (!std::isfinite((*m)(0, 0))) (*m)(0, 0) = 0.0;
    }

    double coercivity_exponent() const {
        if (table) {
            // estimate from the growth of the table in p at the central x
            std::size_t i = table->xs.size() / 2, n = table->ps.size();
            double p1 = std::abs(table->ps[n - 1]), p0 = std::abs(table->ps[n / 2 + (n - n / 2) / 2]);
            double l1 = table->at(i, n - 1) - table->at(i, n / 2), l0 = table->at(i, n / 2 + (n - n / 2) / 2) - table->at(i, n / 2);
            if (p0 <= 0 || l0 <= 0 || l1 <= 0 || p1 <= p0) return 1.0;
            return std::log(l1 / l0) / std::log(p1 / p0);
        }
        return K.growth();
    }

    ExtReal lower_bound() const {
        if (table) return *std::min_element(table->values.begin(), table->values.end());
        return V.infimum() + K.infimum();
    }

    bool jointly_convex() const {
        if (table) return table_convex();
        return V.is_convex() && K.is_convex();
    }

    std::string describe() const {
        if (table) return std::string(to_string(family));
        return std::string(to_string(family)) + ": V=" + V.describe() + ", K=" + K.describe();
    }

    bool table_convex(double tol = 1e-9) const {
        // midpoint convexity on all axis-aligned and diagonal triples of the table
        const auto& t = *table;
        std::size_t nx = t.xs.size(), np = t.ps.size();
        for (std::size_t i = 1; i + 1 < nx; ++i)
            for (std::size_t j = 0; j < np; ++j)
                if (t.at(i - 1, j) + t.at(i + 1, j) - 2 * t.at(i, j) < -tol) return false;
        for (std::size_t i = 0; i < nx; ++i)
            for (std::size_t j = 1; j + 1 < np; ++j)
                if (t.at(i, j - 1) + t.at(i, j + 1) - 2 * t.at(i, j) < -tol) return false;
        for (std::size_t i = 1; i + 1 < nx; ++i)
            for (std::size_t j = 1; j + 1 < np; ++j) {
                if (t.at(i - 1, j - 1) + t.at(i + 1, j + 1) - 2 * t.at(i, j) < -tol) return false;
                if (t.at(i - 1, j + 1) + t.at(i + 1, j - 1) - 2 * t.at(i, j) < -tol) return false;
            }
        return true;
    }

    friend bool operator==(const LagrangianSpec& a, const LagrangianSpec& b) {
        if (a.table || b.table) return false;
        return a.family == b.family && a.dim == b.dim && a.V == b.V && a.K == b.K;
    }

private:
    template <class F>
    static double fd1(F f, double z, double h) {
        double fp = f(z + h), fm = f(z - h);
        if (std::isfinite(fp) && std::isfinite(fm)) return (fp - fm) / (2 * h);
        if (std::isfinite(fp)) return (fp - f(z)) / h;
        if (std::isfinite(fm)) return (f(z) - fm) / h;
        return 0.0;
    }
};

// ---------------------------------------------------------------------------
// Dual Lagrangian: L~(v,q) = L*(q,v). For V(x)+K(p) this is K*(v) + V*(q).

inline LagrangianSpec dual_lagrangian(const LagrangianSpec& L) {
    if (!L.jointly_convex())
        throw Error(ErrorKind::unsupported, "dual Lagrangian needs a jointly convex Lagrangian");
    if (!L.table) {
        LagrangianSpec D = LagrangianSpec::separable_terms(L.K.conjugate(L.dim), L.V.conjugate(L.dim), L.dim);
        return D;
    }
    // brute-force sup over the table nodes onto a dual grid spanning the table slopes
    const auto& t = *L.table;
    std::size_t nx = t.xs.size(), np = t.ps.size();
    double vmin = 1e300, vmax = -1e300, qmin = 1e300, qmax = -1e300;
    for (std::size_t i = 0; i < nx; ++i)
        for (std::size_t j = 0; j + 1 < np; ++j) {
            double s = (t.at(i, j + 1) - t.at(i, j)) / (t.ps[j + 1] - t.ps[j]);
            vmin = std::min(vmin, s);
            vmax = std::max(vmax, s);
        }
    for (std::size_t i = 0; i + 1 < nx; ++i)
        for (std::size_t j = 0; j < np; ++j) {
            double s = (t.at(i + 1, j) - t.at(i, j)) / (t.xs[i + 1] - t.xs[i]);
            qmin = std::min(qmin, s);
            qmax = std::max(qmax, s);
        }
    if (qmax - qmin < 1e-12) {
        qmin -= 1.0;
        qmax += 1.0;
    }
    if (vmax - vmin < 1e-12) {
        vmin -= 1.0;
        vmax += 1.0;
    }
    TabulatedTable d;
    const std::size_t n = 41;
    for (std::size_t k = 0; k < n; ++k) {
        d.xs.push_back(vmin + (vmax - vmin) * double(k) / double(n - 1));
        d.ps.push_back(qmin + (qmax - qmin) * double(k) / double(n - 1));
    }
    d.values.resize(n * n);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) {
            double best = -1e300;
            for (std::size_t i = 0; i < nx; ++i)
                for (std::size_t j = 0; j < np; ++j)
                    best = std::max(best, d.ps[b] * t.xs[i] + d.xs[a] * t.ps[j] - t.at(i, j));
            d.values[a * n + b] = best;
        }
    return LagrangianSpec::tabulated(std::move(d));
}

// ---------------------------------------------------------------------------
// Hamiltonian H(x,q) = sup_p <p,q> - L(x,p)

struct HamiltonianSpec {
    LagrangianSpec source;
    bool closed_form = true;
    double truncation_radius = 50.0;

    ExtReal eval(const Point& x, const Point& q) const {
        if (!closed_form) return eval_numeric(x, q);
        ExtReal vx = source.V.eval(x);
        if (vx.is_pos_inf()) return ExtReal::neg_inf();
        ExtReal ks = source.K.conjugate(source.dim).eval(q);
        return ks - vx;
    }

    // sup over a p-grid of radius truncation_radius, polished by coordinate
    // ternary search (the objective is concave in p)
    ExtReal eval_numeric(const Point& x, const Point& q) const {
        const int d = source.dim;
        if (d > 2) throw Error(ErrorKind::unsupported, "numeric Hamiltonian limited to d <= 2");
        auto obj = [&](const Point& p) {
            ExtReal l = source.eval(x, p);
            if (l.is_pos_inf()) return -std::numeric_limits<double>::infinity();
            return dot(p, q) - l.raw();
        };
        double R = truncation_radius;
        if (source.table) R = std::min(R, std::max(std::abs(source.table->ps.front()), std::abs(source.table->ps.back())));
        const int n = d == 1 ? 2001 : 201;
        double step = 2 * R / (n - 1);
        Point best(d, 0.0), p(d);
        double bestv = obj(best);
        if (d == 1) {
            for (int i = 0; i < n; ++i) {
                p[0] = -R + i * step;
                double v = obj(p);
                if (v > bestv) bestv = v, best = p;
            }
        } else {
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    p[0] = -R + i * step;
                    p[1] = -R + j * step;
                    double v = obj(p);
                    if (v > bestv) bestv = v, best = p;
                }
        }
        for (int sweep = 0; sweep < (d == 1 ? 1 : 30); ++sweep)
            for (int c = 0; c < d; ++c) {
                double lo = std::max(-R, best[c] - step), hi = std::min(R, best[c] + step);
                for (int it = 0; it < 200 && hi - lo > 1e-14 * (1 + std::abs(lo)); ++it) {
                    Point a = best, b = best;
                    a[c] = lo + (hi - lo) / 3;
                    b[c] = hi - (hi - lo) / 3;
                    if (obj(a) < obj(b)) lo = a[c];
                    else hi = b[c];
                }
                Point m = best;
                m[c] = 0.5 * (lo + hi);
                if (obj(m) >= bestv) bestv = obj(m), best = m;
            }
        return bestv;
    }

    Point dH_dq(const Point& x, const Point& q) const {
        if (closed_form) return source.K.conjugate(source.dim).grad(q);
        Point g(q.size());
        for (std::size_t i = 0; i < q.size(); ++i) {
            Point a = q, b = q;
            a[i] += 1e-5;
            b[i] -= 1e-5;
            g[i] = (eval_numeric(x, a).raw() - eval_numeric(x, b).raw()) / 2e-5;
        }
        return g;
    }
    Point dH_dx(const Point& x, const Point& q) const {
        if (closed_form) return scaled(-1.0, source.V.grad(x));
        Point g(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            Point a = x, b = x;
            a[i] += 1e-5;
            b[i] -= 1e-5;
            g[i] = (eval_numeric(a, q).raw() - eval_numeric(b, q).raw()) / 2e-5;
        }
        return g;
    }
};

inline HamiltonianSpec hamiltonian(const LagrangianSpec& L) {
    if (!(L.coercivity_exponent() > 1.0))
        throw Error(ErrorKind::unbounded_hamiltonian, "coercivity exponent <= 1, sup over p may be +inf");
    HamiltonianSpec H;
    H.source = L;
    H.closed_form = !L.table;
    return H;
}

// ---------------------------------------------------------------------------
// Sampled functions on rectangular lattices and grid Legendre transforms.

struct GridSpec {
    std::vector<std::vector<double>> axes;

    static GridSpec uniform(int dim, double lo, double hi, int n) {
        GridSpec g;
        for (int k = 0; k < dim; ++k) {
            std::vector<double> ax(n);
            for (int i = 0; i < n; ++i) ax[i] = n == 1 ? lo : lo + (hi - lo) * double(i) / double(n - 1);
            g.axes.push_back(std::move(ax));
        }
        return g;
    }
    static GridSpec from_axis(std::vector<double> ax) {
        GridSpec g;
        g.axes.push_back(std::move(ax));
        return g;
    }

    int dim() const { return static_cast<int>(axes.size()); }
    std::size_t size() const {
        if (axes.empty()) return 0;
        std::size_t n = 1;
        for (const auto& a : axes) n *= a.size();
        return n;
    }
    std::vector<std::size_t> multi_index(std::size_t idx) const {
        std::vector<std::size_t> m(axes.size());
        for (int k = dim() - 1; k >= 0; --k) {
            m[k] = idx % axes[k].size();
            idx /= axes[k].size();
        }
        return m;
    }
    Point point(std::size_t idx) const {
        auto m = multi_index(idx);
        Point p(axes.size());
        for (std::size_t k = 0; k < axes.size(); ++k) p[k] = axes[k][m[k]];
        return p;
    }
    bool is_boundary(std::size_t idx) const {
        auto m = multi_index(idx);
        for (std::size_t k = 0; k < axes.size(); ++k)
            if (m[k] == 0 || m[k] + 1 == axes[k].size()) return true;
        return false;
    }
    double spacing() const {
        double h = 0.0;
        for (const auto& a : axes)
            for (std::size_t i = 0; i + 1 < a.size(); ++i) h = std::max(h, a[i + 1] - a[i]);
        return h;
    }
};

enum class SampleKind { convex, concave, general };

struct ConvexFunctionSamples {
    GridSpec grid;
    std::vector<ExtReal> values;
    SampleKind kind = SampleKind::general;
    std::vector<bool> unbounded;  // set by transforms whose extremum sits on the grid boundary

    static ConvexFunctionSamples from_function(GridSpec g, const std::function<double(const Point&)>& f,
                                               SampleKind kind = SampleKind::general) {
        ConvexFunctionSamples s;
        s.grid = std::move(g);
        s.kind = kind;
        for (std::size_t i = 0; i < s.grid.size(); ++i) s.values.push_back(f(s.grid.point(i)));
        s.unbounded.assign(s.values.size(), false);
        return s;
    }

    // discrete midpoint convexity along each axis (concavity for kind = concave)
    bool midpoint_check(double tol = 1e-9) const {
        if (kind == SampleKind::general) return true;
        double sgn = kind == SampleKind::convex ? 1.0 : -1.0;
        const int d = grid.dim();
        std::vector<std::size_t> stride(d, 1);
        for (int k = d - 2; k >= 0; --k) stride[k] = stride[k + 1] * grid.axes[k + 1].size();
        for (std::size_t idx = 0; idx < values.size(); ++idx) {
            auto m = grid.multi_index(idx);
            for (int k = 0; k < d; ++k) {
                if (m[k] == 0 || m[k] + 1 == grid.axes[k].size()) continue;
                ExtReal a = values[idx - stride[k]], b = values[idx + stride[k]], c = values[idx];
                if (!a.is_finite() || !b.is_finite() || !c.is_finite()) continue;
                double xa = grid.axes[k][m[k] - 1], xb = grid.axes[k][m[k] + 1], xc = grid.axes[k][m[k]];
                double w = (xb - xc) / (xb - xa);
                double interp = w * a.raw() + (1 - w) * b.raw();
                if (sgn * (interp - c.raw()) < -tol * (1 + std::abs(c.raw()))) return false;
            }
        }
        return true;
    }
};

enum class LegendreDirection { convex_star, concave_star };

// convex_star:  g*(v) = max_x <v,x> - g(x);   concave_star: h_*(v) = min_x <v,x> - h(x).
// An extremum reached only on the boundary of the sampled box means the true
// conjugate escapes the box; the value becomes the infinite sentinel and the
// point is flagged.
inline ConvexFunctionSamples legendre_transform(const ConvexFunctionSamples& f, LegendreDirection dir,
                                                const GridSpec& dual_grid) {
    if (f.grid.size() == 0 || dual_grid.size() == 0)
        throw Error(ErrorKind::invalid_input, "legendre transform on an empty grid");
    if (f.grid.dim() != dual_grid.dim()) throw Error(ErrorKind::invalid_input, "grid dimension mismatch");
    const bool mx = dir == LegendreDirection::convex_star;
    std::vector<Point> pts(f.grid.size());
    std::vector<bool> bnd(f.grid.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        pts[i] = f.grid.point(i);
        bnd[i] = f.grid.is_boundary(i);
    }
    ConvexFunctionSamples out;
    out.grid = dual_grid;
    out.kind = mx ? SampleKind::convex : SampleKind::concave;
    for (std::size_t j = 0; j < dual_grid.size(); ++j) {
        Point v = dual_grid.point(j);
        double best = mx ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
        std::vector<double> vals(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const ExtReal& fi = f.values[i];
            double val;
            if (fi.is_pos_inf()) val = mx ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
            else if (fi.is_neg_inf()) val = mx ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
            else val = dot(v, pts[i]) - fi.raw();
            vals[i] = val;
            if (mx ? val > best : val < best) best = val;
        }
        bool interior_hit = false;
        double tol = 1e-12 * (1 + std::abs(best));
        for (std::size_t i = 0; i < pts.size() && !interior_hit; ++i)
            if (!bnd[i] && std::abs(vals[i] - best) <= tol) interior_hit = true;
        bool unb = !interior_hit && f.grid.size() > 1;
        if (unb) out.values.push_back(mx ? ExtReal::pos_inf() : ExtReal::neg_inf());
        else out.values.push_back(ExtReal(best));
        out.unbounded.push_back(unb);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Assumption checks by sampling on a bounded grid.

enum class AssumptionProfile { A0, A123, B123 };

struct AssumptionClause {
    AssumptionClause() = default;
    explicit AssumptionClause(std::string n) : name(std::move(n)) {}
    std::string name;
    bool passed = true;
    bool checked = true;
    Point witness;
    std::string detail;
};

struct AssumptionReport {
    AssumptionProfile profile;
    std::vector<AssumptionClause> clauses;
    double grid_radius = 0.0;
    bool passed() const {
        return std::all_of(clauses.begin(), clauses.end(), [](const AssumptionClause& c) { return c.passed; });
    }
    const AssumptionClause* find(const std::string& n) const {
        for (const auto& c : clauses)
            if (c.name == n) return &c;
        return nullptr;
    }
};

namespace detail {

inline std::vector<Point> sample_points(int d, double R, int n) {
    // axis lines plus the diagonal; full tensor grid only in d = 1
    std::vector<Point> out;
    for (int i = 0; i < n; ++i) {
        double s = -R + 2 * R * double(i) / double(n - 1);
        if (d == 1) {
            out.push_back({s});
            continue;
        }
        for (int k = 0; k < d; ++k) {
            Point p(d, 0.0);
            p[k] = s;
            out.push_back(p);
        }
        out.push_back(Point(d, s / std::sqrt(double(d))));
    }
    return out;
}

inline AssumptionBounds registry_bounds(const LagrangianSpec& L) {
    AssumptionBounds b;
    if (L.table) return b;
    // theta comes from the radial profile of K, beta from the lower growth of V
    double beta = 0.0;
    if (L.V.kind == TermKind::linear) beta = norm(L.V.anchor);
    else if (L.V.kind == TermKind::quadratic && L.V.coef() < 0) return b;
    else if (L.V.kind == TermKind::point_indicator) beta = 0.0;
    if (L.K.kind == TermKind::quadratic && L.K.coef() > 0) {
        double c = L.K.coef();
        std::ostringstream os;
        os << "theta(r)=" << c << " r^2/2";
        b.theta = os.str();
        b.theta_fn = [c](double r) { return 0.5 * c * r * r; };
    } else if (L.K.kind == TermKind::power) {
        double a = L.K.expo;
        std::ostringstream os;
        os << "theta(r)=r^" << a << "/" << a;
        b.theta = os.str();
        b.theta_fn = [a](double r) { return std::pow(r, a) / a; };
    } else {
        return b;
    }
    b.alpha = 0.0;
    b.beta = beta;
    b.rho = L.K.kind == TermKind::point_indicator ? norm(L.K.anchor) : 0.0;
    return b;
}

inline void midpoint_clause(AssumptionClause& c, const std::vector<Point>& xs, const std::vector<Point>& ps,
                            const std::function<ExtReal(const Point&, const Point&)>& f, bool joint) {
    // joint: midpoints of (x1,p1),(x2,p2); otherwise only in p at fixed x
    for (std::size_t a = 0; a < xs.size(); a += 3)
        for (std::size_t i = 0; i < ps.size(); i += 2)
            for (std::size_t j = i + 2; j < ps.size(); j += 3) {
                Point x1 = xs[a], x2 = joint ? xs[xs.size() - 1 - a] : xs[a];
                Point pm = scaled(0.5, axpy(1.0, ps[i], ps[j]));
                Point xm = scaled(0.5, axpy(1.0, x1, x2));
                ExtReal f1 = f(x1, ps[i]), f2 = f(x2, ps[j]), fm = f(xm, pm);
                if (!f1.is_finite() || !f2.is_finite()) continue;
                if (fm.is_pos_inf() || fm.raw() > 0.5 * (f1.raw() + f2.raw()) + 1e-9 * (1 + std::abs(fm.raw()))) {
                    c.passed = false;
                    c.witness = xm;
                    c.witness.insert(c.witness.end(), pm.begin(), pm.end());
                    c.detail = "midpoint inequality violated at (x,p) shown";
                    return;
                }
            }
}

}  // namespace detail

inline AssumptionReport check_assumptions(const LagrangianSpec& L, AssumptionProfile profile,
                                          double radius = 4.0) {
    AssumptionReport rep;
    rep.profile = profile;
    rep.grid_radius = radius;
    const int d = L.dim;
    auto xs = detail::sample_points(d, radius, 21);
    auto ps = detail::sample_points(d, radius, 21);
    auto f = [&](const Point& x, const Point& p) { return L.eval(x, p); };

    if (profile == AssumptionProfile::A0) {
        AssumptionClause lb{"A0-bounded-below"};
        ExtReal m = L.lower_bound();
        lb.passed = m.is_finite();
        lb.detail = "recorded lower bound " + m.str();
        rep.clauses.push_back(lb);

        AssumptionClause cv{"A0-convex-in-p"};
        detail::midpoint_clause(cv, xs, ps, f, false);
        rep.clauses.push_back(cv);

        AssumptionClause co{"A0-superlinear"};
        double delta = L.coercivity_exponent();
        co.passed = delta > 1.0;
        if (co.passed) {
            // L/|p|^s must grow along rays, s between 1 and delta
            double s = std::isfinite(delta) ? 0.5 * (1.0 + delta) : 2.0;
            double prev = -1e300;
            for (double r : {radius, 4 * radius, 16 * radius}) {
                double worst = 1e300;
                for (const auto& x : xs) {
                    Point p(d, 0.0);
                    p[0] = r;
                    if (L.table && r > L.table->ps.back()) continue;
                    ExtReal l = L.eval(x, p);
                    if (l.is_finite()) worst = std::min(worst, l.raw() / std::pow(r, s));
                }
                if (worst < 1e300 && worst < prev) {
                    co.passed = false;
                    co.witness = {r};
                    co.detail = "ratio L/|p|^s decreased along the ray";
                }
                if (worst < 1e300) prev = worst;
            }
        }
        if (co.detail.empty()) {
            std::ostringstream os;
            os << "coercivity exponent " << delta;
            co.detail = os.str();
        }
        rep.clauses.push_back(co);
        return rep;
    }

    if (profile == AssumptionProfile::A123) {
        AssumptionClause a1{"A1-convex-in-p"};
        detail::midpoint_clause(a1, xs, ps, f, false);
        rep.clauses.push_back(a1);

        AssumptionClause a1b{"A1-quadratic-lower-growth"};
        double worst = 1e300;
        for (const auto& x : xs)
            for (const auto& p : ps) {
                double r = norm(p);
                if (r < radius / 2) continue;
                ExtReal l = L.eval(x, p);
                if (l.is_finite()) worst = std::min(worst, (l.raw() - L.lower_bound().raw()) / (r * r));
            }
        a1b.passed = worst > 0.0;
        {
            std::ostringstream os;
            os << "min (L - inf L)/|p|^2 on outer shell = " << worst;
            a1b.detail = os.str();
        }
        rep.clauses.push_back(a1b);

        AssumptionClause a2{"A2-log-uniform-continuity"};
        const double eps = 1e-3;
        double sup = 0.0;
        for (const auto& x : xs)
            for (const auto& p : ps) {
                Point y = x;
                y[0] += eps;
                ExtReal l1 = L.eval(x, p), l2 = L.eval(y, p);
                if (!l1.is_finite() || !l2.is_finite()) continue;
                double r = (1 + l1.raw()) / (1 + l2.raw()) - 1;
                if (std::abs(r) > sup) {
                    sup = std::abs(r);
                    a2.witness = x;
                }
            }
        a2.passed = sup < 0.05;
        {
            std::ostringstream os;
            os << "sup |(1+L(x,u))/(1+L(y,u)) - 1| at |x-y|=1e-3: " << sup;
            a2.detail = os.str();
        }
        rep.clauses.push_back(a2);

        AssumptionClause a3{"A3-sup-L-at-zero-velocity"};
        double s0 = -1e300;
        for (const auto& x : xs) {
            ExtReal l = L.eval(x, Point(d, 0.0));
            if (!l.is_finite()) {
                a3.passed = false;
                a3.witness = x;
                break;
            }
            s0 = std::max(s0, l.raw());
        }
        // closed-form knowledge: a growing state term is unbounded on R^d
        if (a3.passed && !L.table && L.V.kind != TermKind::zero && L.V.kind != TermKind::point_indicator &&
            !(L.V.kind == TermKind::quadratic && L.V.coef() == 0.0)) {
            a3.passed = false;
            a3.detail = "state term " + L.V.describe() + " is unbounded above on R^d";
        }
        if (a3.detail.empty()) {
            std::ostringstream os;
            os << "sup_x L(x,0) on grid = " << s0;
            a3.detail = os.str();
        }
        rep.clauses.push_back(a3);
        return rep;
    }

    // B123
    AssumptionClause b1{"B1-jointly-convex"};
    detail::midpoint_clause(b1, xs, ps, f, true);
    if (b1.passed && !L.table && !L.jointly_convex()) {
        b1.passed = false;
        b1.detail = "state term not convex: " + L.V.describe();
    }
    rep.clauses.push_back(b1);

    AssumptionClause b2{"B2-domain-nonempty-linear-growth"};
    auto bounds = detail::registry_bounds(L);
    if (!L.table && L.K.kind == TermKind::point_indicator) {
        b2.detail = "F(x) = {" + point_str(L.K.anchor) + "}";
    } else {
        b2.detail = "F(x) = R^d, dist(0,F(x)) = 0";
    }
    rep.clauses.push_back(b2);

    AssumptionClause b3{"B3-growth"};
    if (!bounds.theta_fn) {
        b3.checked = false;
        b3.detail = "no explicit theta for this family; clause not checked";
    } else {
        double al = *bounds.alpha, be = *bounds.beta;
        for (const auto& x : xs) {
            for (const auto& p : ps) {
                ExtReal l = L.eval(x, p);
                double rhs = bounds.theta_fn(std::max(0.0, norm(p) - al * norm(x))) - be * norm(x);
                if (l.is_finite() && l.raw() < rhs - 1e-9) {
                    b3.passed = false;
                    b3.witness = x;
                    b3.witness.insert(b3.witness.end(), p.begin(), p.end());
                }
            }
        }
        std::ostringstream os;
        os << bounds.theta << ", alpha=" << al << ", beta=" << be;
        b3.detail = os.str();
    }
    rep.clauses.push_back(b3);
    return rep;
}

}  // namespace ballistic
