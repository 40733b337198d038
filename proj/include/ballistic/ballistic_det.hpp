#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "discrete_ot.hpp"
#include "dynamic_cost.hpp"
#include "measures.hpp"

namespace ballistic {

// Plan entries at or below this mass are interior-point round-off, not pairings.
inline constexpr double plan_mass_floor = 1e-12;

// Ballistic costs over all atom pairs, with the minimizing start point y* and
// the end costate w = d/dx b_T for each pair.
struct BallisticTable {
    CostMatrix cost;
    std::vector<std::vector<Point>> y_star, w_end;
};

inline BallisticTable ballistic_table(const BallisticKernel& B, const DiscreteMeasure& mu0, const DiscreteMeasure& nuT) {
    if (mu0.tag() != SpaceTag::costate) throw Error(ErrorKind::invalid_input, "mu0 must live on costate space");
    if (nuT.tag() != SpaceTag::state) throw Error(ErrorKind::invalid_input, "nuT must live on state space");
    if (mu0.dim() != nuT.dim()) throw Error(ErrorKind::invalid_input, "measure dimensions differ");
    BallisticTable t;
    t.cost = CostMatrix(mu0.size(), nuT.size(), "ballistic b_T");
    t.y_star.assign(mu0.size(), std::vector<Point>(nuT.size()));
    t.w_end = t.y_star;
    for (std::size_t i = 0; i < mu0.size(); ++i)
        for (std::size_t j = 0; j < nuT.size(); ++j) {
            auto r = B(mu0.atom(i), nuT.atom(j));
            t.cost.set(i, j, r.value);
            t.y_star[i][j] = r.y_star;
            t.w_end[i][j] = r.end_momentum;
        }
    return t;
}

inline CostMatrix fixed_end_matrix(const FixedEndKernel& K, const DiscreteMeasure& src, const DiscreteMeasure& tgt,
                                   const std::string& provenance) {
    return CostMatrix::from_function(src, tgt, [&](const Point& y, const Point& x) { return K(y, x); }, provenance);
}

inline TransportPlan ballistic_min(const LagrangianSpec& L, const DiscreteMeasure& mu0, const DiscreteMeasure& nuT,
                                   double T, const PathOptions& opt = {}) {
    auto tab = ballistic_table(BallisticKernel(L, T, opt), mu0, nuT);
    return solve_kantorovich(tab.cost, mu0, nuT, Sense::min);
}

inline TransportPlan ballistic_max(const LagrangianSpec& L, const DiscreteMeasure& mu0, const DiscreteMeasure& nuT,
                                   double T, const PathOptions& opt = {}) {
    auto tab = ballistic_table(BallisticKernel(L, T, opt), mu0, nuT);
    return solve_kantorovich(tab.cost, mu0, nuT, Sense::max);
}

// C_T(nu0, nuT) and its plan
inline TransportPlan fixed_end_transport(const FixedEndKernel& K, const DiscreteMeasure& nu0, const DiscreteMeasure& nuT) {
    return solve_kantorovich(fixed_end_matrix(K, nu0, nuT, "fixed-end c_T"), nu0, nuT, Sense::min);
}

// ---------------------------------------------------------------------------
// Shape of sampled 1-d potentials.

struct ShapeCheck {
    bool checked = false;
    bool holds = true;
    double worst = 0.0;  // largest slope violation
};

// slopes between consecutive sorted atoms must be non-increasing (concave) or non-decreasing (convex)
inline ShapeCheck shape_check_1d(const std::vector<Point>& atoms, const std::vector<double>& values, bool concave,
                                 double tol = 1e-7) {
    ShapeCheck s;
    if (atoms.empty() || atoms.front().size() != 1) return s;
    s.checked = true;
    std::vector<std::size_t> idx(atoms.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return atoms[a][0] < atoms[b][0]; });
    std::vector<double> slopes;
    for (std::size_t k = 0; k + 1 < idx.size(); ++k) {
        double dx = atoms[idx[k + 1]][0] - atoms[idx[k]][0];
        if (dx <= 1e-12) continue;
        slopes.push_back((values[idx[k + 1]] - values[idx[k]]) / dx);
    }
    for (std::size_t k = 0; k + 1 < slopes.size(); ++k) {
        double d = concave ? slopes[k + 1] - slopes[k] : slopes[k] - slopes[k + 1];
        if (d > tol * (1 + std::abs(slopes[k]))) s.holds = false;
        s.worst = std::max(s.worst, d);
    }
    return s;
}

// v-side potential f(v) = min_j b(v,x_j) - phi1(j) of a min plan (concave in v)
inline ShapeCheck min_source_potential_shape(const TransportPlan& p, const CostMatrix& c, const DiscreteMeasure& mu0) {
    auto phi0 = c_transform(p.dual_target, c, CTransform::source_sup);
    for (auto& v : phi0) v = -v;
    return shape_check_1d(mu0.atoms(), phi0, true);
}

// x-side potential h(x) = max_i b(v_i,x) + phi0(i) of a max plan (convex in x)
inline ShapeCheck max_target_potential_shape(const TransportPlan& p, const CostMatrix& c, const DiscreteMeasure& nuT) {
    auto h = c_transform(p.dual_source, c, CTransform::target_sup);
    return shape_check_1d(nuT.atoms(), h, false);
}

// ---------------------------------------------------------------------------
// Interpolation through an intermediate measure.

struct InterpolationCertificate {
    Sense sense = Sense::min;
    double direct_value = 0.0;
    double three_marginal_value = std::numeric_limits<double>::quiet_NaN();  // min sense only
    DiscreteMeasure interpolant;
    double w_part = 0.0, c_part = 0.0;
    double gap = 0.0;
    double tol = 1e-7;
    bool certified = false;
    bool multivalued = false;  // max sense: an x atom received several end costates
    std::string hint;
};

inline std::vector<Point> default_candidate_grid(const BallisticTable& tab, const TransportPlan& plan,
                                                 const DiscreteMeasure& nuT, int fill = 41) {
    std::vector<Point> g;
    auto add = [&](const Point& p) {
        for (const auto& q : g)
            if (max_abs_diff(p, q) <= 1e-12) return;
        g.push_back(p);
    };
    for (auto [i, j] : plan.support()) add(tab.y_star[i][j]);
    for (const auto& row : tab.y_star)
        for (const auto& y : row) add(y);
    for (const auto& x : nuT.atoms()) add(x);
    if (nuT.dim() == 1 && fill > 1) {
        double lo = g.front()[0], hi = lo;
        for (const auto& p : g) lo = std::min(lo, p[0]), hi = std::max(hi, p[0]);
        double pad = 0.1 * (hi - lo) + 0.1;
        for (int k = 0; k < fill; ++k) add({lo - pad + (hi - lo + 2 * pad) * k / (fill - 1)});
    }
    return g;
}

// W-lower(mu0, nu) + C_T(nu, nuT): an upper bound for B-lower for every nu
inline double min_interpolation_bound(const FixedEndKernel& K, const DiscreteMeasure& mu0, const DiscreteMeasure& nu,
                                      const DiscreteMeasure& nuT, double* w_part = nullptr, double* c_part = nullptr) {
    double W = brenier_W(mu0, nu, Sense::min).value;
    double C = fixed_end_transport(K, nu, nuT).value;
    if (w_part) *w_part = W;
    if (c_part) *c_part = C;
    return W + C;
}

inline InterpolationCertificate interpolate_min(const LagrangianSpec& L, const DiscreteMeasure& mu0,
                                                const DiscreteMeasure& nuT, double T,
                                                std::optional<std::vector<Point>> candidate_grid = std::nullopt,
                                                double tol = 1e-7, const PathOptions& opt = {}) {
    BallisticKernel B(L, T, opt);
    auto tab = ballistic_table(B, mu0, nuT);
    auto direct = solve_kantorovich(tab.cost, mu0, nuT, Sense::min);
    std::vector<Point> grid = candidate_grid ? *candidate_grid : default_candidate_grid(tab, direct, nuT);
    if (grid.empty()) throw Error(ErrorKind::invalid_input, "empty candidate grid");
    const FixedEndKernel& K = B.fixed_end();
    // the three-marginal problem min sum pi(v,y,x)[<v,y> + c(y,x)] reduces to a
    // two-marginal one with cost min_y, because the y-marginal is free
    std::vector<std::vector<ExtReal>> cy(grid.size(), std::vector<ExtReal>(nuT.size()));
    for (std::size_t k = 0; k < grid.size(); ++k)
        for (std::size_t j = 0; j < nuT.size(); ++j) cy[k][j] = K(grid[k], nuT.atom(j));
    CostMatrix reduced(mu0.size(), nuT.size(), "three-marginal reduction");
    std::vector<std::vector<std::size_t>> arg(mu0.size(), std::vector<std::size_t>(nuT.size(), 0));
    for (std::size_t i = 0; i < mu0.size(); ++i)
        for (std::size_t j = 0; j < nuT.size(); ++j) {
            ExtReal best = ExtReal::pos_inf();
            for (std::size_t k = 0; k < grid.size(); ++k) {
                if (!cy[k][j].is_finite()) continue;
                ExtReal v = dot(mu0.atom(i), grid[k]) + cy[k][j].raw();
                if (v < best) best = v, arg[i][j] = k;
            }
            reduced.set(i, j, best);
        }
    auto three = solve_kantorovich(reduced, mu0, nuT, Sense::min);
    std::vector<Point> atoms;
    std::vector<double> weights;
    for (auto [i, j] : three.support(plan_mass_floor)) {
        atoms.push_back(grid[arg[i][j]]);
        weights.push_back(three.coupling(i, j));
    }
    InterpolationCertificate cert;
    cert.sense = Sense::min;
    cert.tol = tol;
    cert.direct_value = direct.value;
    cert.three_marginal_value = three.value;
    cert.interpolant = DiscreteMeasure::normalized(atoms, weights, SpaceTag::state);
    min_interpolation_bound(K, mu0, cert.interpolant, nuT, &cert.w_part, &cert.c_part);
    cert.gap = cert.w_part + cert.c_part - cert.direct_value;
    const double scale = 1.0 + std::abs(direct.value);
    cert.certified = std::abs(three.value - direct.value) <= tol * scale && cert.gap >= -tol * scale;
    if (!cert.certified)
        cert.hint = "candidate grid misses optimal intermediate points; add the minimizers y* of b_T or refine the fill";
    return cert;
}

// W-upper(nuT, mu) - C~_T(mu0, mu): a lower bound for B-upper for every mu
inline double max_interpolation_bound(const FixedEndKernel& Ktilde, const DiscreteMeasure& mu0, const DiscreteMeasure& mu,
                                      const DiscreteMeasure& nuT, double* w_part = nullptr, double* c_part = nullptr) {
    double W = brenier_W(nuT, mu, Sense::max).value;
    double C = fixed_end_transport(Ktilde, mu0, mu).value;
    if (w_part) *w_part = W;
    if (c_part) *c_part = C;
    return W - C;
}

// mu_T is built from the end costates of the optimal ballistic paths along the
// plan support: each pair (v_i, x_j) contributes pi_ij at w_ij = d/dx b_T(v_i, x_j).
inline InterpolationCertificate interpolate_max(const LagrangianSpec& L, const DiscreteMeasure& mu0,
                                                const DiscreteMeasure& nuT, double T, double tol = 1e-7,
                                                const PathOptions& opt = {}) {
    BallisticKernel B(L, T, opt);
    auto tab = ballistic_table(B, mu0, nuT);
    auto direct = solve_kantorovich(tab.cost, mu0, nuT, Sense::max);
    InterpolationCertificate cert;
    cert.sense = Sense::max;
    cert.tol = tol;
    cert.direct_value = direct.value;
    std::vector<Point> atoms;
    std::vector<double> weights;
    std::vector<std::optional<Point>> seen(nuT.size());
    for (auto [i, j] : direct.support(plan_mass_floor)) {
        const Point& w = tab.w_end[i][j];
        if (seen[j] && max_abs_diff(*seen[j], w) > 1e-9) cert.multivalued = true;
        if (!seen[j]) seen[j] = w;
        atoms.push_back(w);
        weights.push_back(direct.coupling(i, j));
    }
    cert.interpolant = DiscreteMeasure::normalized(atoms, weights, SpaceTag::costate);
    FixedEndKernel Kt(dual_lagrangian(L), T, opt);
    max_interpolation_bound(Kt, mu0, cert.interpolant, nuT, &cert.w_part, &cert.c_part);
    cert.gap = cert.direct_value - (cert.w_part - cert.c_part);
    cert.certified = std::abs(cert.gap) <= std::max(tol, 1e-9) * (1.0 + std::abs(direct.value));
    if (!cert.certified) cert.hint = "constructed mu_T does not close the gap; tighten the path tolerance";
    return cert;
}

// sup_g form of B-lower evaluated at a terminal potential g on the nuT atoms:
//   sum g nu_T + sum mu0(v) inf_y { <v,y> - Phi(y) },  Phi(y) = max_j g_j - c_T(y, x_j),
// with the inner inf taken over a y-grid.
inline double min_dual_formula(const FixedEndKernel& K, const DiscreteMeasure& mu0, const DiscreteMeasure& nuT,
                               const std::vector<double>& g, const std::vector<Point>& y_grid) {
    std::vector<double> Phi(y_grid.size(), -std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < y_grid.size(); ++k)
        for (std::size_t j = 0; j < nuT.size(); ++j) {
            ExtReal c = K(y_grid[k], nuT.atom(j));
            if (c.is_finite()) Phi[k] = std::max(Phi[k], g[j] - c.raw());
        }
    double total = 0.0;
    for (std::size_t j = 0; j < nuT.size(); ++j) total += nuT.weight(j) * g[j];
    for (std::size_t i = 0; i < mu0.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < y_grid.size(); ++k)
            if (std::isfinite(Phi[k])) best = std::min(best, dot(mu0.atom(i), y_grid[k]) - Phi[k]);
        total += mu0.weight(i) * best;
    }
    return total;
}

// ---------------------------------------------------------------------------
// Optimal maps by Hamiltonian flows.

struct MapArrow {
    Point from, to;
    double weight = 0.0;
};

struct MapReport {
    std::vector<MapArrow> arrows;
    DiscreteMeasure pushed;
    bool hits_target = false;
    double max_landing_error = 0.0;
    double transported_cost = 0.0;
    double lp_value = 0.0;
    double cost_error = 0.0;
    bool single_valued = true;
    double inverse_error = 0.0;  // max sense: backward flow from the end costate back to v
};

namespace detail {

inline void check_box(const Point& p, const DiscreteMeasure& ref) {
    double lo = 1e300, hi = -1e300;
    for (const auto& a : ref.atoms())
        for (double c : a) lo = std::min(lo, c), hi = std::max(hi, c);
    double pad = 1.0 + (hi - lo);
    for (double c : p)
        if (c < lo - pad || c > hi + pad) throw Error(ErrorKind::solver_failure, "flow left the verification box at " + point_str(p));
}

inline double nearest_atom_distance(const Point& p, const DiscreteMeasure& m) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& a : m.atoms()) best = std::min(best, max_abs_diff(a, p));
    return best;
}

inline void finish_map(MapReport& rep, const DiscreteMeasure& target, SpaceTag tag) {
    std::vector<Point> atoms;
    std::vector<double> weights;
    for (const auto& a : rep.arrows) {
        atoms.push_back(a.to);
        weights.push_back(a.weight);
        rep.max_landing_error = std::max(rep.max_landing_error, nearest_atom_distance(a.to, target));
    }
    rep.pushed = DiscreteMeasure::normalized(atoms, weights, tag);
    rep.hits_target = rep.pushed.approx_equal(target, 1e-3, 1e-9);
    rep.cost_error = std::abs(rep.transported_cost - rep.lp_value);
}

}  // namespace detail

// v -> pi flow_T(y, v) where y is the W-lower partner of v in the interpolant
inline MapReport optimal_map_min(const LagrangianSpec& L, const DiscreteMeasure& mu0, const DiscreteMeasure& nuT, double T,
                                 int steps = 1000, const PathOptions& opt = {}) {
    auto cert = interpolate_min(L, mu0, nuT, T, std::nullopt, 1e-7, opt);
    const DiscreteMeasure& nu0 = cert.interpolant;
    auto W = brenier_W(mu0, nu0, Sense::min);
    auto H = hamiltonian(L);
    BallisticKernel B(L, T, opt);
    MapReport rep;
    rep.lp_value = cert.direct_value;
    std::vector<int> count(mu0.size(), 0);
    for (auto [i, k] : W.support(plan_mass_floor)) {
        auto tr = hamiltonian_flow(H, {nu0.atom(k), mu0.atom(i), 0.0}, T, steps);
        const Point& x = tr.points.back().x;
        detail::check_box(x, nuT);
        rep.arrows.push_back({mu0.atom(i), x, W.coupling(i, k)});
        rep.transported_cost += W.coupling(i, k) * B(mu0.atom(i), x).value.raw();
        ++count[i];
    }
    for (int c : count) rep.single_valued = rep.single_valued && c == 1;
    detail::finish_map(rep, nuT, SpaceTag::state);
    return rep;
}

// Forward: v -> x by the flow from (y*, v). Inverse: x -> v by the backward
// flow from (x, w) with w = grad h(x) the end costate.
inline MapReport optimal_map_max(const LagrangianSpec& L, const DiscreteMeasure& mu0, const DiscreteMeasure& nuT, double T,
                                 int steps = 1000, const PathOptions& opt = {}) {
    BallisticKernel B(L, T, opt);
    auto tab = ballistic_table(B, mu0, nuT);
    auto plan = solve_kantorovich(tab.cost, mu0, nuT, Sense::max);
    auto H = hamiltonian(L);
    MapReport rep;
    rep.lp_value = plan.value;
    std::vector<int> count(mu0.size(), 0);
    for (auto [i, j] : plan.support(plan_mass_floor)) {
        auto fw = hamiltonian_flow(H, {tab.y_star[i][j], mu0.atom(i), 0.0}, T, steps);
        const Point& x = fw.points.back().x;
        detail::check_box(x, nuT);
        rep.arrows.push_back({mu0.atom(i), x, plan.coupling(i, j)});
        rep.transported_cost += plan.coupling(i, j) * B(mu0.atom(i), x).value.raw();
        auto bw = hamiltonian_flow(H, {nuT.atom(j), tab.w_end[i][j], T}, -T, steps);
        rep.inverse_error = std::max(rep.inverse_error, max_abs_diff(bw.points.back().v, mu0.atom(i)));
        ++count[i];
    }
    for (int c : count) rep.single_valued = rep.single_valued && c == 1;
    detail::finish_map(rep, nuT, SpaceTag::state);
    return rep;
}

// ---------------------------------------------------------------------------
// Recovering C_T from B-lower and W-lower.

struct EndpointCertificate {
    double fixed_end_value = 0.0;  // C_T(nu0, nuT)
    double sup_value = 0.0;        // B-lower(mu, nuT) - W-lower(nu0, mu) at the constructed mu
    double gap = 0.0;
    bool hypothesis_met = false;
    double hull_defect = 0.0;  // dual value lost by concavifying the initial potential
    std::string status;
    DiscreteMeasure mu;
    std::vector<double> candidate_values;
    double max_candidate_excess = -std::numeric_limits<double>::infinity();
};

// least concave majorant of (xs, g) evaluated at xs
inline std::vector<double> concave_envelope_1d(const std::vector<double>& xs, const std::vector<double>& g) {
    std::vector<std::size_t> idx(xs.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return xs[a] < xs[b]; });
    std::vector<std::size_t> hull;
    for (std::size_t k : idx) {
        if (!hull.empty() && std::abs(xs[hull.back()] - xs[k]) <= 1e-14) {
            if (g[k] > g[hull.back()]) hull.back() = k;
            continue;
        }
        while (hull.size() >= 2) {
            std::size_t a = hull[hull.size() - 2], b = hull.back();
            double cross = (xs[b] - xs[a]) * (g[k] - g[a]) - (g[b] - g[a]) * (xs[k] - xs[a]);
            if (cross >= 0) hull.pop_back();  // b lies on or below the chord a-k
            else break;
        }
        hull.push_back(k);
    }
    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double x = xs[i];
        auto it = std::lower_bound(hull.begin(), hull.end(), x, [&](std::size_t h, double v) { return xs[h] < v; });
        if (it != hull.end() && std::abs(xs[*it] - x) <= 1e-14) {
            out[i] = g[*it];
            continue;
        }
        std::size_t b = *it, a = *(it - 1);
        out[i] = g[a] + (g[b] - g[a]) * (x - xs[a]) / (xs[b] - xs[a]);
    }
    return out;
}

inline double endpoint_bound(const BallisticKernel& B, const DiscreteMeasure& nu0, const DiscreteMeasure& mu,
                             const DiscreteMeasure& nuT) {
    auto tab = ballistic_table(B, mu, nuT);
    return solve_kantorovich(tab.cost, mu, nuT, Sense::min).value - brenier_W(nu0, mu, Sense::min).value;
}

inline EndpointCertificate recover_fixed_end(const LagrangianSpec& L, const DiscreteMeasure& nu0, const DiscreteMeasure& nuT,
                                             double T, const std::vector<DiscreteMeasure>& candidates = {},
                                             double tol = 1e-7, const PathOptions& opt = {}) {
    if (nu0.dim() != 1 || nuT.dim() != 1) throw Error(ErrorKind::invalid_input, "endpoint recovery is implemented for d = 1");
    BallisticKernel B(L, T, opt);
    const FixedEndKernel& K = B.fixed_end();
    auto cost = fixed_end_matrix(K, nu0, nuT, "fixed-end c_T");
    auto plan = solve_kantorovich(cost, nu0, nuT, Sense::min);
    EndpointCertificate cert;
    cert.fixed_end_value = plan.value;
    // tight initial potential g(y) = max_x h(x) - c(y,x), then its concave envelope
    auto g = c_transform(plan.dual_target, cost, CTransform::source_sup);
    std::vector<double> ys;
    for (const auto& a : nu0.atoms()) ys.push_back(a[0]);
    auto gh = concave_envelope_1d(ys, g);
    for (std::size_t i = 0; i < ys.size(); ++i) cert.hull_defect += nu0.weight(i) * (gh[i] - g[i]);
    const double scale = 1.0 + std::abs(plan.value);
    cert.hypothesis_met = cert.hull_defect <= tol * scale;
    // mu = (grad g)_# nu0 along the plan: grad g(y) = -d/dy c_T(y,x) on the support
    std::vector<Point> atoms;
    std::vector<double> weights;
    for (auto [i, j] : plan.support(plan_mass_floor)) {
        atoms.push_back(K.solve(nu0.atom(i), nuT.atom(j), false).start_momentum);
        weights.push_back(plan.coupling(i, j));
    }
    cert.mu = DiscreteMeasure::normalized(atoms, weights, SpaceTag::costate);
    cert.sup_value = endpoint_bound(B, nu0, cert.mu, nuT);
    cert.gap = cert.fixed_end_value - cert.sup_value;
    for (const auto& m : candidates) {
        double v = endpoint_bound(B, nu0, m, nuT);
        cert.candidate_values.push_back(v);
        cert.max_candidate_excess = std::max(cert.max_candidate_excess, v - cert.fixed_end_value);
    }
    if (!cert.hypothesis_met) cert.status = "hypothesis not met: initial potential is not concave";
    else if (std::abs(cert.gap) <= 1e-6 * scale) cert.status = "identity certified";
    else cert.status = "identity not certified";
    return cert;
}

// ---------------------------------------------------------------------------
// Factorization of c(x - y) transports through costate space.

struct FactorizationReport {
    double C = 0.0;             // C_1(nu0, nu1)
    double K = 0.0;             // sum c*(v) mu0(v)
    double W_forward = 0.0;     // W-lower(mu0, nu1)
    double W_backward = 0.0;    // W-lower(nu0, mu0)
    double shifted_error = 0.0; // |C + K - (W_forward - W_backward)|
    bool single_valued = false;
    double map_error = std::numeric_limits<double>::quiet_NaN();  // |C - sum c(T(y) - y) nu0| when single-valued
    bool pushforward_ok = false;
    bool hypothesis_met = false;
    DiscreteMeasure mu0;
    std::string status;
};

inline FactorizationReport factorization_check(const ConvexTerm& c, const DiscreteMeasure& nu0, const DiscreteMeasure& nu1,
                                               double tol = 1e-4) {
    const int d = nu0.dim();
    auto L = LagrangianSpec::separable_terms(ConvexTerm::zero(), c, d);
    auto rec = recover_fixed_end(L, nu0, nu1, 1.0);
    FactorizationReport r;
    r.hypothesis_met = rec.hypothesis_met;
    r.C = rec.fixed_end_value;
    r.mu0 = rec.mu;
    ConvexTerm cs = c.conjugate(d);
    for (std::size_t k = 0; k < r.mu0.size(); ++k) r.K += r.mu0.weight(k) * cs.eval(r.mu0.atom(k)).raw();
    auto P1 = brenier_W(nu0, r.mu0, Sense::min);
    auto P2 = brenier_W(r.mu0, nu1, Sense::min);
    r.W_forward = P2.value;
    r.W_backward = P1.value;
    r.shifted_error = std::abs(r.C + r.K - (r.W_forward - r.W_backward));
    // composed coupling nu0 -> mu0 -> nu1
    Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(nu0.size(), nu1.size());
    for (std::size_t k = 0; k < r.mu0.size(); ++k)
        for (std::size_t i = 0; i < nu0.size(); ++i)
            for (std::size_t j = 0; j < nu1.size(); ++j)
                gamma(i, j) += P1.coupling(i, k) * P2.coupling(k, j) / r.mu0.weight(k);
    r.pushforward_ok = true;
    for (std::size_t j = 0; j < nu1.size(); ++j)
        r.pushforward_ok = r.pushforward_ok && std::abs(gamma.col(j).sum() - nu1.weight(j)) <= 1e-9;
    r.single_valued = true;
    for (std::size_t i = 0; i < nu0.size(); ++i) {
        int n = 0;
        for (std::size_t j = 0; j < nu1.size(); ++j) n += gamma(i, j) > 1e-12;
        r.single_valued = r.single_valued && n == 1;
    }
    if (r.single_valued) {
        double s = 0.0;
        for (std::size_t i = 0; i < nu0.size(); ++i)
            for (std::size_t j = 0; j < nu1.size(); ++j)
                if (gamma(i, j) > 1e-12) s += gamma(i, j) * c.eval(axpy(-1.0, nu0.atom(i), nu1.atom(j))).raw();
        r.map_error = std::abs(r.C - s);
    }
    if (!r.hypothesis_met) r.status = "precondition failed: initial potential is not concave";
    else if (r.shifted_error <= tol && (!r.single_valued || r.map_error <= tol) && r.pushforward_ok) r.status = "verified";
    else r.status = "identity violated";
    return r;
}

// ---------------------------------------------------------------------------
// Eulerian cross-check for L = beta |p|^2/2 in d = 1.
//
// Cell masses rho[k][i] at times t_k = k dt (k = 0..K), fluxes F[k][f] through
// interior faces over [t_k, t_{k+1}], and an initial coupling pi(a, i) between
// the mu0 atoms and the cells. With r[k][i] = (rho[k][i] + rho[k+1][i]) / 2 the
// action is
//   sum_k sum_f dt * beta * dx^2 * F^2 / (r[k][f] + r[k][f+1])
//     + sum_{a,i} pi(a,i) v_a x_i
// subject to rho[k+1] = rho[k] - dt div F, rho[0] = sum_a pi(a, .), rho[K] = nu_T.
// The face mass is the arithmetic mean of its two cells.

struct EulerianGrid {
    double lo = 0.0, hi = 1.0, T = 1.0, beta = 1.0;
    int nx = 64, nt = 64;

    double dx() const { return (hi - lo) / nx; }
    double dt() const { return T / nt; }
    double center(int i) const { return lo + (i + 0.5) * dx(); }
    double kappa() const { return beta * dt() * dx() * dx() / 4.0; }

    // kinetic part of the action for full slices rho[0..nt] and fluxes F[0..nt-1]
    double action(const std::vector<std::vector<double>>& rho, const std::vector<std::vector<double>>& F) const {
        double s = 0.0;
        for (int k = 0; k < nt; ++k)
            for (int f = 0; f + 1 < nx; ++f) {
                if (F[k][f] == 0.0) continue;
                double a = 0.5 * (rho[k][f] + rho[k + 1][f]), b = 0.5 * (rho[k][f + 1] + rho[k + 1][f + 1]);
                if (!(a + b > 0.0)) return std::numeric_limits<double>::infinity();
                s += 4.0 * kappa() * F[k][f] * F[k][f] / (a + b);
            }
        return s;
    }

    double continuity_residual(const std::vector<std::vector<double>>& rho, const std::vector<std::vector<double>>& F) const {
        double r = 0.0;
        for (int k = 0; k < nt; ++k)
            for (int i = 0; i < nx; ++i) {
                double div = (i + 1 < nx ? F[k][i] : 0.0) - (i > 0 ? F[k][i - 1] : 0.0);
                r = std::max(r, std::abs(rho[k + 1][i] - rho[k][i] + dt() * div));
            }
        return r;
    }

    // mass-conserving linear deposit of a measure onto cell centres
    std::vector<double> deposit(const DiscreteMeasure& m) const {
        std::vector<double> r(nx, 0.0);
        for (std::size_t a = 0; a < m.size(); ++a) {
            double s = (m.atom(a)[0] - lo) / dx() - 0.5;
            if (s <= 0) r[0] += m.weight(a);
            else if (s >= nx - 1) r[nx - 1] += m.weight(a);
            else {
                int i = static_cast<int>(std::floor(s));
                double w = s - i;
                r[i] += (1 - w) * m.weight(a);
                r[i + 1] += w * m.weight(a);
            }
        }
        return r;
    }
};

struct EulerianReport {
    EulerianGrid grid;
    double value = 0.0;
    double lp_value = 0.0;
    double relative_error = 0.0;
    double kinetic = 0.0, pairing = 0.0;
    int newton_steps = 0;
    bool converged = false;
    std::string hint;
    std::vector<std::vector<double>> rho, F;
};

namespace detail {

// Barrier method with infeasible-start Newton steps on the equality constraints;
// the KKT matrix is symmetric quasi-definite and factored by sparse LDL^T.
inline void solve_eulerian(const EulerianGrid& G, const DiscreteMeasure& mu0, const std::vector<double>& rhoT,
                           EulerianReport& rep) {
    const int n = G.nx, K = G.nt, A = static_cast<int>(mu0.size());
    const int nrho = K * n, nF = K * (n - 1), npi = A * n, N = nrho + nF + npi;
    auto irho = [&](int k, int i) { return k * n + i; };
    auto iF = [&](int k, int f) { return nrho + k * (n - 1) + f; };
    auto ipi = [&](int a, int i) { return nrho + nF + a * n + i; };
    const double dt = G.dt(), kap = G.kappa();

    std::vector<Eigen::Triplet<double>> at;
    std::vector<double> bvec;
    int row = 0;
    for (int k = 0; k < K; ++k)
        for (int i = 0; i < n; ++i, ++row) {
            if (k + 1 < K) at.emplace_back(row, irho(k + 1, i), 1.0);
            at.emplace_back(row, irho(k, i), -1.0);
            if (i + 1 < n) at.emplace_back(row, iF(k, i), dt);
            if (i > 0) at.emplace_back(row, iF(k, i - 1), -dt);
            bvec.push_back(k + 1 < K ? 0.0 : -rhoT[i]);
        }
    for (int i = 0; i < n; ++i, ++row) {
        at.emplace_back(row, irho(0, i), 1.0);
        for (int a = 0; a < A; ++a) at.emplace_back(row, ipi(a, i), -1.0);
        bvec.push_back(0.0);
    }
    for (int a = 0; a + 1 < A; ++a, ++row) {  // the last atom's row is implied by total mass
        for (int i = 0; i < n; ++i) at.emplace_back(row, ipi(a, i), 1.0);
        bvec.push_back(mu0.weight(a));
    }
    const int M = row;
    Eigen::SparseMatrix<double> Amat(M, N);
    Amat.setFromTriplets(at.begin(), at.end());
    Eigen::VectorXd b = Eigen::Map<Eigen::VectorXd>(bvec.data(), M);

    std::vector<double> pair_cost(npi);
    for (int a = 0; a < A; ++a)
        for (int i = 0; i < n; ++i) pair_cost[a * n + i] = mu0.atom(a)[0] * G.center(i);

    Eigen::VectorXd z = Eigen::VectorXd::Zero(N), nu = Eigen::VectorXd::Zero(M);
    for (int k = 0; k < K; ++k)
        for (int i = 0; i < n; ++i) z(irho(k, i)) = 1.0 / n;
    for (int a = 0; a < A; ++a)
        for (int i = 0; i < n; ++i) z(ipi(a, i)) = mu0.weight(a) / n;

    auto positive = [&](int idx) { return idx < nrho || idx >= nrho + nF; };
    // time-averaged cell mass and the variable indices it depends on
    auto cell = [&](const Eigen::VectorXd& x, int k, int i, int* idx, int& cnt) {
        cnt = 0;
        double r = 0.5 * x(irho(k, i));
        idx[cnt++] = irho(k, i);
        if (k + 1 < K) {
            r += 0.5 * x(irho(k + 1, i));
            idx[cnt++] = irho(k + 1, i);
        } else {
            r += 0.5 * rhoT[i];
        }
        return r;
    };

    auto objective = [&](const Eigen::VectorXd& x) {
        double f = 0.0;
        int idx[2], cnt;
        for (int k = 0; k < K; ++k)
            for (int fc = 0; fc + 1 < n; ++fc) {
                double Fv = x(iF(k, fc));
                f += 4.0 * kap * Fv * Fv / (cell(x, k, fc, idx, cnt) + cell(x, k, fc + 1, idx, cnt));
            }
        for (int p = 0; p < npi; ++p) f += pair_cost[p] * x(nrho + nF + p);
        return f;
    };

    auto gradient = [&](const Eigen::VectorXd& x, double t, Eigen::VectorXd& g,
                        std::vector<Eigen::Triplet<double>>* hess) {
        g.setZero(N);
        for (int k = 0; k < K; ++k)
            for (int fc = 0; fc + 1 < n; ++fc) {
                const int jf = iF(k, fc);
                const double Fv = x(jf);
                int idx[4], c0, c1;
                double sm = cell(x, k, fc, idx, c0);
                sm += cell(x, k, fc + 1, idx + c0, c1);
                const int cnt = c0 + c1;
                // term c F^2 / sm with sm the sum of the two time-averaged cell masses
                const double c = 4.0 * kap;
                g(jf) += t * 2 * c * Fv / sm;
                double ds = -t * c * Fv * Fv / (sm * sm);
                for (int q = 0; q < cnt; ++q) g(idx[q]) += 0.5 * ds;
                if (hess) {
                    double hFF = t * 2 * c / sm, hFs = -t * 2 * c * Fv / (sm * sm) * 0.5,
                           hss = t * 2 * c * Fv * Fv / (sm * sm * sm) * 0.25;
                    hess->emplace_back(jf, jf, hFF);
                    for (int q = 0; q < cnt; ++q) {
                        hess->emplace_back(jf, idx[q], hFs);
                        hess->emplace_back(idx[q], jf, hFs);
                        for (int r = 0; r < cnt; ++r) hess->emplace_back(idx[q], idx[r], hss);
                    }
                }
            }
        for (int p = 0; p < npi; ++p) g(nrho + nF + p) += t * pair_cost[p];
        for (int j = 0; j < N; ++j)
            if (positive(j)) {
                g(j) -= 1.0 / x(j);
                if (hess) hess->emplace_back(j, j, 1.0 / (x(j) * x(j)));
            }
    };

    const int nlog = nrho + npi;
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    bool analyzed = false;
    double t = 1.0;
    int steps = 0;
    rep.converged = false;
    for (int outer = 0; outer < 40; ++outer) {
        for (int it = 0; it < 60; ++it) {
            Eigen::VectorXd g;
            std::vector<Eigen::Triplet<double>> trip;
            gradient(z, t, g, &trip);
            Eigen::VectorXd rd = g + Amat.transpose() * nu, rp = Amat * z - b;
            double rnorm = std::sqrt(rd.squaredNorm() + rp.squaredNorm());
            if (rp.lpNorm<Eigen::Infinity>() < 1e-11 && rd.lpNorm<Eigen::Infinity>() < 1e-6 * std::max(1.0, t)) break;
            // symmetric diagonal scaling so the primal block has unit diagonal
            Eigen::VectorXd sc = Eigen::VectorXd::Zero(N + M);
            for (const auto& e : trip)
                if (e.row() == e.col()) sc(e.row()) += e.value();
            for (int j = 0; j < N; ++j) sc(j) = 1.0 / std::sqrt(sc(j));
            for (int r = 0; r < M; ++r) sc(N + r) = 1.0;
            for (int k = 0; k < Amat.outerSize(); ++k)
                for (Eigen::SparseMatrix<double>::InnerIterator e(Amat, k); e; ++e)
                    trip.emplace_back(N + e.row(), e.col(), e.value());
            std::vector<Eigen::Triplet<double>> all;
            all.reserve(2 * trip.size());
            for (const auto& e : trip) {
                double v = e.value() * sc(e.row()) * sc(e.col());
                all.emplace_back(e.row(), e.col(), v);
                if (e.row() >= N) all.emplace_back(e.col(), e.row(), v);
            }
            Eigen::SparseMatrix<double> Ks(N + M, N + M);
            Ks.setFromTriplets(all.begin(), all.end());
            if (!analyzed) {
                lu.analyzePattern(Ks);
                analyzed = true;
            }
            lu.factorize(Ks);
            if (lu.info() != Eigen::Success) throw Error(ErrorKind::solver_failure, "Eulerian KKT factorization failed");
            Eigen::VectorXd rhs(N + M);
            rhs << -rd, -rp;
            rhs = rhs.cwiseProduct(sc);
            Eigen::VectorXd sol = lu.solve(rhs);
            sol += lu.solve(rhs - Ks * sol);
            sol = sol.cwiseProduct(sc);
            Eigen::VectorXd dz = sol.head(N), dnu = sol.tail(M);
            double s = 1.0;
            for (int j = 0; j < N; ++j)
                if (positive(j) && dz(j) < 0) s = std::min(s, -0.99 * z(j) / dz(j));
            for (int ls = 0; ls < 60; ++ls) {
                Eigen::VectorXd zn = z + s * dz, nn = nu + s * dnu, gn;
                gradient(zn, t, gn, nullptr);
                double rn = std::sqrt((gn + Amat.transpose() * nn).squaredNorm() + (Amat * zn - b).squaredNorm());
                if (rn <= (1 - 0.01 * s) * rnorm) {
                    z = zn;
                    nu = nn;
                    break;
                }
                s *= 0.5;
            }
            ++steps;
        }
        double f = objective(z);
        if (nlog / t <= 1e-6 * (1.0 + std::abs(f)) && (Amat * z - b).lpNorm<Eigen::Infinity>() < 1e-9) {
            rep.converged = true;
            break;
        }
        t *= 20.0;
    }
    rep.newton_steps = steps;
    rep.rho.assign(K + 1, std::vector<double>(n));
    rep.F.assign(K, std::vector<double>(n - 1));
    for (int k = 0; k < K; ++k)
        for (int i = 0; i < n; ++i) rep.rho[k][i] = z(irho(k, i));
    rep.rho[K] = rhoT;
    for (int k = 0; k < K; ++k)
        for (int f = 0; f + 1 < n; ++f) rep.F[k][f] = z(iF(k, f));
    rep.kinetic = G.action(rep.rho, rep.F);
    rep.pairing = 0.0;
    for (int p = 0; p < npi; ++p) rep.pairing += pair_cost[p] * z(nrho + nF + p);
    rep.value = rep.kinetic + rep.pairing;
}

}  // namespace detail

inline EulerianReport eulerian_check(const LagrangianSpec& L, const DiscreteMeasure& mu0, const DiscreteMeasure& nuT, double T,
                                     int nx = 64, int nt = 64, std::optional<std::pair<double, double>> box = std::nullopt) {
    if (L.dim != 1 || L.table || L.V.kind != TermKind::zero || L.K.kind != TermKind::quadratic || !(L.K.coef() > 0))
        throw Error(ErrorKind::unsupported, "Eulerian check needs d = 1 and L = beta |p|^2 / 2");
    if (nx < 3 || nt < 1) throw Error(ErrorKind::invalid_input, "Eulerian grid too small");
    BallisticKernel B(L, T);
    auto tab = ballistic_table(B, mu0, nuT);
    auto plan = solve_kantorovich(tab.cost, mu0, nuT, Sense::min);
    EulerianReport rep;
    rep.lp_value = plan.value;
    EulerianGrid G;
    G.T = T;
    G.beta = L.K.coef();
    G.nx = nx;
    G.nt = nt;
    if (box) {
        G.lo = box->first;
        G.hi = box->second;
    } else {
        double lo = 1e300, hi = -1e300;
        for (const auto& a : nuT.atoms()) lo = std::min(lo, a[0]), hi = std::max(hi, a[0]);
        for (auto [i, j] : plan.support()) lo = std::min(lo, tab.y_star[i][j][0]), hi = std::max(hi, tab.y_star[i][j][0]);
        double pad = 0.1 * (hi - lo) + 0.25;
        G.lo = lo - pad;
        G.hi = hi + pad;
    }
    rep.grid = G;
    detail::solve_eulerian(G, mu0, G.deposit(nuT), rep);
    rep.relative_error = std::abs(rep.value - rep.lp_value) / std::max(1e-12, std::abs(rep.lp_value));
    if (!rep.converged) rep.hint = "barrier iterations exhausted; refine or enlarge the grid";
    else if (rep.relative_error > 0.05) rep.hint = "discretization error above 5%; refine nx and nt";
    return rep;
}

}  // namespace ballistic
