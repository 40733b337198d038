#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "convex_core.hpp"
#include "discrete_ot.hpp"
#include "lp.hpp"
#include "measures.hpp"

namespace ballistic {

// Finite drift set {-b_max, -b_max + db, ..., b_max}.
struct ControlSet {
    double b_max = 1.0;
    double db = 0.25;

    int count() const {
        if (!(db > 0.0) || !(b_max >= 0.0)) return 0;
        return 2 * static_cast<int>(std::lround(b_max / db)) + 1;
    }
    double value(int c) const { return -b_max + c * db; }
    std::vector<double> values() const {
        std::vector<double> v(count());
        for (int c = 0; c < count(); ++c) v[c] = value(c);
        return v;
    }
    void validate() const {
        if (!(db > 0.0) || !(b_max >= 0.0)) throw Error(ErrorKind::invalid_input, "control set is empty");
        double r = b_max / db;
        if (std::abs(r - std::round(r)) > 1e-9) throw Error(ErrorKind::invalid_input, "b_max must be a multiple of db");
    }
};

// b_max = 4 (max |v| over the costate atoms + support diameter / T), rounded up to the step.
inline ControlSet default_controls(const DiscreteMeasure& mu0, double diameter, double T, double db) {
    double vmax = 0.0;
    for (const auto& a : mu0.atoms()) vmax = std::max(vmax, std::abs(a[0]));
    double b = 4.0 * (vmax + diameter / T);
    return {std::ceil(b / db) * db, db};
}

struct LatticeStep {
    std::array<int, 3> to{};
    std::array<double, 3> p{};
};

// Uniform 1-d node set x_i = lo + i dx, K steps of dt = T / K, reflecting ends.
struct Lattice {
    double lo = 0.0, dx = 0.1;
    int n = 2;
    double T = 1.0;
    int K = 1;
    bool noise = true;  // false: deterministic upwind walk

    double dt() const { return T / K; }
    double x(int i) const { return lo + i * dx; }
    double hi() const { return x(n - 1); }
    double cfl_ratio() const { return dt() / (dx * dx); }

    // Trinomial step with mean beta dt and variance dt (or mean only, without noise).
    LatticeStep step(int i, double beta) const {
        const double h = dt();
        double up, down;
        if (noise) {
            double m2 = (h + beta * beta * h * h) / (dx * dx), m1 = beta * h / dx;
            up = 0.5 * (m2 + m1);
            down = 0.5 * (m2 - m1);
        } else {
            up = std::max(beta, 0.0) * h / dx;
            down = std::max(-beta, 0.0) * h / dx;
        }
        LatticeStep s;
        s.to = {i - 1, i, i + 1};
        s.p = {down, 1.0 - up - down, up};
        if (s.to[0] < 0) s.to[0] = 1;
        if (s.to[2] >= n) s.to[2] = n - 2;
        return s;
    }

    void validate(const ControlSet& B) const {
        if (K < 1) throw Error(ErrorKind::invalid_input, "lattice needs K >= 1");
        if (n < 3) throw Error(ErrorKind::invalid_input, "lattice needs at least 3 nodes");
        if (!(dx > 0.0) || !(T > 0.0)) throw Error(ErrorKind::invalid_input, "lattice spacing and horizon must be positive");
        B.validate();
        if (noise && dt() > dx * dx * (1.0 + 1e-12))
            throw Error(ErrorKind::cfl_violation, "dt > dx^2 for the unit-diffusion walk");
        for (double b : {-B.b_max, B.b_max}) {
            auto s = step(n / 2, b);
            for (double p : s.p)
                if (p < -1e-12) {
                    std::ostringstream o;
                    o << "walk probabilities invalid at |beta| = " << B.b_max << " (dt=" << dt() << ", dx=" << dx
                      << "); refine K or shrink b_max";
                    throw Error(ErrorKind::cfl_violation, o.str());
                }
        }
    }

    // Smallest valid spacing for the control bound, padded 4 walk deviations past [a, b].
    static Lattice covering(double a, double b, double T, int K, const ControlSet& B) {
        Lattice L;
        L.T = T;
        L.K = K;
        const double h = T / K;
        L.dx = std::sqrt(h * (1.0 + B.b_max * B.b_max * h));
        if (L.dx > 2.0 * std::sqrt(h)) throw Error(ErrorKind::cfl_violation, "b_max^2 dt > 3: no valid trinomial spacing");
        const double pad = 4.0 * std::sqrt(T) + 2.0 * L.dx;
        L.n = static_cast<int>(std::ceil((b - a + 2.0 * pad) / L.dx)) + 1;
        L.lo = 0.5 * (a + b) - 0.5 * (L.n - 1) * L.dx;
        L.validate(B);
        return L;
    }

    int nearest(double v) const { return static_cast<int>(std::lround((v - lo) / dx)); }

    // weights on nodes; every atom must sit on a node
    std::vector<double> weights_of(const DiscreteMeasure& m) const {
        if (m.dim() != 1) throw Error(ErrorKind::invalid_input, "lattice measures are 1-d");
        std::vector<double> w(n, 0.0);
        for (std::size_t a = 0; a < m.size(); ++a) {
            double v = m.atom(a)[0];
            int i = nearest(v);
            if (i < 0 || i >= n || std::abs(x(i) - v) > 1e-9 * dx)
                throw Error(ErrorKind::invalid_input, "atom " + format_double(v) + " is not a lattice node");
            w[i] += m.weight(a);
        }
        return w;
    }

    // linear split of each atom between its two neighbouring nodes (preserves the mean)
    std::vector<double> deposit(const DiscreteMeasure& m) const {
        std::vector<double> w(n, 0.0);
        for (std::size_t a = 0; a < m.size(); ++a) {
            double s = (m.atom(a)[0] - lo) / dx;
            if (s < 0.0 || s > n - 1) throw Error(ErrorKind::invalid_input, "atom outside the lattice");
            int i = std::min(static_cast<int>(std::floor(s)), n - 2);
            double f = s - i;
            w[i] += (1.0 - f) * m.weight(a);
            w[i + 1] += f * m.weight(a);
        }
        return w;
    }

    DiscreteMeasure measure_of(const std::vector<double>& w, SpaceTag tag = SpaceTag::state, double drop = 0.0) const {
        std::vector<double> xs, ws;
        for (int i = 0; i < n; ++i)
            if (w[i] > drop) {
                xs.push_back(x(i));
                ws.push_back(w[i]);
            }
        return DiscreteMeasure::on_line(xs, ws, tag);
    }
};

struct ControlPolicy {
    Lattice lattice;
    ControlSet controls;
    std::vector<std::vector<int>> index;  // [k][i] into controls
    std::vector<std::vector<char>> on_boundary;
    std::size_t boundary_hits = 0;
    double consistency_residual = 0.0;  // max |beta* - dH/dq| over the checked nodes
    std::size_t checked_nodes = 0;

    double beta(int k, int i) const { return controls.value(index[k][i]); }

    std::string to_csv() const {
        std::ostringstream o;
        o.precision(17);
        o << "t,x,beta,boundary\n";
        for (int k = 0; k < lattice.K; ++k)
            for (int i = 0; i < lattice.n; ++i)
                o << k * lattice.dt() << "," << lattice.x(i) << "," << beta(k, i) << "," << int(on_boundary[k][i]) << "\n";
        return o.str();
    }
};

enum class ValueTag { HJB, HJB2 };
inline const char* to_string(ValueTag t) { return t == ValueTag::HJB ? "HJB" : "HJB2"; }

struct LatticeValueField {
    Lattice lattice;
    ControlSet controls;
    ValueTag tag = ValueTag::HJB;
    std::vector<std::vector<double>> values;  // [k][i], k = 0..K
    std::vector<std::vector<int>> argmax;     // [k][i], k = 0..K-1
    std::size_t boundary_argmax = 0;

    double at(int k, int i) const { return values[k][i]; }

    std::string to_csv() const {
        std::ostringstream o;
        o.precision(17);
        o << "t,x,value\n";
        for (int k = 0; k <= lattice.K; ++k)
            for (int i = 0; i < lattice.n; ++i) o << k * lattice.dt() << "," << lattice.x(i) << "," << values[k][i] << "\n";
        return o.str();
    }
};

namespace detail {

// running cost L(x_i, beta_c) dt, +inf where L is infinite
inline std::vector<std::vector<double>> running_costs(const LagrangianSpec& L, const Lattice& lat, const ControlSet& B) {
    if (L.dim != 1) throw Error(ErrorKind::unsupported, "lattice control is 1-d");
    std::vector<std::vector<double>> c(lat.n, std::vector<double>(B.count()));
    for (int i = 0; i < lat.n; ++i)
        for (int b = 0; b < B.count(); ++b) {
            ExtReal v = L.eval({lat.x(i)}, {B.value(b)});
            c[i][b] = v.is_finite() ? v.raw() * lat.dt() : std::numeric_limits<double>::infinity();
        }
    for (int i = 0; i < lat.n; ++i)
        if (std::none_of(c[i].begin(), c[i].end(), [](double v) { return std::isfinite(v); }))
            throw Error(ErrorKind::invalid_input, "no control has finite running cost at some node");
    return c;
}

inline double expect(const Lattice& lat, const std::vector<double>& next, int i, double beta) {
    auto s = lat.step(i, beta);
    return s.p[0] * next[s.to[0]] + s.p[1] * next[s.to[1]] + s.p[2] * next[s.to[2]];
}

}  // namespace detail

// Psi(k, i) = max_beta E[Psi(k+1, step)] - L(x_i, beta) dt, Psi(K) = f.
inline LatticeValueField hjb_backward(const LagrangianSpec& L, const std::vector<double>& f, const Lattice& lat,
                                      const ControlSet& B, ValueTag tag = ValueTag::HJB) {
    lat.validate(B);
    if (static_cast<int>(f.size()) != lat.n) throw Error(ErrorKind::invalid_input, "terminal samples do not match the lattice");
    for (double v : f)
        if (!std::isfinite(v)) throw Error(ErrorKind::invalid_input, "terminal samples must be finite");
    auto cost = detail::running_costs(L, lat, B);
    const int nc = B.count();
    LatticeValueField F;
    F.lattice = lat;
    F.controls = B;
    F.tag = tag;
    F.values.assign(lat.K + 1, std::vector<double>(lat.n));
    F.argmax.assign(lat.K, std::vector<int>(lat.n, 0));
    F.values[lat.K] = f;
    for (int k = lat.K - 1; k >= 0; --k) {
        const auto& next = F.values[k + 1];
        for (int i = 0; i < lat.n; ++i) {
            double best = -std::numeric_limits<double>::infinity();
            int arg = 0;
            for (int b = 0; b < nc; ++b) {
                if (!std::isfinite(cost[i][b])) continue;
                double v = detail::expect(lat, next, i, B.value(b)) - cost[i][b];
                if (v > best) {
                    best = v;
                    arg = b;
                }
            }
            F.values[k][i] = best;
            F.argmax[k][i] = arg;
            if (nc > 1 && (arg == 0 || arg == nc - 1)) ++F.boundary_argmax;
        }
    }
    return F;
}

// Law at T and expected running cost of a feedback policy started from nu0.
struct PolicyOutcome {
    std::vector<double> law;
    double cost = 0.0;
};

inline PolicyOutcome run_policy(const LagrangianSpec& L, const ControlPolicy& P, const std::vector<double>& nu0) {
    const auto& lat = P.lattice;
    auto cost = detail::running_costs(L, lat, P.controls);
    PolicyOutcome out;
    std::vector<double> d = nu0;
    for (int k = 0; k < lat.K; ++k) {
        std::vector<double> nd(lat.n, 0.0);
        for (int i = 0; i < lat.n; ++i) {
            if (d[i] == 0.0) continue;
            int b = P.index[k][i];
            out.cost += d[i] * cost[i][b];
            auto s = lat.step(i, P.controls.value(b));
            for (int r = 0; r < 3; ++r) nd[s.to[r]] += d[i] * s.p[r];
        }
        d.swap(nd);
    }
    out.law = std::move(d);
    return out;
}

inline ControlPolicy constant_policy(const Lattice& lat, const ControlSet& B, double beta) {
    ControlPolicy P;
    P.lattice = lat;
    P.controls = B;
    int b = static_cast<int>(std::lround((beta + B.b_max) / B.db));
    if (b < 0 || b >= B.count() || std::abs(B.value(b) - beta) > 1e-12)
        throw Error(ErrorKind::invalid_input, "drift is not in the control set");
    P.index.assign(lat.K, std::vector<int>(lat.n, b));
    P.on_boundary.assign(lat.K, std::vector<char>(lat.n, 0));
    return P;
}

// Argmax drift of the DP plus the check beta* ~ dH/dq(x, grad psi). The
// residual is taken over nodes the optimal walk from `start` visits with
// probability above `support_mass` (all interior nodes when start is empty),
// skipping the two end nodes of the grid and nodes whose argmax hit the
// control bound. Reflection bends psi near the ends, so far tails are left out.
inline ControlPolicy extract_drift(const LatticeValueField& F, const LagrangianSpec& L,
                                   const std::vector<double>& start = {}, double support_mass = 1e-4) {
    const auto& lat = F.lattice;
    const int nc = F.controls.count();
    ControlPolicy P;
    P.lattice = lat;
    P.controls = F.controls;
    P.index = F.argmax;
    P.on_boundary.assign(lat.K, std::vector<char>(lat.n, 0));
    for (int k = 0; k < lat.K; ++k)
        for (int i = 0; i < lat.n; ++i)
            if (nc > 1 && (P.index[k][i] == 0 || P.index[k][i] == nc - 1)) {
                P.on_boundary[k][i] = 1;
                ++P.boundary_hits;
            }
    std::vector<std::vector<char>> visit(lat.K, std::vector<char>(lat.n, 1));
    if (!start.empty()) {
        std::vector<double> d = start;
        for (int k = 0; k < lat.K; ++k) {
            std::vector<double> nd(lat.n, 0.0);
            for (int i = 0; i < lat.n; ++i) {
                visit[k][i] = d[i] > support_mass;
                if (d[i] == 0.0) continue;
                auto s = lat.step(i, P.beta(k, i));
                for (int r = 0; r < 3; ++r) nd[s.to[r]] += d[i] * s.p[r];
            }
            d.swap(nd);
        }
    }
    auto H = hamiltonian(L);
    for (int k = 0; k < lat.K; ++k)
        for (int i = 1; i + 1 < lat.n; ++i) {
            if (!visit[k][i] || P.on_boundary[k][i]) continue;
            double q = (F.values[k + 1][i + 1] - F.values[k + 1][i - 1]) / (2.0 * lat.dx);
            double target = H.dH_dq({lat.x(i)}, {q})[0];
            P.consistency_residual = std::max(P.consistency_residual, std::abs(P.beta(k, i) - target));
            ++P.checked_nodes;
        }
    return P;
}

// ---------------------------------------------------------------------------
// Occupation-measure linear programs. Column m_k(i, c) is the probability of
// being at node i at step k and using control c. Rows:
//   start(i):  sum_c m_0(i,c) [- inflow from a coupling]  = given
//   mass_k(j): sum_c m_k(j,c) - sum_{i,c} m_{k-1}(i,c) p_c(i,j) = 0,  k = 1..K-1
//   end(j):   -sum_{i,c} m_{K-1}(i,c) p_c(i,j) [+ outflow to a coupling] = given
// Rows sum to zero, so one end row is dropped by the caller.

namespace detail {

struct OccupationLayout {
    const Lattice* lat = nullptr;
    std::vector<std::vector<double>> cost;  // per node and control, already times dt
    std::vector<std::array<int, 3>> cols;   // (k, i, c) per column
    int first = 0;                          // column offset
    int row0 = 0;                           // first start row; end rows start at row0 + K n

    int start_row(int i) const { return row0 + i; }
    int mass_row(int k, int j) const { return row0 + k * lat->n + j; }
    int end_row(int j) const { return row0 + lat->K * lat->n + j; }
};

inline OccupationLayout occupation_columns(const LagrangianSpec& L, const Lattice& lat, const ControlSet& B, int col0,
                                           int row0, std::vector<Eigen::Triplet<double>>& trip, std::vector<double>& c) {
    OccupationLayout lay;
    lay.lat = &lat;
    lay.cost = running_costs(L, lat, B);
    lay.first = col0;
    lay.row0 = row0;
    int col = col0;
    for (int k = 0; k < lat.K; ++k)
        for (int i = 0; i < lat.n; ++i)
            for (int b = 0; b < B.count(); ++b) {
                if (!std::isfinite(lay.cost[i][b])) continue;
                lay.cols.push_back({k, i, b});
                c.push_back(lay.cost[i][b]);
                trip.emplace_back(lay.mass_row(k, i), col, 1.0);
                auto s = lat.step(i, B.value(b));
                for (int r = 0; r < 3; ++r) {
                    if (s.p[r] == 0.0) continue;
                    if (k + 1 < lat.K) trip.emplace_back(lay.mass_row(k + 1, s.to[r]), col, -s.p[r]);
                    else trip.emplace_back(lay.end_row(s.to[r]), col, -s.p[r]);
                }
                ++col;
            }
    return lay;
}

inline void occupation_scale(const OccupationLayout& lay, const ControlSet& B, const std::vector<std::vector<double>>& w,
                             Eigen::VectorXd& scale) {
    for (std::size_t j = 0; j < lay.cols.size(); ++j) {
        auto [k, i, b] = lay.cols[j];
        scale(lay.first + j) = w[k][i] / B.count();
    }
}

// randomized policy and terminal law read off an occupation solution
inline PolicyOutcome occupation_outcome(const OccupationLayout& lay, const ControlSet& B, const Eigen::VectorXd& x,
                                        const std::vector<double>& start) {
    const auto& lat = *lay.lat;
    const int nc = B.count();
    std::vector<double> occ(static_cast<std::size_t>(lat.K) * lat.n * nc, 0.0);
    for (std::size_t j = 0; j < lay.cols.size(); ++j) {
        auto [k, i, b] = lay.cols[j];
        occ[(static_cast<std::size_t>(k) * lat.n + i) * nc + b] = std::max(x(lay.first + j), 0.0);
    }
    PolicyOutcome out;
    std::vector<double> d = start;
    for (int k = 0; k < lat.K; ++k) {
        std::vector<double> nd(lat.n, 0.0);
        for (int i = 0; i < lat.n; ++i) {
            if (d[i] <= 0.0) continue;
            const double* row = &occ[(static_cast<std::size_t>(k) * lat.n + i) * nc];
            double tot = std::accumulate(row, row + nc, 0.0);
            for (int b = 0; b < nc; ++b) {
                double w = tot > 0.0 ? row[b] / tot : (b == nc / 2 ? 1.0 : 0.0);
                if (w == 0.0 || !std::isfinite(lay.cost[i][b])) continue;
                double m = d[i] * w;
                out.cost += m * lay.cost[i][b];
                auto s = lat.step(i, B.value(b));
                for (int r = 0; r < 3; ++r) nd[s.to[r]] += m * s.p[r];
            }
        }
        d.swap(nd);
    }
    out.law = std::move(d);
    return out;
}

inline void check_lattice_weights(const Lattice& lat, const std::vector<double>& w, const char* what) {
    if (static_cast<int>(w.size()) != lat.n) throw Error(ErrorKind::invalid_input, std::string(what) + " does not match the lattice");
    double s = 0.0;
    for (double v : w) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorKind::invalid_input, std::string(what) + " has a negative weight");
        s += v;
    }
    if (std::abs(s - 1.0) > 1e-9) throw Error(ErrorKind::invalid_input, std::string(what) + " is not a probability vector");
}

// nodes reachable at step K from the support of w
inline std::vector<char> reachable(const Lattice& lat, const ControlSet& B, const std::vector<double>& w) {
    std::vector<char> cur(lat.n);
    for (int i = 0; i < lat.n; ++i) cur[i] = w[i] > 0.0;
    for (int k = 0; k < lat.K; ++k) {
        std::vector<char> nx(lat.n, 0);
        for (int i = 0; i < lat.n; ++i) {
            if (!cur[i]) continue;
            for (int b = 0; b < B.count(); ++b) {
                auto s = lat.step(i, B.value(b));
                for (int r = 0; r < 3; ++r)
                    if (s.p[r] > 0.0) nx[s.to[r]] = 1;
            }
        }
        cur.swap(nx);
    }
    return cur;
}

// Expected size of the optimal occupation, used only to scale the LP. The walk
// with a uniformly random control, bridged to whichever end laws are given by
// a few alternating fits (forward from start, backward from end).
inline std::vector<std::vector<double>> reference_occupation(const Lattice& lat, const ControlSet& B,
                                                             const std::vector<double>* start,
                                                             const std::vector<double>* end) {
    const int n = lat.n, K = lat.K, nc = B.count();
    std::vector<LatticeStep> P(n);
    std::vector<std::array<double, 3>> avg(n);
    for (int i = 0; i < n; ++i) {
        avg[i] = {0.0, 0.0, 0.0};
        for (int b = 0; b < nc; ++b) {
            P[i] = lat.step(i, B.value(b));
            for (int r = 0; r < 3; ++r) avg[i][r] += P[i].p[r] / nc;
        }
    }
    auto fwd = [&](const std::vector<double>& a) {
        std::vector<double> o(n, 0.0);
        for (int i = 0; i < n; ++i)
            for (int r = 0; r < 3; ++r) o[P[i].to[r]] += a[i] * avg[i][r];
        return o;
    };
    auto bwd = [&](const std::vector<double>& b) {
        std::vector<double> o(n, 0.0);
        for (int i = 0; i < n; ++i)
            for (int r = 0; r < 3; ++r) o[i] += avg[i][r] * b[P[i].to[r]];
        return o;
    };
    auto floor_div = [](double a, double b) { return b > 1e-300 ? a / b : 0.0; };
    std::vector<std::vector<double>> fa(K + 1, std::vector<double>(n, 1.0)), gb(K + 1, std::vector<double>(n, 1.0));
    std::vector<double> a0 = start ? *start : std::vector<double>(n, 1.0 / n);
    for (int sweep = 0; sweep < (start && end ? 8 : 1); ++sweep) {
        if (end) {
            for (int j = 0; j < n; ++j) gb[K][j] = floor_div((*end)[j], sweep == 0 && start ? 1.0 : fa[K][j]);
            if (sweep == 0 && start) {
                // first pass: plain forward law to normalize against
                fa[0] = a0;
                for (int k = 0; k < K; ++k) fa[k + 1] = fwd(fa[k]);
                for (int j = 0; j < n; ++j) gb[K][j] = floor_div((*end)[j], fa[K][j]);
            }
            for (int k = K - 1; k >= 0; --k) gb[k] = bwd(gb[k + 1]);
        }
        if (start) {
            for (int i = 0; i < n; ++i) fa[0][i] = end ? floor_div(a0[i], gb[0][i]) : a0[i];
            for (int k = 0; k < K; ++k) fa[k + 1] = fwd(fa[k]);
        }
    }
    std::vector<std::vector<double>> w(K + 1, std::vector<double>(n));
    for (int k = 0; k <= K; ++k) {
        double tot = 0.0, mx = 0.0;
        for (int i = 0; i < n; ++i) {
            w[k][i] = (start ? fa[k][i] : 1.0) * (end ? gb[k][i] : 1.0);
            tot += w[k][i];
        }
        for (int i = 0; i < n; ++i) mx = std::max(mx, w[k][i] /= std::max(tot, 1e-300));
        for (int i = 0; i < n; ++i) w[k][i] = std::max(w[k][i], 1e-200 * mx);
    }
    return w;
}

inline Eigen::SparseMatrix<double> assemble(int rows, int cols, const std::vector<Eigen::Triplet<double>>& trip) {
    Eigen::SparseMatrix<double> A(rows, cols);
    A.setFromTriplets(trip.begin(), trip.end());
    A.makeCompressed();
    return A;
}

// Removes one redundant row. The heaviest marginal row is the one to drop: a
// row with tiny mass leaves the free constant in the potentials ill-determined.
inline void drop_row(LinearProgram& lp, const std::vector<Eigen::Triplet<double>>& trip, const Eigen::VectorXd& bfull,
                     int ncols, int dropped) {
    const int rows = static_cast<int>(bfull.size()) - 1;
    std::vector<Eigen::Triplet<double>> kept;
    kept.reserve(trip.size());
    for (const auto& t : trip)
        if (t.row() != dropped) kept.emplace_back(t.row() < dropped ? t.row() : t.row() - 1, t.col(), t.value());
    lp.A = assemble(rows, ncols, kept);
    lp.b.resize(rows);
    for (int r = 0, q = 0; r <= rows; ++r)
        if (r != dropped) lp.b(q++) = bfull(r);
}

inline double full_dual(const Eigen::VectorXd& y, int row, int dropped) {
    if (row == dropped) return 0.0;
    return y(row < dropped ? row : row - 1);
}

inline int heaviest(const std::vector<double>& w) {
    return static_cast<int>(std::max_element(w.begin(), w.end()) - w.begin());
}

inline double law_mismatch(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m += std::abs(a[i] - b[i]);
    return m;
}

}  // namespace detail

struct StochasticOptions {
    double gap_tol = 1e-4;  // relative primal/dual gap for the certified flag
    LPOptions lp;
};

struct MTResult {
    double value = 0.0;       // primal LP value
    double dual_value = 0.0;  // F(f) = sum f nuT - sum Psi0_f nu0, recomputed by the DP
    double gap = 0.0;
    std::vector<double> potential;  // f on the nodes
    double law_mismatch = 0.0;      // L1 distance between the walk law and nuT
    bool certified = false;
    std::string status;
    int lp_iterations = 0;
};

namespace detail {

inline double dp_objective(const LagrangianSpec& L, const Lattice& lat, const ControlSet& B, const std::vector<double>& f,
                           const std::vector<double>& nu0, const std::vector<double>& nuT) {
    auto F = hjb_backward(L, f, lat, B);
    double v = 0.0;
    for (int i = 0; i < lat.n; ++i) v += f[i] * nuT[i] - F.values[0][i] * nu0[i];
    return v;
}

inline double rel_gap(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(a)); }

}  // namespace detail

// C^s_T(nu0, nuT) on the lattice: min expected running cost over randomized
// feedback policies carrying nu0 to nuT, solved as the occupation LP. The LP
// duals on the end rows give the terminal potential f.
inline MTResult mt_cost(const LagrangianSpec& L, const std::vector<double>& nu0, const std::vector<double>& nuT,
                        const Lattice& lat, const ControlSet& B, const StochasticOptions& opt = {}) {
    lat.validate(B);
    detail::check_lattice_weights(lat, nu0, "nu0");
    detail::check_lattice_weights(lat, nuT, "nuT");
    auto reach = detail::reachable(lat, B, nu0);
    for (int j = 0; j < lat.n; ++j)
        if (nuT[j] > 0.0 && !reach[j])
            throw Error(ErrorKind::infeasible, "nuT charges node " + format_double(lat.x(j)) + " that no policy reaches");
    MTResult r;
    auto cost = detail::running_costs(L, lat, B);

    // zero drift is free and feasible: value 0 with f = 0 as the exact certificate
    const int zero = B.count() / 2;
    bool zero_free = true;
    for (int i = 0; i < lat.n && zero_free; ++i) {
        if (cost[i][zero] != 0.0) zero_free = false;
        for (double c : cost[i]) zero_free = zero_free && c >= 0.0;
    }
    if (zero_free) {
        auto out = run_policy(L, constant_policy(lat, B, 0.0), nu0);
        if (detail::law_mismatch(out.law, nuT) <= 1e-12) {
            r.potential.assign(lat.n, 0.0);
            r.dual_value = detail::dp_objective(L, lat, B, r.potential, nu0, nuT);
            r.law_mismatch = detail::law_mismatch(out.law, nuT);
            r.certified = r.dual_value == 0.0;
            r.status = "zero-drift";
            return r;
        }
    }

    std::vector<Eigen::Triplet<double>> trip;
    std::vector<double> c;
    auto lay = detail::occupation_columns(L, lat, B, 0, 0, trip, c);
    Eigen::VectorXd bfull = Eigen::VectorXd::Zero(lat.K * lat.n + lat.n);
    for (int i = 0; i < lat.n; ++i) bfull(lay.start_row(i)) = nu0[i];
    for (int j = 0; j < lat.n; ++j) bfull(lay.end_row(j)) = -nuT[j];
    const int dropped = lay.end_row(detail::heaviest(nuT));
    LinearProgram lp;
    detail::drop_row(lp, trip, bfull, static_cast<int>(c.size()), dropped);
    lp.c = Eigen::Map<Eigen::VectorXd>(c.data(), c.size());
    lp.col_scale.resize(c.size());
    detail::occupation_scale(lay, B, detail::reference_occupation(lat, B, &nu0, &nuT), lp.col_scale);
    auto sol = solve_lp(lp, opt.lp);
    if (sol.status == LPStatus::infeasible) {
        r.value = std::numeric_limits<double>::infinity();
        r.status = to_string(sol.status);
        r.lp_iterations = sol.iterations;
        r.potential.assign(lat.n, 0.0);
        r.dual_value = detail::dp_objective(L, lat, B, r.potential, nu0, nuT);
        return r;
    }
    r.value = sol.primal_value;
    r.lp_iterations = sol.iterations;
    r.potential.assign(lat.n, 0.0);
    for (int j = 0; j < lat.n; ++j) r.potential[j] = -detail::full_dual(sol.y, lay.end_row(j), dropped);
    r.dual_value = detail::dp_objective(L, lat, B, r.potential, nu0, nuT);
    r.gap = detail::rel_gap(r.value, r.dual_value);
    auto out = detail::occupation_outcome(lay, B, sol.x, nu0);
    r.law_mismatch = detail::law_mismatch(out.law, nuT);
    r.status = to_string(sol.status);
    r.certified = sol.usable() && r.gap <= opt.gap_tol && r.law_mismatch <= 1e-6;
    return r;
}

// Lower stochastic ballistic cost: inf over couplings pi(v, x) of costate atoms
// with lattice nodes plus the occupation measure carrying the node marginal to
// nuT, one joint LP. The certificate is the dual formula
//   sum f nuT + sum_a mu0(a) min_i (v_a x_i - Psi0_f(x_i))
// recomputed from the DP at the recovered f.
struct StochasticBallisticResult {
    double value = 0.0;
    double certificate = 0.0;  // dual value (min) or upper bound (max)
    double lower = 0.0, upper = 0.0;
    double gap = 0.0;  // relative width of [lower, upper]
    bool certified = false;
    std::string status;
    std::vector<double> interpolant;  // node weights of the time-0 law (min) or the terminal costate law (max)
    std::vector<double> potential;    // f (min) or g on the nuT atoms (max)
    std::vector<std::string> notes;
    int lp_iterations = 0;
};

inline StochasticBallisticResult ballistic_min_stoch(const LagrangianSpec& L, const DiscreteMeasure& mu0,
                                                     const std::vector<double>& nuT, const Lattice& lat,
                                                     const ControlSet& B, const StochasticOptions& opt = {}) {
    lat.validate(B);
    if (mu0.dim() != 1) throw Error(ErrorKind::unsupported, "lattice control is 1-d");
    if (mu0.tag() != SpaceTag::costate) throw Error(ErrorKind::invalid_input, "mu0 must be tagged costate");
    detail::check_lattice_weights(lat, nuT, "nuT");
    const int A = static_cast<int>(mu0.size());
    std::vector<Eigen::Triplet<double>> trip;
    std::vector<double> c;
    // coupling columns first: pi(a, i) in row a (mu0 marginal) and -1 in start(i)
    for (int a = 0; a < A; ++a)
        for (int i = 0; i < lat.n; ++i) {
            c.push_back(mu0.atom(a)[0] * lat.x(i));
            trip.emplace_back(a, a * lat.n + i, 1.0);
            trip.emplace_back(A + i, a * lat.n + i, -1.0);
        }
    auto lay = detail::occupation_columns(L, lat, B, A * lat.n, A, trip, c);
    Eigen::VectorXd bfull = Eigen::VectorXd::Zero(A + lat.K * lat.n + lat.n);
    for (int a = 0; a < A; ++a) bfull(a) = mu0.weight(a);
    for (int j = 0; j < lat.n; ++j) bfull(lay.end_row(j)) = -nuT[j];
    const int dropped = lay.end_row(detail::heaviest(nuT));
    LinearProgram lp;
    detail::drop_row(lp, trip, bfull, static_cast<int>(c.size()), dropped);
    lp.c = Eigen::Map<Eigen::VectorXd>(c.data(), c.size());
    {
        auto w = detail::reference_occupation(lat, B, nullptr, &nuT);
        lp.col_scale.resize(c.size());
        for (int a = 0; a < A; ++a)
            for (int i = 0; i < lat.n; ++i) lp.col_scale(a * lat.n + i) = mu0.weight(a) * w[0][i] + 1e-300;
        detail::occupation_scale(lay, B, w, lp.col_scale);
    }
    auto sol = solve_lp(lp, opt.lp);

    StochasticBallisticResult r;
    r.lp_iterations = sol.iterations;
    r.status = to_string(sol.status);
    r.value = sol.primal_value;
    r.interpolant.assign(lat.n, 0.0);
    for (int a = 0; a < A; ++a)
        for (int i = 0; i < lat.n; ++i) r.interpolant[i] += std::max(sol.x(a * lat.n + i), 0.0);
    r.potential.assign(lat.n, 0.0);
    for (int j = 0; j < lat.n; ++j) r.potential[j] = -detail::full_dual(sol.y, lay.end_row(j), dropped);
    auto F = hjb_backward(L, r.potential, lat, B);
    double d = 0.0;
    for (int j = 0; j < lat.n; ++j) d += r.potential[j] * nuT[j];
    for (int a = 0; a < A; ++a) {
        double m = std::numeric_limits<double>::infinity();
        for (int i = 0; i < lat.n; ++i) m = std::min(m, mu0.atom(a)[0] * lat.x(i) - F.values[0][i]);
        d += mu0.weight(a) * m;
    }
    r.certificate = d;
    r.lower = d;
    r.upper = r.value;
    r.gap = detail::rel_gap(r.value, d);
    if (F.boundary_argmax > 0) r.notes.push_back("DP argmax touched the control bound");
    r.certified = sol.usable() && r.gap <= opt.gap_tol;
    return r;
}

// sum g nuT + sum Psi~0_{g*} mu0 for any g on the nuT atoms; an upper bound on
// the lattice value of the max problem. g* is taken over the atoms.
inline double max_dual_bound(const LagrangianSpec& L, const std::vector<double>& start, const DiscreteMeasure& nuT,
                             const Lattice& lat, const ControlSet& B, const std::vector<double>& g,
                             std::size_t* boundary_argmax = nullptr) {
    if (g.size() != nuT.size()) throw Error(ErrorKind::invalid_input, "g must have one value per nuT atom");
    std::vector<double> gstar(lat.n);
    for (int i = 0; i < lat.n; ++i) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < g.size(); ++j) m = std::max(m, nuT.atom(j)[0] * lat.x(i) - g[j]);
        gstar[i] = m;
    }
    auto F = hjb_backward(dual_lagrangian(L), gstar, lat, B, ValueTag::HJB2);
    if (boundary_argmax) *boundary_argmax = F.boundary_argmax;
    double up = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) up += g[j] * nuT.weight(j);
    for (int i = 0; i < lat.n; ++i) up += start[i] * F.values[0][i];
    return up;
}

// Upper stochastic ballistic cost on a costate lattice:
//   sup E[<X, V(T)>] - E int L~(V, drift) dt,  V(0) ~ mu0,  X ~ nuT.
// One LP (occupation measure in costate space plus the terminal coupling with
// nuT). Upper bound: min over g of sum g nuT + sum Psi~0_{g*} mu0 evaluated by
// the HJB2 DP at the LP's g. Lower bound: value of the LP's randomized policy
// re-simulated forward and paired with nuT by an exact transport solve.
inline StochasticBallisticResult ballistic_max_stoch(const LagrangianSpec& L, const DiscreteMeasure& mu0,
                                                     const DiscreteMeasure& nuT, const Lattice& lat, const ControlSet& B,
                                                     const StochasticOptions& opt = {}) {
    lat.validate(B);
    if (mu0.dim() != 1 || nuT.dim() != 1) throw Error(ErrorKind::unsupported, "lattice control is 1-d");
    if (mu0.tag() != SpaceTag::costate || nuT.tag() != SpaceTag::state)
        throw Error(ErrorKind::invalid_input, "mu0 must be costate and nuT state");
    LagrangianSpec Lt = dual_lagrangian(L);
    StochasticBallisticResult r;
    std::vector<double> start;
    try {
        start = lat.weights_of(mu0);
    } catch (const Error&) {
        start = lat.deposit(mu0);
        r.notes.push_back("mu0 split linearly onto neighbouring costate nodes");
    }
    const int J = static_cast<int>(nuT.size());
    std::vector<Eigen::Triplet<double>> trip;
    std::vector<double> c;
    auto lay = detail::occupation_columns(Lt, lat, B, 0, 0, trip, c);
    // coupling gamma(j, i): +1 in end(i), -1 in the nuT row of atom j
    const int atom_row0 = lat.K * lat.n + lat.n;
    const int gcol0 = static_cast<int>(c.size());
    for (int j = 0; j < J; ++j)
        for (int i = 0; i < lat.n; ++i) {
            int col = gcol0 + j * lat.n + i;
            c.push_back(-nuT.atom(j)[0] * lat.x(i));
            trip.emplace_back(lay.end_row(i), col, 1.0);
            trip.emplace_back(atom_row0 + j, col, -1.0);
        }
    Eigen::VectorXd bfull = Eigen::VectorXd::Zero(atom_row0 + J);
    for (int i = 0; i < lat.n; ++i) bfull(lay.start_row(i)) = start[i];
    for (int j = 0; j < J; ++j) bfull(atom_row0 + j) = -nuT.weight(j);
    const int dropped = atom_row0 + detail::heaviest(nuT.weights());
    LinearProgram lp;
    detail::drop_row(lp, trip, bfull, static_cast<int>(c.size()), dropped);
    lp.c = Eigen::Map<Eigen::VectorXd>(c.data(), c.size());
    {
        auto w = detail::reference_occupation(lat, B, &start, nullptr);
        lp.col_scale.resize(c.size());
        detail::occupation_scale(lay, B, w, lp.col_scale);
        for (int j = 0; j < J; ++j)
            for (int i = 0; i < lat.n; ++i) lp.col_scale(gcol0 + j * lat.n + i) = nuT.weight(j) * w[lat.K][i] + 1e-300;
    }
    auto sol = solve_lp(lp, opt.lp);
    r.lp_iterations = sol.iterations;
    r.status = to_string(sol.status);
    r.value = -sol.primal_value;

    // upper bound from g
    r.potential.assign(J, 0.0);
    for (int j = 0; j < J; ++j) r.potential[j] = detail::full_dual(sol.y, atom_row0 + j, dropped);
    std::size_t hits = 0;
    r.upper = max_dual_bound(L, start, nuT, lat, B, r.potential, &hits);
    r.certificate = r.upper;
    if (hits > 0) r.notes.push_back("HJB2 argmax touched the control bound");

    // lower bound from the extracted policy
    auto out = detail::occupation_outcome(lay, B, sol.x, start);
    r.interpolant = out.law;
    auto muT = lat.measure_of(out.law, SpaceTag::costate);
    auto plan = brenier_W(muT, nuT, Sense::max);
    r.lower = plan.value - out.cost;
    r.gap = (r.upper - r.lower) / std::max(1.0, std::abs(r.upper));
    r.certified = sol.usable() && r.gap <= opt.gap_tol && r.lower <= r.upper + 1e-9;
    return r;
}

}  // namespace ballistic
