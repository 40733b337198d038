#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <functional>
#include <numeric>
#include <queue>
#include <string>
#include <vector>

#include "core.hpp"
#include "measures.hpp"

namespace ballistic {

enum class Sense { min, max };

inline const char* to_string(Sense s) { return s == Sense::min ? "min" : "max"; }

class CostMatrix {
public:
    CostMatrix() = default;
    CostMatrix(std::size_t rows, std::size_t cols, std::string provenance = "")
        : rows_(rows), cols_(cols), entries_(rows * cols, ExtReal(0.0)), provenance_(std::move(provenance)) {}

    static CostMatrix from_function(const DiscreteMeasure& src, const DiscreteMeasure& tgt,
                                    const std::function<ExtReal(const Point&, const Point&)>& c,
                                    std::string provenance) {
        CostMatrix m(src.size(), tgt.size(), std::move(provenance));
        for (std::size_t i = 0; i < src.size(); ++i)
            for (std::size_t j = 0; j < tgt.size(); ++j) m.set(i, j, c(src.atom(i), tgt.atom(j)));
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    const ExtReal& at(std::size_t i, std::size_t j) const { return entries_[i * cols_ + j]; }
    void set(std::size_t i, std::size_t j, ExtReal v) {
        if (v.is_neg_inf()) throw Error(ErrorKind::invalid_input, "cost entry -inf is not allowed");
        entries_[i * cols_ + j] = v;
    }
    const std::string& provenance() const { return provenance_; }

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<ExtReal> entries_;
    std::string provenance_;
};

struct TransportPlan {
    Eigen::MatrixXd coupling;
    double value = 0.0;       // primal value sum pi c
    double dual_value = 0.0;  // sum nu phi1 - sum mu phi0
    std::vector<double> dual_source, dual_target;
    Sense sense = Sense::min;
    std::size_t pivots = 0;

    // plan support entries above a relative threshold
    std::vector<std::pair<std::size_t, std::size_t>> support(double thresh = 1e-14) const {
        std::vector<std::pair<std::size_t, std::size_t>> s;
        for (Eigen::Index i = 0; i < coupling.rows(); ++i)
            for (Eigen::Index j = 0; j < coupling.cols(); ++j)
                if (coupling(i, j) > thresh) s.emplace_back(i, j);
        return s;
    }
};

namespace detail {

// Dense transportation simplex on a spanning-tree basis (MODI potentials).
// Forbidden arcs are driven out by a first phase that prices them at 1.
class TransportationSimplex {
public:
    TransportationSimplex(const std::vector<double>& a, const std::vector<double>& b, const std::vector<double>& cost,
                          const std::vector<char>& forbidden)
        : n_(a.size()), m_(b.size()), a_(a), b_(b), c_(cost), forb_(forbidden) {}

    void solve() {
        initial_basis();
        std::vector<double> phase1(n_ * m_, 0.0);
        bool any_forbidden = false;
        for (std::size_t k = 0; k < n_ * m_; ++k)
            if (forb_[k]) phase1[k] = 1.0, any_forbidden = true;
        if (any_forbidden) {
            iterate(phase1, /*allow_forbidden=*/true, 1.0);
            double bad = 0.0;
            for (std::size_t k = 0; k < n_ * m_; ++k)
                if (forb_[k]) bad += x_[k];
            if (bad > 1e-12) throw Error(ErrorKind::infeasible, "every coupling uses a +inf cost entry");
            for (std::size_t k = 0; k < n_ * m_; ++k)
                if (forb_[k]) x_[k] = 0.0;
            evict_forbidden();
        }
        std::vector<double> phase2 = c_;
        for (std::size_t k = 0; k < n_ * m_; ++k)
            if (forb_[k]) phase2[k] = 0.0;  // only basic bridges can carry this fake price
        double scale = 1.0;
        for (std::size_t k = 0; k < n_ * m_; ++k)
            if (!forb_[k]) scale = std::max(scale, std::abs(c_[k]));
        iterate(phase2, false, scale);
        potentials(phase2);
    }

    const std::vector<double>& flow() const { return x_; }
    const std::vector<double>& u() const { return u_; }
    const std::vector<double>& w() const { return w_; }
    std::size_t pivots() const { return pivots_; }

private:
    std::size_t idx(std::size_t i, std::size_t j) const { return i * m_ + j; }

    void initial_basis() {
        x_.assign(n_ * m_, 0.0);
        basic_.assign(n_ * m_, 0);
        cells_.clear();
        std::vector<double> sa = a_, sb = b_;
        std::size_t i = 0, j = 0;
        while (true) {
            double q = std::min(sa[i], sb[j]);
            q = std::max(q, 0.0);
            x_[idx(i, j)] = q;
            basic_[idx(i, j)] = 1;
            cells_.push_back(idx(i, j));
            sa[i] -= q;
            sb[j] -= q;
            if (i == n_ - 1 && j == m_ - 1) break;
            if (i == n_ - 1) ++j;
            else if (j == m_ - 1) ++i;
            else if (sa[i] <= sb[j]) ++i;
            else ++j;
        }
    }

    // BFS over the basis tree from row 0; nodes 0..n-1 rows, n..n+m-1 columns
    void build_tree() {
        const std::size_t N = n_ + m_;
        adj_.assign(N, {});
        for (std::size_t k : cells_) {
            std::size_t i = k / m_, j = k % m_;
            adj_[i].push_back(k);
            adj_[n_ + j].push_back(k);
        }
        parent_edge_.assign(N, SIZE_MAX);
        parent_.assign(N, SIZE_MAX);
        depth_.assign(N, 0);
        order_.clear();
        std::vector<char> seen(N, 0);
        // the tree may be a forest only transiently; root every component
        for (std::size_t r = 0; r < N; ++r) {
            if (seen[r]) continue;
            std::queue<std::size_t> q;
            q.push(r);
            seen[r] = 1;
            while (!q.empty()) {
                std::size_t v = q.front();
                q.pop();
                order_.push_back(v);
                for (std::size_t k : adj_[v]) {
                    std::size_t i = k / m_, j = k % m_;
                    std::size_t o = (v < n_) ? n_ + j : i;
                    if (seen[o]) continue;
                    seen[o] = 1;
                    parent_[o] = v;
                    parent_edge_[o] = k;
                    depth_[o] = depth_[v] + 1;
                    q.push(o);
                }
            }
        }
    }

    void potentials(const std::vector<double>& cost) {
        build_tree();
        u_.assign(n_, 0.0);
        w_.assign(m_, 0.0);
        for (std::size_t v : order_) {
            if (parent_[v] == SIZE_MAX) continue;
            std::size_t k = parent_edge_[v];
            std::size_t i = k / m_, j = k % m_;
            if (v >= n_) w_[j] = cost[k] - u_[i];
            else u_[i] = cost[k] - w_[j];
        }
    }

    void iterate(const std::vector<double>& cost, bool allow_forbidden, double scale) {
        const double eps = 1e-11 * scale;
        std::size_t degenerate_run = 0;
        const std::size_t bland_after = 5 * (n_ + m_);
        const std::size_t max_pivots = 50 * (n_ + m_) * (n_ + m_) + 1000;
        for (std::size_t it = 0; it < max_pivots; ++it) {
            potentials(cost);
            const bool bland = degenerate_run > bland_after;
            std::size_t enter = SIZE_MAX;
            double best = -eps;
            for (std::size_t i = 0; i < n_ && !(bland && enter != SIZE_MAX); ++i)
                for (std::size_t j = 0; j < m_; ++j) {
                    std::size_t k = idx(i, j);
                    if (basic_[k] || (!allow_forbidden && forb_[k])) continue;
                    double r = cost[k] - u_[i] - w_[j];
                    if (r < best) {
                        best = r;
                        enter = k;
                        if (bland) break;
                    }
                }
            if (enter == SIZE_MAX) return;
            pivot(enter, degenerate_run);
            ++pivots_;
        }
        throw Error(ErrorKind::solver_failure, "transportation simplex exceeded its pivot budget");
    }

    void pivot(std::size_t enter, std::size_t& degenerate_run) {
        std::size_t i = enter / m_, j = enter % m_;
        // tree path from column node j up to row node i
        std::size_t a = n_ + j, b = i;
        std::vector<std::size_t> path_a, path_b;
        while (depth_[a] > depth_[b]) path_a.push_back(parent_edge_[a]), a = parent_[a];
        while (depth_[b] > depth_[a]) path_b.push_back(parent_edge_[b]), b = parent_[b];
        while (a != b) {
            path_a.push_back(parent_edge_[a]);
            a = parent_[a];
            path_b.push_back(parent_edge_[b]);
            b = parent_[b];
        }
        std::vector<std::size_t> path = path_a;
        path.insert(path.end(), path_b.rbegin(), path_b.rend());
        // signs along cycle: enter +, path[0] -, path[1] +, ...
        double theta = std::numeric_limits<double>::infinity();
        std::size_t leave = SIZE_MAX;
        for (std::size_t t = 0; t < path.size(); t += 2) {
            std::size_t k = path[t];
            if (x_[k] < theta || (x_[k] == theta && k < leave)) {
                theta = x_[k];
                leave = k;
            }
        }
        if (leave == SIZE_MAX) throw Error(ErrorKind::solver_failure, "no leaving arc on pivot cycle");
        for (std::size_t t = 0; t < path.size(); ++t) {
            std::size_t k = path[t];
            x_[k] += (t % 2 == 0) ? -theta : theta;
            if (x_[k] < 0.0) x_[k] = 0.0;
        }
        x_[enter] = theta;
        x_[leave] = 0.0;
        basic_[leave] = 0;
        basic_[enter] = 1;
        *std::find(cells_.begin(), cells_.end(), leave) = enter;
        degenerate_run = theta > 0.0 ? 0 : degenerate_run + 1;
    }

    // replace zero-flow forbidden basic arcs by allowed arcs across the same cut
    void evict_forbidden() {
        for (std::size_t pos = 0; pos < cells_.size(); ++pos) {
            std::size_t e = cells_[pos];
            if (!forb_[e]) continue;
            // components of tree minus e
            const std::size_t N = n_ + m_;
            std::vector<std::vector<std::size_t>> adj(N);
            for (std::size_t k : cells_) {
                if (k == e) continue;
                adj[k / m_].push_back(n_ + k % m_);
                adj[n_ + k % m_].push_back(k / m_);
            }
            std::vector<int> comp(N, -1);
            std::queue<std::size_t> q;
            q.push(e / m_);
            comp[e / m_] = 0;
            while (!q.empty()) {
                std::size_t v = q.front();
                q.pop();
                for (std::size_t o : adj[v])
                    if (comp[o] < 0) comp[o] = 0, q.push(o);
            }
            for (std::size_t k = 0; k < n_ * m_; ++k) {
                if (forb_[k] || basic_[k]) continue;
                bool ci = comp[k / m_] == 0, cj = comp[n_ + k % m_] == 0;
                if (ci != cj) {
                    basic_[e] = 0;
                    basic_[k] = 1;
                    cells_[pos] = k;
                    break;
                }
            }
        }
    }

    std::size_t n_, m_;
    std::vector<double> a_, b_, c_;
    std::vector<char> forb_;
    std::vector<double> x_;
    std::vector<char> basic_;
    std::vector<std::size_t> cells_;
    std::vector<std::vector<std::size_t>> adj_;
    std::vector<std::size_t> parent_, parent_edge_, depth_, order_;
    std::vector<double> u_, w_;
    std::size_t pivots_ = 0;
};

}  // namespace detail

inline TransportPlan solve_kantorovich(const CostMatrix& cost, const DiscreteMeasure& src, const DiscreteMeasure& tgt,
                                       Sense sense) {
    const std::size_t n = src.size(), m = tgt.size();
    if (cost.rows() != n || cost.cols() != m) throw Error(ErrorKind::invalid_input, "cost matrix shape mismatch");
    std::vector<double> c(n * m);
    std::vector<char> forb(n * m, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            const ExtReal& e = cost.at(i, j);
            bool bad = sense == Sense::min ? e.is_pos_inf() : e.is_pos_inf();
            if (sense == Sense::max && e.is_pos_inf())
                throw Error(ErrorKind::invalid_input, "+inf entry in a max-sense problem");
            if (bad) forb[i * m + j] = 1;
            else c[i * m + j] = sense == Sense::min ? e.raw() : -e.raw();
        }
    detail::TransportationSimplex tsx(src.weights(), tgt.weights(), c, forb);
    tsx.solve();
    TransportPlan plan;
    plan.sense = sense;
    plan.pivots = tsx.pivots();
    plan.coupling = Eigen::MatrixXd::Zero(n, m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) plan.coupling(i, j) = tsx.flow()[i * m + j];
    plan.dual_source.resize(n);
    plan.dual_target.resize(m);
    for (std::size_t i = 0; i < n; ++i) plan.dual_source[i] = sense == Sense::min ? -tsx.u()[i] : tsx.u()[i];
    for (std::size_t j = 0; j < m; ++j) plan.dual_target[j] = sense == Sense::min ? tsx.w()[j] : -tsx.w()[j];
    // shift so that the first source potential is exactly zero
    double s0 = plan.dual_source[0];
    for (auto& p : plan.dual_source) p -= s0;
    for (auto& p : plan.dual_target) p -= s0;
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            if (plan.coupling(i, j) > 0.0) v += plan.coupling(i, j) * cost.at(i, j).raw();
    plan.value = v;
    double dv = 0.0;
    for (std::size_t j = 0; j < m; ++j) dv += tgt.weight(j) * plan.dual_target[j];
    for (std::size_t i = 0; i < n; ++i) dv -= src.weight(i) * plan.dual_source[i];
    plan.dual_value = dv;
    return plan;
}

inline CostMatrix inner_product_cost(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
    return CostMatrix::from_function(mu, nu, [](const Point& v, const Point& x) { return ExtReal(dot(v, x)); },
                                     "inner-product");
}

// W-lower / W-upper: optimal transport for the cost <v,x>
inline TransportPlan brenier_W(const DiscreteMeasure& mu, const DiscreteMeasure& nu, Sense sense) {
    if (mu.dim() != nu.dim()) throw Error(ErrorKind::invalid_input, "brenier_W dimension mismatch");
    return solve_kantorovich(inner_product_cost(mu, nu), mu, nu, sense);
}

// Quantile matching of two 1-d measures (the monotone coupling); potentials
// are filled by c-transforms along the plan.
inline TransportPlan monotone_coupling_1d(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
    if (mu.dim() != 1 || nu.dim() != 1) throw Error(ErrorKind::invalid_input, "monotone coupling requires d = 1");
    const std::size_t n = mu.size(), m = nu.size();
    std::vector<std::size_t> ia(n), ib(m);
    std::iota(ia.begin(), ia.end(), 0);
    std::iota(ib.begin(), ib.end(), 0);
    std::stable_sort(ia.begin(), ia.end(), [&](auto a, auto b) { return mu.atom(a)[0] < mu.atom(b)[0]; });
    std::stable_sort(ib.begin(), ib.end(), [&](auto a, auto b) { return nu.atom(a)[0] < nu.atom(b)[0]; });
    TransportPlan plan;
    plan.sense = Sense::max;
    plan.coupling = Eigen::MatrixXd::Zero(n, m);
    std::size_t p = 0, q = 0;
    double ra = mu.weight(ia[0]), rb = nu.weight(ib[0]);
    while (p < n && q < m) {
        double t = std::min(ra, rb);
        plan.coupling(ia[p], ib[q]) += t;
        ra -= t;
        rb -= t;
        bool adv_a = ra <= 1e-15 && p + 1 < n;
        bool adv_b = rb <= 1e-15 && q + 1 < m;
        if (!adv_a && !adv_b) {
            if (p + 1 == n && q + 1 == m) break;
            if (ra <= rb && p + 1 < n) adv_a = true;
            else if (q + 1 < m) adv_b = true;
            else adv_a = true;
        }
        if (adv_a) {
            ++p;
            if (p < n) ra += mu.weight(ia[p]);
        }
        if (adv_b) {
            ++q;
            if (q < m) rb += nu.weight(ib[q]);
        }
    }
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) v += plan.coupling(i, j) * mu.atom(i)[0] * nu.atom(j)[0];
    plan.value = v;
    return plan;
}

enum class CTransform {
    target_inf,  // phi1(x) = inf_y c(y,x) + phi0(y)
    source_sup,  // phi0(y) = sup_x phi1(x) - c(y,x)
    target_sup,  // phi1(x) = sup_y c(y,x) + phi0(y)      (max-sense analogue)
    source_inf,  // phi0(y) = inf_x phi1(x) - c(y,x)
};

inline std::vector<double> c_transform(const std::vector<double>& potential, const CostMatrix& cost, CTransform dir) {
    const std::size_t n = cost.rows(), m = cost.cols();
    const bool to_target = dir == CTransform::target_inf || dir == CTransform::target_sup;
    if (potential.size() != (to_target ? n : m)) throw Error(ErrorKind::invalid_input, "potential length mismatch");
    std::vector<double> out(to_target ? m : n);
    const double inf = std::numeric_limits<double>::infinity();
    if (to_target) {
        for (std::size_t j = 0; j < m; ++j) {
            double best = dir == CTransform::target_inf ? inf : -inf;
            for (std::size_t i = 0; i < n; ++i) {
                double v = cost.at(i, j).raw() + potential[i];
                best = dir == CTransform::target_inf ? std::min(best, v) : std::max(best, v);
            }
            out[j] = best;
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            double best = dir == CTransform::source_sup ? -inf : inf;
            for (std::size_t j = 0; j < m; ++j) {
                if (cost.at(i, j).is_pos_inf()) continue;
                double v = potential[j] - cost.at(i, j).raw();
                best = dir == CTransform::source_sup ? std::max(best, v) : std::min(best, v);
            }
            out[i] = best;
        }
    }
    return out;
}

// largest violation of phi1(j) - phi0(i) <= c (min) or >= c (max); negative means slack
inline double dual_feasibility_violation(const TransportPlan& p, const CostMatrix& c) {
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < c.rows(); ++i)
        for (std::size_t j = 0; j < c.cols(); ++j) {
            if (c.at(i, j).is_pos_inf()) continue;
            double d = p.dual_target[j] - p.dual_source[i] - c.at(i, j).raw();
            worst = std::max(worst, p.sense == Sense::min ? d : -d);
        }
    return worst;
}

inline double slackness_violation(const TransportPlan& p, const CostMatrix& c, double mass_thresh = 1e-12) {
    double worst = 0.0;
    for (std::size_t i = 0; i < c.rows(); ++i)
        for (std::size_t j = 0; j < c.cols(); ++j)
            if (p.coupling(i, j) > mass_thresh)
                worst = std::max(worst, std::abs(p.dual_target[j] - p.dual_source[i] - c.at(i, j).raw()));
    return worst;
}

inline double marginal_violation(const TransportPlan& p, const DiscreteMeasure& src, const DiscreteMeasure& tgt) {
    double worst = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i) worst = std::max(worst, std::abs(p.coupling.row(i).sum() - src.weight(i)));
    for (std::size_t j = 0; j < tgt.size(); ++j) worst = std::max(worst, std::abs(p.coupling.col(j).sum() - tgt.weight(j)));
    return worst;
}

}  // namespace ballistic
