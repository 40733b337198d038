#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <limits>
#include <cmath>
#include <string>
#include <vector>

#include "core.hpp"

namespace ballistic {

// min c^T x  subject to  A x = b, x >= 0. A must have full row rank.
// col_scale, when set, is the expected size of each x_j; the solver works in
// x / col_scale with rows equilibrated, which matters when the optimum spans
// many orders of magnitude.
struct LinearProgram {
    Eigen::SparseMatrix<double> A;
    Eigen::VectorXd b, c;
    Eigen::VectorXd col_scale;
};

enum class LPStatus { optimal, stalled, infeasible, iteration_limit, numerical_trouble };

inline const char* to_string(LPStatus s) {
    switch (s) {
        case LPStatus::optimal: return "optimal";
        case LPStatus::stalled: return "stalled";
        case LPStatus::infeasible: return "infeasible";
        case LPStatus::iteration_limit: return "iteration-limit";
        case LPStatus::numerical_trouble: return "numerical-trouble";
    }
    return "?";
}

struct LPResult {
    Eigen::VectorXd x, y, s;
    double primal_value = 0.0, dual_value = 0.0;
    double primal_residual = 0.0, dual_residual = 0.0;
    int iterations = 0;
    LPStatus status = LPStatus::iteration_limit;
    bool optimal() const { return status == LPStatus::optimal; }
    // optimal, or stalled close to optimal at the accuracy the factorization allows
    bool usable() const { return status == LPStatus::optimal || status == LPStatus::stalled; }
};

struct LPOptions {
    double tol = 1e-10;
    int max_iter = 200;
    int refinement = 2;
    double stall_tol = 1e-7;  // residuals below which a stalled run is reported as usable
    int stall_window = 25;  // iterative refinement steps against the unregularized normal matrix
};

// Mehrotra predictor-corrector on the normal equations A D A^T dy = r.
inline LPResult solve_lp_unscaled(const LinearProgram& lp, const LPOptions& opt);

inline LPResult solve_lp(const LinearProgram& lp, const LPOptions& opt = {}) {
    if (lp.col_scale.size() == 0) return solve_lp_unscaled(lp, opt);
    if (lp.col_scale.size() != lp.A.cols() || (lp.col_scale.array() <= 0.0).any())
        throw Error(ErrorKind::invalid_input, "column scale must be positive, one entry per column");
    LinearProgram sc;
    sc.A = lp.A * lp.col_scale.asDiagonal();
    Eigen::VectorXd rmax = Eigen::VectorXd::Zero(lp.A.rows());
    for (int k = 0; k < sc.A.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(sc.A, k); it; ++it)
            rmax(it.row()) = std::max(rmax(it.row()), std::abs(it.value()));
    Eigen::VectorXd rs = rmax.unaryExpr([](double v) { return v > 0.0 ? 1.0 / v : 1.0; });
    sc.A = rs.asDiagonal() * sc.A;
    sc.b = rs.cwiseProduct(lp.b);
    sc.c = lp.c.cwiseProduct(lp.col_scale);
    LPResult r = solve_lp_unscaled(sc, opt);
    r.x = r.x.cwiseProduct(lp.col_scale);
    r.y = r.y.cwiseProduct(rs);
    r.s = r.s.cwiseQuotient(lp.col_scale);
    r.primal_value = lp.c.dot(r.x);
    r.dual_value = lp.b.dot(r.y);
    return r;
}

inline LPResult solve_lp_unscaled(const LinearProgram& lp, const LPOptions& opt) {
    const auto& A = lp.A;
    const int m = static_cast<int>(A.rows()), n = static_cast<int>(A.cols());
    if (lp.b.size() != m || lp.c.size() != n) throw Error(ErrorKind::invalid_input, "LP dimensions disagree");
    Eigen::SparseMatrix<double> At = A.transpose();
    LPResult r;
    Eigen::VectorXd x = Eigen::VectorXd::Ones(n), s = Eigen::VectorXd::Ones(n), y = Eigen::VectorXd::Zero(m);
    {
        // start from the least-squares point, shifted into the interior
        Eigen::SparseMatrix<double> AAt = A * At;
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> f(AAt);
        if (f.info() == Eigen::Success) {
            x = At * f.solve(lp.b);
            y = f.solve(A * lp.c);
            s = lp.c - At * y;
            double dx = std::max(-1.5 * x.minCoeff(), 0.0), ds = std::max(-1.5 * s.minCoeff(), 0.0);
            x.array() += dx;
            s.array() += ds;
            double xs = x.dot(s);
            dx = 0.5 * xs / std::max(s.sum(), 1e-300);
            ds = 0.5 * xs / std::max(x.sum(), 1e-300);
            x.array() += dx + 1e-3;
            s.array() += ds + 1e-3;
        }
    }
    const double bn = 1.0 + lp.b.norm(), cn = 1.0 + lp.c.norm();
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    bool analyzed = false;
    double best_merit = std::numeric_limits<double>::infinity();
    int last_progress = 0;
    Eigen::VectorXd bx = x, by = y, bs = s;
    for (int it = 0; it < opt.max_iter; ++it) {
        Eigen::VectorXd rp = lp.b - A * x, rd = lp.c - At * y - s;
        double pv = lp.c.dot(x), dv = lp.b.dot(y);
        r.iterations = it;
        r.primal_residual = rp.norm() / bn;
        r.dual_residual = rd.norm() / cn;
        if (r.primal_residual < opt.tol && r.dual_residual < opt.tol &&
            std::abs(pv - dv) < opt.tol * (1.0 + std::abs(pv))) {
            r.status = LPStatus::optimal;
            break;
        }
        const double merit = std::max({r.primal_residual, r.dual_residual, std::abs(pv - dv) / (1.0 + std::abs(pv))});
        if (merit < best_merit) {
            if (merit < 0.9 * best_merit) last_progress = it;
            best_merit = merit;
            bx = x, by = y, bs = s;
        }
        if (it - last_progress > opt.stall_window) {
            x = bx, y = by, s = bs;
            Eigen::VectorXd bp = lp.b - A * x, bd = lp.c - At * y - s;
            r.primal_residual = bp.norm() / bn;
            r.dual_residual = bd.norm() / cn;
            r.status = std::max(r.primal_residual, r.dual_residual) < opt.stall_tol ? LPStatus::stalled
                                                                                 : LPStatus::numerical_trouble;
            break;
        }
        // a dual ray: b^T y runs off while the primal residual stays put
        if (it > 30 && r.primal_residual > 1e3 * opt.tol && dv > 1e8 * (1.0 + std::abs(pv))) {
            r.status = LPStatus::infeasible;
            break;
        }
        Eigen::VectorXd d = x.cwiseQuotient(s);
        Eigen::SparseMatrix<double> M = A * d.asDiagonal() * At;
        double reg = 1e-16 * std::max(1.0, M.diagonal().maxCoeff());
        for (int i = 0; i < m; ++i) M.coeffRef(i, i) += reg;
        if (!analyzed) {
            ldlt.analyzePattern(M);
            analyzed = true;
        }
        ldlt.factorize(M);
        if (ldlt.info() != Eigen::Success) {
            r.status = LPStatus::numerical_trouble;
            break;
        }
        auto direction = [&](const Eigen::VectorXd& rc, Eigen::VectorXd& dx, Eigen::VectorXd& dy, Eigen::VectorXd& ds) {
            Eigen::VectorXd sinv_rc = rc.cwiseQuotient(s);
            Eigen::VectorXd rhs = rp - A * sinv_rc + A * d.cwiseProduct(rd);
            dy = ldlt.solve(rhs);
            for (int ref = 0; ref < opt.refinement; ++ref) {
                Eigen::VectorXd res = rhs - M * dy + reg * dy;
                dy += ldlt.solve(res);
            }
            ds = rd - At * dy;
            dx = sinv_rc - d.cwiseProduct(ds);
        };
        auto max_step = [](const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
            double a = 1.0;
            for (Eigen::Index i = 0; i < v.size(); ++i)
                if (dv(i) < 0) a = std::min(a, -v(i) / dv(i));
            return a;
        };
        const double mu = x.dot(s) / n;
        Eigen::VectorXd dxa, dya, dsa;
        direction(-x.cwiseProduct(s), dxa, dya, dsa);
        double ap = max_step(x, dxa), ad = max_step(s, dsa);
        double mu_aff = (x + ap * dxa).dot(s + ad * dsa) / n;
        double sigma = std::pow(mu_aff / mu, 3);
        Eigen::VectorXd rc = (sigma * mu - (x.cwiseProduct(s) + dxa.cwiseProduct(dsa)).array()).matrix();
        Eigen::VectorXd dx, dy, ds;
        direction(rc, dx, dy, ds);
        ap = std::min(1.0, 0.995 * max_step(x, dx));
        ad = std::min(1.0, 0.995 * max_step(s, ds));
        if (!std::isfinite(ap) || !std::isfinite(ad) || !dx.allFinite() || !dy.allFinite()) {
            r.status = LPStatus::numerical_trouble;
            break;
        }
        x += ap * dx;
        y += ad * dy;
        s += ad * ds;
        r.iterations = it + 1;
    }
    r.primal_value = lp.c.dot(x);
    r.dual_value = lp.b.dot(y);
    r.x = std::move(x);
    r.y = std::move(y);
    r.s = std::move(s);
    return r;
}

}  // namespace ballistic
