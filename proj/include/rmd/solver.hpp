#pragma once

// Ridge-penalized minimum-distance fit over the nuisance parameter:
//
//   alpha_hat = argmin_{alpha in A}  n r(alpha)' W r(alpha) + lambda |alpha|^2,
//   r(alpha)  = theta_hat - g(theta_hat, alpha, beta0),
//
// solved by a box-projected Gauss-Newton/Levenberg-Marquardt iteration from
// several starting points, plus generalized cross-validation for lambda.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <vector>

#include "rmd/errors.hpp"
#include "rmd/linalg.hpp"
#include "rmd/model.hpp"
#include "rmd/random.hpp"

namespace rmd {

struct SolverOptions {
    int restarts = 8;
    int max_iterations = 200;
    double gradient_tol = 1e-9;  // on the projected gradient, relative to 1 + |objective|
    double step_tol = 1e-12;
};

struct RidgeSolution {
    Vector alpha_hat;
    double objective = 0.0;            // n r'Wr at alpha_hat
    double penalized_objective = 0.0;  // objective + lambda |alpha_hat|^2
    double lambda = 0.0;
    int n_restarts_used = 0;
    int failed_restarts = 0;
    bool converged = false;
    int iterations = 0;  // of the winning restart
};

/// The fixed ingredients of one ridge problem.
struct RidgeProblem {
    const StructuralModel& model;
    const Vector& theta_hat;
    double n;
    const Matrix& weight;
    const Vector& beta0;
    double lambda;

    void validate() const {
        const int m = model.dims.m;
        if (theta_hat.size() != m) throw DimensionError("ridge problem: theta_hat has the wrong size");
        if (weight.rows() != m || weight.cols() != m) throw DimensionError("ridge problem: W must be m x m");
        if (beta0.size() != model.dims.p) throw DimensionError("ridge problem: beta0 has the wrong size");
        if (!(lambda >= 0.0)) throw InvalidArgument("ridge problem: lambda must be non-negative");
        if (!(n > 0.0)) throw InvalidSampleSize("ridge problem: n must be positive");
    }

    Vector residual(const Vector& alpha) const { return theta_hat - eval_g(model, theta_hat, alpha, beta0); }

    double objective(const Vector& r) const { return n * quadratic_form(r, weight); }

    double penalized(const Vector& r, const Vector& alpha) const {
        return objective(r) + lambda * alpha.squaredNorm();
    }
};

namespace detail {

struct LocalResult {
    Vector alpha;
    double objective = std::numeric_limits<double>::infinity();
    double penalized = std::numeric_limits<double>::infinity();
    bool converged = false;
    bool failed = false;
    int iterations = 0;
};

inline Vector project_box(const Vector& x, const Vector& lo, const Vector& hi) {
    return x.cwiseMax(lo).cwiseMin(hi);
}

inline LocalResult local_ridge_solve(const RidgeProblem& prob, const Vector& start, const SolverOptions& opts) {
    const StructuralModel& model = prob.model;
    const Vector& lo = model.alpha_lo;
    const Vector& hi = model.alpha_hi;
    const Eigen::Index q = start.size();

    LocalResult res;
    Vector x = project_box(start, lo, hi);
    Vector r;
    try {
        r = prob.residual(x);
    } catch (const ModelEvaluationError&) {
        res.failed = true;
        return res;
    }
    double f = prob.penalized(r, x);
    if (!std::isfinite(f)) {
        res.failed = true;
        return res;
    }

    double mu = 1e-8;
    for (int it = 0; it < opts.max_iterations; ++it) {
        res.iterations = it + 1;
        const Matrix d = jac_alpha(model, prob.theta_hat, x, prob.beta0);
        const Matrix wd = prob.weight * d;
        const Vector grad = -2.0 * prob.n * wd.transpose() * r + 2.0 * prob.lambda * x;

        const Vector pg = x - project_box(x - grad, lo, hi);
        if (pg.lpNorm<Eigen::Infinity>() <= opts.gradient_tol * (1.0 + std::abs(f))) {
            res.converged = true;
            break;
        }

        // Variables pinned at a bound with the gradient pushing outward stay fixed.
        std::vector<Eigen::Index> free;
        for (Eigen::Index i = 0; i < q; ++i) {
            const double span = hi(i) - lo(i);
            const bool at_lo = x(i) <= lo(i) + 1e-14 * span && grad(i) > 0.0;
            const bool at_hi = x(i) >= hi(i) - 1e-14 * span && grad(i) < 0.0;
            if (!at_lo && !at_hi) free.push_back(i);
        }
        if (free.empty()) {
            res.converged = true;
            break;
        }

        Matrix h = 2.0 * prob.n * d.transpose() * wd;
        h.diagonal().array() += 2.0 * prob.lambda;
        h = 0.5 * (h + h.transpose());
        const auto nf = static_cast<Eigen::Index>(free.size());
        Matrix hf(nf, nf);
        Vector gf(nf);
        for (Eigen::Index a = 0; a < nf; ++a) {
            gf(a) = grad(free[a]);
            for (Eigen::Index b = 0; b < nf; ++b) hf(a, b) = h(free[a], free[b]);
        }
        const double scale = 1.0 + hf.diagonal().cwiseAbs().maxCoeff();

        bool accepted = false;
        bool stalled = false;
        while (!accepted) {
            Matrix damped = hf;
            damped.diagonal().array() += mu * scale;
            const Vector pf = damped.ldlt().solve(-gf);
            Vector p = Vector::Zero(q);
            for (Eigen::Index a = 0; a < nf; ++a) p(free[a]) = pf(a);
            if (!p.allFinite()) {
                mu *= 10.0;
                if (mu > 1e14) break;
                continue;
            }

            double t = 1.0;
            for (int ls = 0; ls < 30; ++ls, t *= 0.5) {
                const Vector trial = project_box(x + t * p, lo, hi);
                const Vector step = trial - x;
                if (step.lpNorm<Eigen::Infinity>() == 0.0) break;
                Vector rt;
                try {
                    rt = prob.residual(trial);
                } catch (const ModelEvaluationError&) {
                    continue;
                }
                const double ft = prob.penalized(rt, trial);
                if (std::isfinite(ft) && ft <= f + 1e-4 * grad.dot(step)) {
                    accepted = true;
                    mu = t == 1.0 ? std::max(mu * 0.25, 1e-12) : mu * 2.0;
                    const bool tiny = step.lpNorm<Eigen::Infinity>() <=
                                      opts.step_tol * (1.0 + x.lpNorm<Eigen::Infinity>());
                    const bool flat = std::abs(f - ft) <= 1e-15 * (1.0 + std::abs(f));
                    x = trial;
                    r = std::move(rt);
                    f = ft;
                    if (tiny || flat) stalled = true;
                    break;
                }
            }
            if (!accepted) {
                mu *= 10.0;
                if (mu > 1e14) break;
            }
        }
        if (!accepted || stalled) {
            // No further decrease is representable: treat as converged to precision.
            res.converged = true;
            break;
        }
    }
    res.alpha = x;
    res.penalized = f;
    res.objective = prob.objective(r);
    return res;
}

// Latin-hypercube points inside the box.
inline std::vector<Vector> latin_hypercube(const Vector& lo, const Vector& hi, int count, Rng& rng) {
    std::vector<Vector> pts(static_cast<std::size_t>(count), Vector(lo.size()));
    if (count <= 0) return {};
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<int> perm(static_cast<std::size_t>(count));
    for (Eigen::Index d = 0; d < lo.size(); ++d) {
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        for (int k = 0; k < count; ++k) {
            const double u = (perm[static_cast<std::size_t>(k)] + unit(rng)) / count;
            pts[static_cast<std::size_t>(k)](d) = lo(d) + u * (hi(d) - lo(d));
        }
    }
    return pts;
}

}  // namespace detail

/// Multistart ridge solve. Starts: box center, the warm start when given, then
/// Latin-hypercube draws. The lowest penalized objective wins; ties go to the
/// earlier start. Deterministic for a given seed.
inline RidgeSolution minimize_ridge(const StructuralModel& model, const Vector& theta_hat, double n,
                                    const Matrix& weight, const Vector& beta0, double lambda,
                                    const SolverOptions& opts = {}, std::uint64_t seed = 0,
                                    const std::optional<Vector>& warm_start = std::nullopt) {
    const RidgeProblem prob{model, theta_hat, n, weight, beta0, lambda};
    prob.validate();
    if (opts.restarts < 1) throw InvalidArgument("minimize_ridge: need at least one start");

    std::vector<Vector> starts;
    starts.push_back(0.5 * (model.alpha_lo + model.alpha_hi));
    if (warm_start) {
        if (warm_start->size() != model.dims.q) throw DimensionError("minimize_ridge: warm start has the wrong size");
        starts.push_back(*warm_start);
    }
    Rng rng(hash_seed({seed, 0x5eed}));
    const int extra = std::max(0, opts.restarts - static_cast<int>(starts.size()));
    for (Vector& v : detail::latin_hypercube(model.alpha_lo, model.alpha_hi, extra, rng)) starts.push_back(std::move(v));
    starts.resize(static_cast<std::size_t>(std::min<int>(opts.restarts, static_cast<int>(starts.size()))));

    RidgeSolution best;
    best.penalized_objective = std::numeric_limits<double>::infinity();
    bool found = false;
    int failed = 0;
    std::ostringstream diag;
    for (std::size_t k = 0; k < starts.size(); ++k) {
        const detail::LocalResult lr = detail::local_ridge_solve(prob, starts[k], opts);
        if (lr.failed || !std::isfinite(lr.penalized)) {
            ++failed;
            diag << " start " << k << " non-finite;";
            continue;
        }
        if (!found || lr.penalized < best.penalized_objective) {
            found = true;
            best.alpha_hat = lr.alpha;
            best.objective = lr.objective;
            best.penalized_objective = lr.penalized;
            best.converged = lr.converged;
            best.iterations = lr.iterations;
        }
    }
    if (!found) throw SolverError("minimize_ridge: every start failed:" + diag.str());
    best.lambda = lambda;
    best.n_restarts_used = static_cast<int>(starts.size());
    best.failed_restarts = failed;
    return best;
}

/// {1, 0.1, ..., 1e-8} * tr(W) / m.
inline std::vector<double> default_lambda_grid(const Matrix& weight) {
    const double scale = weight.trace() / static_cast<double>(weight.rows());
    std::vector<double> grid;
    for (int e = 0; e >= -8; --e) grid.push_back(std::pow(10.0, e) * scale);
    return grid;
}

struct GcvSelection {
    double lambda = 0.0;
    std::vector<double> grid;
    std::vector<double> scores;        // GCV(lambda) per grid point, +inf when degenerate
    std::vector<double> hat_traces;    // tr(H_lambda) per grid point
    RidgeSolution solution;            // ridge solution at the selected lambda
};

/// Effective degrees of freedom tr(H) of the ridge fit linearized at alpha,
/// H = D (D'WD + (lambda/n) I)^+ D'W with D = jac_alpha there.
inline double ridge_hat_trace(const StructuralModel& model, const Vector& theta_hat, double n, const Matrix& weight,
                              const Vector& beta0, const Vector& alpha, double lambda) {
    const Matrix d = jac_alpha(model, theta_hat, alpha, beta0);
    Matrix inner = d.transpose() * weight * d;
    inner.diagonal().array() += lambda / n;
    const Matrix hat = d * sym_pinv(inner, 1e-12) * d.transpose() * weight;
    return hat.trace();
}

/// Picks lambda from the grid minimizing GCV(lambda) = n RSS / (n - tr H)^2,
/// with RSS the unpenalized objective at the ridge solution. Ties go to the
/// larger lambda.
inline GcvSelection select_lambda_gcv(const StructuralModel& model, const Vector& theta_hat, double n,
                                      const Matrix& weight, const Vector& beta0, const std::vector<double>& grid,
                                      const SolverOptions& opts = {}, std::uint64_t seed = 0) {
    if (grid.empty()) throw InvalidArgument("select_lambda_gcv: the lambda grid is empty");
    for (double l : grid) {
        if (!(l >= 0.0)) throw InvalidArgument("select_lambda_gcv: lambda values must be non-negative");
    }
    GcvSelection sel;
    sel.grid = grid;
    std::vector<RidgeSolution> sols;
    std::optional<Vector> warm;
    for (double lambda : grid) {
        RidgeSolution sol = minimize_ridge(model, theta_hat, n, weight, beta0, lambda, opts, seed, warm);
        warm = sol.alpha_hat;
        const double tr = ridge_hat_trace(model, theta_hat, n, weight, beta0, sol.alpha_hat, lambda);
        const double denom = n - tr;
        sel.hat_traces.push_back(tr);
        sel.scores.push_back(denom > 0.0 ? n * sol.objective / (denom * denom)
                                         : std::numeric_limits<double>::infinity());
        sols.push_back(std::move(sol));
    }

    std::optional<std::size_t> pick;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!std::isfinite(sel.scores[i])) continue;
        if (!pick) {
            pick = i;
            continue;
        }
        const double best = sel.scores[*pick];
        const double tol = 1e-14 * std::max(std::abs(best), std::abs(sel.scores[i]));
        if (sel.scores[i] < best - tol) {
            pick = i;
        } else if (std::abs(sel.scores[i] - best) <= tol && grid[i] > grid[*pick]) {
            pick = i;
        }
    }
    if (!pick) throw GcvDegenerate("select_lambda_gcv: tr(H) >= n at every grid point");
    sel.lambda = grid[*pick];
    sel.solution = sols[*pick];
    return sel;
}

}  // namespace rmd
