#pragma once

// Identification-robust minimum-distance test of H0: beta = beta0, the oracle
// variant with known degrees of freedom, the textbook t-test comparator, and
// confidence sets by test inversion.

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rmd/dist.hpp"
#include "rmd/errors.hpp"
#include "rmd/linalg.hpp"
#include "rmd/model.hpp"
#include "rmd/solver.hpp"

namespace rmd {

/// theta_hat with sqrt(n)(theta_hat - theta0) approximately N(0, sigma_hat).
struct ReducedFormEstimate {
    Vector theta_hat;
    Matrix sigma_hat;
    double n = 0.0;

    void validate() const {
        const Eigen::Index m = theta_hat.size();
        if (m < 1) throw DimensionError("reduced form: theta_hat is empty");
        if (sigma_hat.rows() != m || sigma_hat.cols() != m) {
            throw DimensionError("reduced form: sigma_hat must be m x m");
        }
        if (!theta_hat.allFinite() || !sigma_hat.allFinite()) throw InvalidMatrix("reduced form: non-finite entries");
        if ((sigma_hat - sigma_hat.transpose()).cwiseAbs().maxCoeff() > 1e-10 * (1.0 + sigma_hat.cwiseAbs().maxCoeff())) {
            throw InvalidMatrix("reduced form: sigma_hat is not symmetric");
        }
        if (!(n >= 2.0)) throw InvalidSampleSize("reduced form: n must be at least 2");
    }
};

struct TestOptions {
    double b = kDefaultRankExponent;
    // Lambda for both ridge passes. When unset it is chosen by GCV on the
    // first (W = I) pass, or set to 1/n if use_gcv is false.
    std::optional<double> lambda;
    bool use_gcv = true;
    std::vector<double> lambda_grid;  // empty: default_lambda_grid(I)
    SolverOptions solver;
    std::uint64_t seed = 0;
};

struct RobustTestResult {
    double statistic = 0.0;
    int r_sigma_hat = 0;
    int r_alpha_hat = 0;
    int df_hat = 0;   // r_sigma_hat - r_alpha_hat
    int df_used = 0;  // df_hat, or the supplied d for the oracle test
    double critical_value = 0.0;
    double p_value = 1.0;
    bool reject = false;
    double tau = 0.05;
    Vector alpha_hat;
    Matrix W_hat;
    double lambda_used = 0.0;
    Vector residual;  // theta_hat - g(theta_hat, alpha_hat, beta0)
    int weight_rank = 0;
    double min_singular_value = 0.0;  // of I - jac_theta at the first-pass solution
    double weight_source_norm = 0.0;  // spectral norm of (I - Dg) Sigma (I - Dg)'
    bool oracle = false;
    std::vector<std::string> warnings;
};

namespace detail {

inline void check_tau(double tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw InvalidArgument("significance level tau must lie in (0, 1)");
}

inline void check_model_against(const StructuralModel& model, const ReducedFormEstimate& rf, const Vector& beta0) {
    model.validate();
    rf.validate();
    if (rf.theta_hat.size() != model.dims.m) throw DimensionError("model dimension m does not match theta_hat");
    if (beta0.size() != model.dims.p) throw DimensionError("beta0 does not match the model's p");
}

// Steps 4-10 of the robust procedure; the caller picks the degrees of freedom.
inline RobustTestResult robust_pipeline(const StructuralModel& model, const ReducedFormEstimate& rf,
                                        const Vector& beta0, const TestOptions& opts) {
    check_model_against(model, rf, beta0);
    const int m = model.dims.m;
    const double n = rf.n;
    const Matrix identity = Matrix::Identity(m, m);
    RobustTestResult out;

    // First pass under W = I, lambda by GCV.
    RidgeSolution first;
    double lambda = 0.0;
    if (opts.lambda) {
        lambda = *opts.lambda;
        first = minimize_ridge(model, rf.theta_hat, n, identity, beta0, lambda, opts.solver, opts.seed);
    } else if (opts.use_gcv) {
        const std::vector<double> grid = opts.lambda_grid.empty() ? default_lambda_grid(identity) : opts.lambda_grid;
        GcvSelection sel = select_lambda_gcv(model, rf.theta_hat, n, identity, beta0, grid, opts.solver, opts.seed);
        lambda = sel.lambda;
        first = std::move(sel.solution);
    } else {
        lambda = 1.0 / n;
        first = minimize_ridge(model, rf.theta_hat, n, identity, beta0, lambda, opts.solver, opts.seed);
    }

    // Weighting matrix from the sandwich (I - Dg) Sigma (I - Dg)'.
    const Matrix e = identity - jac_theta(model, rf.theta_hat, first.alpha_hat, beta0);
    out.min_singular_value = Eigen::JacobiSVD<Matrix>(e).singularValues().minCoeff();
    const RankEstimate r_sigma = estimate_rank(rf.sigma_hat, n, opts.b);
    const Matrix a_hat = e * rf.sigma_hat * e.transpose();
    const TruncatedPinv w = truncated_pinv(a_hat, n, opts.b);
    out.weight_source_norm = sym_eig(a_hat).eigenvalues.cwiseAbs().maxCoeff();
    if (out.weight_source_norm < 1e-4 || out.weight_source_norm > 1e4) {
        std::ostringstream os;
        os << "spectral norm of the weighting source is " << out.weight_source_norm
           << "; the absolute rank threshold " << w.threshold << " is scale sensitive";
        out.warnings.push_back(os.str());
    }

    // Second pass under the estimated optimal weight.
    const RidgeSolution second =
        minimize_ridge(model, rf.theta_hat, n, w.matrix, beta0, lambda, opts.solver, opts.seed, first.alpha_hat);

    const Matrix d = jac_alpha(model, rf.theta_hat, second.alpha_hat, beta0);
    const RankEstimate r_alpha = estimate_rank(d * d.transpose(), n, opts.b);

    out.residual = rf.theta_hat - eval_g(model, rf.theta_hat, second.alpha_hat, beta0, &out.warnings);
    out.statistic = std::max(0.0, n * quadratic_form(out.residual, w.matrix));
    out.r_sigma_hat = r_sigma.rank;
    out.r_alpha_hat = r_alpha.rank;
    out.df_hat = r_sigma.rank - r_alpha.rank;
    out.alpha_hat = second.alpha_hat;
    out.W_hat = w.matrix;
    out.weight_rank = w.rank;
    out.lambda_used = lambda;
    return out;
}

inline void finish_decision(RobustTestResult& res, double tau, int df) {
    res.tau = tau;
    res.df_used = df;
    res.critical_value = chisq_quantile(1.0 - tau, df);
    res.p_value = chisq_sf(res.statistic, df);
    res.reject = res.statistic > res.critical_value;
}

}  // namespace detail

/// The feasible robust test: degrees of freedom estimated as r_sigma - r_alpha.
inline RobustTestResult robust_test(const StructuralModel& model, const ReducedFormEstimate& rf, const Vector& beta0,
                                    double tau, const TestOptions& opts = {}) {
    detail::check_tau(tau);
    RobustTestResult res = detail::robust_pipeline(model, rf, beta0, opts);
    if (res.df_hat <= 0) {
        std::ostringstream os;
        os << "estimated degrees of freedom " << res.df_hat << " (rank Sigma " << res.r_sigma_hat
           << ", rank of the nuisance Jacobian " << res.r_alpha_hat << ") must be positive";
        throw DegreesOfFreedomError(os.str(), res.r_sigma_hat, res.r_alpha_hat);
    }
    detail::finish_decision(res, tau, res.df_hat);
    return res;
}

/// Same statistic, critical value from the supplied (true) degrees of freedom.
inline RobustTestResult oracle_test(const StructuralModel& model, const ReducedFormEstimate& rf, const Vector& beta0,
                                    double tau, int d, const TestOptions& opts = {}) {
    detail::check_tau(tau);
    if (d < 1 || d > model.dims.m) throw InvalidArgument("oracle_test: d must lie in [1, m]");
    RobustTestResult res = detail::robust_pipeline(model, rf, beta0, opts);
    detail::finish_decision(res, tau, d);
    res.oracle = true;
    return res;
}

/// Robust and oracle decisions from one pipeline run. The robust result is
/// empty when the estimated degrees of freedom are not positive.
struct PairedTestResult {
    std::optional<RobustTestResult> robust;
    RobustTestResult oracle;
};

inline PairedTestResult robust_and_oracle_test(const StructuralModel& model, const ReducedFormEstimate& rf,
                                               const Vector& beta0, double tau, int d, const TestOptions& opts = {}) {
    detail::check_tau(tau);
    if (d < 1 || d > model.dims.m) throw InvalidArgument("oracle d must lie in [1, m]");
    PairedTestResult out;
    out.oracle = detail::robust_pipeline(model, rf, beta0, opts);
    if (out.oracle.df_hat > 0) {
        out.robust = out.oracle;
        detail::finish_decision(*out.robust, tau, out.robust->df_hat);
    }
    detail::finish_decision(out.oracle, tau, d);
    out.oracle.oracle = true;
    return out;
}

struct TTestResult {
    Vector beta_hat;
    Vector alpha_hat;
    Vector std_err;
    Vector t_stats;
    std::vector<bool> reject;  // per coordinate, two-sided at tau
    double critical_value = 0.0;
    bool degenerate = false;  // G'WG numerically singular; pseudoinverse used
    double condition = 0.0;   // largest / smallest eigenvalue of G'WG

    bool any_reject() const {
        for (bool r : reject) {
            if (r) return true;
        }
        return false;
    }
};

struct TTestOptions {
    double b = kDefaultRankExponent;
    double beta_halfwidth = 10.0;  // box for beta in the joint fit: beta0 +/- halfwidth
    // Box for alpha in the joint fit, centered on the model's box; unset keeps the model's box.
    std::optional<double> alpha_halfwidth;
    SolverOptions solver;
    std::uint64_t seed = 0;
};

namespace detail {

// (alpha, beta) stacked as the "nuisance" of a model with no interest parameter.
inline StructuralModel joint_model(const StructuralModel& model, const Vector& beta_lo, const Vector& beta_hi) {
    const int q = model.dims.q;
    const int p = model.dims.p;
    StructuralModel joint;
    joint.name = model.name + "/joint";
    joint.dims = {model.dims.m, q + p, 0};
    joint.alpha_lo.resize(q + p);
    joint.alpha_hi.resize(q + p);
    joint.alpha_lo << model.alpha_lo, beta_lo;
    joint.alpha_hi << model.alpha_hi, beta_hi;
    joint.fd_step = model.fd_step;
    joint.g = [model, q, p](const Vector& theta, const Vector& x, const Vector&) {
        return model.g(theta, x.head(q), x.tail(p));
    };
    joint.jac_alpha = [model, q, p](const Vector& theta, const Vector& x, const Vector&) {
        Matrix out(model.dims.m, q + p);
        out << jac_alpha(model, theta, x.head(q), x.tail(p)), jac_beta(model, theta, x.head(q), x.tail(p));
        return out;
    };
    joint.jac_theta = [model, q, p](const Vector& theta, const Vector& x, const Vector&) {
        return jac_theta(model, theta, x.head(q), x.tail(p));
    };
    return joint;
}

}  // namespace detail

/// Wald t-test from the joint minimum-distance fit of (alpha, beta); valid only
/// under point identification.
inline TTestResult t_test(const StructuralModel& model, const ReducedFormEstimate& rf, const Vector& beta0, double tau,
                          const TTestOptions& opts = {}) {
    detail::check_tau(tau);
    detail::check_model_against(model, rf, beta0);
    const int m = model.dims.m;
    const int q = model.dims.q;
    const int p = model.dims.p;
    if (p + q > m) throw InvalidArgument("t_test: joint estimation needs p + q <= m");
    const double n = rf.n;

    const Vector half = Vector::Constant(p, opts.beta_halfwidth);
    StructuralModel base = model;
    if (opts.alpha_halfwidth) {
        const Vector center = 0.5 * (model.alpha_lo + model.alpha_hi);
        base.alpha_lo = center.array() - *opts.alpha_halfwidth;
        base.alpha_hi = center.array() + *opts.alpha_halfwidth;
    }
    const StructuralModel joint = detail::joint_model(base, beta0 - half, beta0 + half);
    const Vector none(0);
    const Matrix identity = Matrix::Identity(m, m);

    const RidgeSolution first = minimize_ridge(joint, rf.theta_hat, n, identity, none, 0.0, opts.solver, opts.seed);
    const Matrix e = identity - jac_theta(joint, rf.theta_hat, first.alpha_hat, none);
    const Matrix w = truncated_pinv(e * rf.sigma_hat * e.transpose(), n, opts.b).matrix;
    const RidgeSolution second =
        minimize_ridge(joint, rf.theta_hat, n, w, none, 0.0, opts.solver, opts.seed, first.alpha_hat);

    const Matrix g = jac_alpha(joint, rf.theta_hat, second.alpha_hat, none);
    const Matrix info = g.transpose() * w * g;
    const Vector ev = sym_eig(info).eigenvalues;
    const double top = ev.size() ? ev(0) : 0.0;
    const double bottom = ev.size() ? ev(ev.size() - 1) : 0.0;

    TTestResult out;
    out.condition = bottom > 0.0 ? top / bottom : std::numeric_limits<double>::infinity();
    out.degenerate = !(bottom > 1e-10 * top);
    const Matrix cov = sym_pinv(info, 1e-10) / n;

    out.alpha_hat = second.alpha_hat.head(q);
    out.beta_hat = second.alpha_hat.tail(p);
    out.std_err.resize(p);
    out.t_stats.resize(p);
    out.critical_value = std::sqrt(chisq_quantile(1.0 - tau, 1));
    for (int i = 0; i < p; ++i) {
        const double var = cov(q + i, q + i);
        out.std_err(i) = var > 0.0 ? std::sqrt(var) : std::numeric_limits<double>::quiet_NaN();
        const double diff = out.beta_hat(i) - beta0(i);
        out.t_stats(i) = diff == 0.0 ? 0.0 : diff / out.std_err(i);
        out.reject.push_back(std::abs(out.t_stats(i)) > out.critical_value);
    }
    return out;
}

struct ConfidenceSet {
    std::vector<double> accepted;
    std::vector<double> grid;
    std::vector<double> statistics;   // NaN where the test could not be run
    std::vector<double> p_values;
    std::vector<std::string> errors;  // empty string where the test ran
    double lambda_used = 0.0;
    bool empty() const { return accepted.empty(); }
    double lower() const { return accepted.empty() ? std::numeric_limits<double>::quiet_NaN() : accepted.front(); }
    double upper() const { return accepted.empty() ? std::numeric_limits<double>::quiet_NaN() : accepted.back(); }
};

/// {beta in grid : robust_test does not reject}. The first grid point fixes
/// lambda for the rest unless `strict` re-runs GCV everywhere.
inline ConfidenceSet invert_ci(const StructuralModel& model, const ReducedFormEstimate& rf,
                               std::vector<double> beta_grid, double tau, const TestOptions& opts = {},
                               bool strict = false) {
    if (model.dims.p != 1) throw InvalidArgument("invert_ci: grid inversion needs a scalar beta (p = 1)");
    if (beta_grid.empty()) throw InvalidArgument("invert_ci: empty beta grid");
    std::sort(beta_grid.begin(), beta_grid.end());
    ConfidenceSet out;
    out.grid = beta_grid;
    TestOptions local = opts;
    for (double beta : beta_grid) {
        const Vector b0 = Vector::Constant(1, beta);
        try {
            const RobustTestResult res = robust_test(model, rf, b0, tau, local);
            if (!strict && !local.lambda) local.lambda = res.lambda_used;
            out.lambda_used = res.lambda_used;
            out.statistics.push_back(res.statistic);
            out.p_values.push_back(res.p_value);
            out.errors.emplace_back();
            if (!res.reject) out.accepted.push_back(beta);
        } catch (const DegreesOfFreedomError& err) {
            out.statistics.push_back(std::numeric_limits<double>::quiet_NaN());
            out.p_values.push_back(std::numeric_limits<double>::quiet_NaN());
            out.errors.emplace_back(err.what());
        }
    }
    return out;
}

}  // namespace rmd
