#pragma once

// Local power of the robust test under Pitman alternatives beta0 + delta/sqrt(n).
// The statistic is then noncentral chi-squared with noncentrality
// delta' Jb' W Jb delta, Jb = d g / d beta'. When nuisance parameters are
// profiled out, W here should be the nuisance-adjusted weight
// W - W G (G'WG)^+ G'W (see nuisance_adjusted_weight); the plain optimal
// weight overstates power whenever Jb has a component inside span(G).

#include <cmath>
#include <utility>
#include <vector>

#include "rmd/dist.hpp"
#include "rmd/errors.hpp"
#include "rmd/linalg.hpp"
#include "rmd/model.hpp"

namespace rmd {

inline constexpr double kEigenTieTol = 1e-10;

struct MaxPowerDirection {
    Vector delta_star;       // unit vector, first nonzero component positive
    double k_star = 0.0;     // largest eigenvalue of Jb' W Jb
    int eigenspace_dim = 1;  // multiplicity of k_star (ties within kEigenTieTol)
    bool degenerate = false; // Jb' W Jb is zero: every direction has trivial power
};

/// W - W G (G'WG)^+ G'W: the weight left after profiling out the directions
/// spanned by the nuisance Jacobian G.
inline Matrix nuisance_adjusted_weight(const Matrix& weight, const Matrix& grad_alpha) {
    if (grad_alpha.cols() == 0) return weight;
    if (grad_alpha.rows() != weight.rows()) throw DimensionError("nuisance_adjusted_weight: shape mismatch");
    const Matrix wg = weight * grad_alpha;
    Matrix out = weight - wg * sym_pinv(grad_alpha.transpose() * wg, 1e-10) * wg.transpose();
    return 0.5 * (out + out.transpose());
}

namespace detail {

inline Matrix power_curvature(const Matrix& grad_beta, const Matrix& weight) {
    if (weight.rows() != weight.cols() || weight.rows() != grad_beta.rows()) {
        throw DimensionError("power analysis: W must be m x m and grad_beta m x p");
    }
    Matrix k = grad_beta.transpose() * weight * grad_beta;
    return 0.5 * (k + k.transpose());
}

inline void fix_sign(Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (std::abs(v(i)) > 1e-12) {
            if (v(i) < 0.0) v = -v;
            return;
        }
    }
}

}  // namespace detail

/// Top eigenpair of Jb' W Jb. With a tied top eigenvalue the direction is the
/// normalized projection of the first coordinate axis that has a nonzero
/// projection onto the tied eigenspace.
inline MaxPowerDirection max_power_direction(const Matrix& grad_beta, const Matrix& weight) {
    const Matrix curv = detail::power_curvature(grad_beta, weight);
    const Eigen::Index p = curv.rows();
    if (p == 0) throw DimensionError("max_power_direction: p must be positive");
    const SpectralDecomposition sd = sym_eig(curv);

    MaxPowerDirection out;
    out.k_star = std::max(sd.eigenvalues(0), 0.0);
    const double scale = std::max(1.0, std::abs(sd.eigenvalues(0)));
    if (out.k_star <= kEigenTieTol * scale && sd.eigenvalues.cwiseAbs().maxCoeff() <= kEigenTieTol) {
        out.degenerate = true;
    }
    int tied = 1;
    while (tied < p && sd.eigenvalues(0) - sd.eigenvalues(tied) <= kEigenTieTol * scale) ++tied;
    out.eigenspace_dim = tied;

    if (tied == 1) {
        out.delta_star = sd.eigenvectors.col(0);
    } else {
        const Matrix basis = sd.eigenvectors.leftCols(tied);
        const Matrix proj = basis * basis.transpose();
        for (Eigen::Index i = 0; i < p; ++i) {
            const Vector v = proj.col(i);
            if (v.norm() > 1e-8) {
                out.delta_star = v.normalized();
                break;
            }
        }
    }
    detail::fix_sign(out.delta_star);
    return out;
}

inline MaxPowerDirection max_power_direction(const StructuralModel& model, const Vector& theta0, const Vector& alpha0,
                                             const Vector& beta0, const Matrix& weight) {
    return max_power_direction(jac_beta(model, theta0, alpha0, beta0), weight);
}

/// Noncentrality delta' Jb' W Jb delta.
inline double noncentrality(const Vector& delta, const Matrix& grad_beta, const Matrix& weight) {
    if (delta.size() != grad_beta.cols()) throw DimensionError("noncentrality: delta must have p entries");
    return std::max(0.0, quadratic_form(delta, detail::power_curvature(grad_beta, weight)));
}

/// Asymptotic power 1 - F_{chi2(d, k)}(chi2_{d, 1 - tau}).
inline double local_power(const Vector& delta, const Matrix& grad_beta, const Matrix& weight, int d, double tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw InvalidArgument("local_power: tau must lie in (0, 1)");
    const double k = noncentrality(delta, grad_beta, weight);
    return noncentral_chisq_sf(chisq_quantile(1.0 - tau, d), d, k);
}

inline double local_power(const Vector& delta, const StructuralModel& model, const Vector& theta0,
                          const Vector& alpha0, const Vector& beta0, const Matrix& weight, int d, double tau) {
    return local_power(delta, jac_beta(model, theta0, alpha0, beta0), weight, d, tau);
}

/// p - rank(W Jb): the number of independent directions with trivial local power.
inline int trivial_power_dim(const Matrix& weight, const Matrix& grad_beta, double n, double b = kDefaultRankExponent) {
    if (weight.cols() != grad_beta.rows()) throw DimensionError("trivial_power_dim: shape mismatch");
    const Matrix wj = weight * grad_beta;
    return static_cast<int>(grad_beta.cols()) - estimate_rank(wj.transpose() * wj, n, b).rank;
}

struct PowerReport {
    Vector delta_star;
    double k_star = 0.0;
    Vector relative_weights;  // delta_star squared, sums to one
    int trivial_dim = 0;
    int eigenspace_dim = 1;
    bool degenerate = false;
    int df = 1;
    double tau = 0.05;
    bool nuisance_adjusted = true;
    Matrix weight_used;
    std::vector<std::pair<double, double>> predicted_power;  // (c, power at beta0 + c delta_star / sqrt(n))
};

struct PowerOptions {
    bool partial_out_nuisance = true;
    std::vector<double> scales{0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0};
    double b = kDefaultRankExponent;
};

inline PowerReport power_report(const StructuralModel& model, const Vector& theta0, const Vector& alpha0,
                                const Vector& beta0, const Matrix& weight, int d, double tau, double n,
                                const PowerOptions& opts = {}) {
    PowerReport rep;
    rep.df = d;
    rep.tau = tau;
    rep.nuisance_adjusted = opts.partial_out_nuisance && model.dims.q > 0;
    rep.weight_used =
        rep.nuisance_adjusted ? nuisance_adjusted_weight(weight, jac_alpha(model, theta0, alpha0, beta0)) : weight;
    const Matrix jb = jac_beta(model, theta0, alpha0, beta0);
    const MaxPowerDirection dir = max_power_direction(jb, rep.weight_used);
    rep.delta_star = dir.delta_star;
    rep.k_star = dir.k_star;
    rep.eigenspace_dim = dir.eigenspace_dim;
    rep.degenerate = dir.degenerate;
    rep.relative_weights = dir.delta_star.array().square();
    rep.trivial_dim = trivial_power_dim(rep.weight_used, jb, n, opts.b);
    for (double c : opts.scales) {
        rep.predicted_power.emplace_back(c, local_power(c * dir.delta_star, jb, rep.weight_used, d, tau));
    }
    return rep;
}

}  // namespace rmd
