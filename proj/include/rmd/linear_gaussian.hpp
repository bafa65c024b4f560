#pragma once

// Synthetic linear fixed-point model with Gaussian reduced-form data:
//
//   g(theta, alpha, beta) = K theta + D alpha + b beta + c
//
// Sigma = L L' has rank r_sigma < m and D has rank r_alpha < q, so both the
// weight and the nuisance Jacobian are rank deficient. The columns of D and b
// lie in range((I - K) L), which makes the robust statistic exactly
// chi-squared with r_sigma - r_alpha degrees of freedom when Sigma is known.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>

#include "rmd/errors.hpp"
#include "rmd/inference.hpp"
#include "rmd/model.hpp"
#include "rmd/random.hpp"

namespace rmd::synthetic {

struct LinearGaussianDesign {
    int m = 5;
    int q = 3;
    int r_sigma = 4;
    int r_alpha = 2;
    double beta0 = 0.5;
    double alpha_bound = 10.0;
    Matrix K;  // d g / d theta'
    Matrix L;  // m x r_sigma square root of Sigma
    Matrix D;  // d g / d alpha'
    Vector b;  // d g / d beta
    Vector c;
    Vector alpha0;  // minimum-norm nuisance value
    Vector theta0;  // fixed point at (alpha0, beta0)

    /// Random design with the given shape; deterministic in `seed`.
    static LinearGaussianDesign make(std::uint64_t seed = 11, int m = 5, int q = 3, int r_sigma = 4,
                                     int r_alpha = 2) {
        if (!(m >= 2 && q >= 1 && r_sigma >= 1 && r_sigma <= m && r_alpha >= 0 && r_alpha <= std::min(q, r_sigma))) {
            throw InvalidArgument("linear-Gaussian design: need 1 <= r_sigma <= m and r_alpha <= min(q, r_sigma)");
        }
        if (r_sigma - r_alpha < 1) throw InvalidArgument("linear-Gaussian design: r_sigma - r_alpha must be positive");
        Rng rng(seed);
        std::normal_distribution<double> z(0.0, 1.0);
        auto gauss = [&](int rows, int cols) {
            Matrix out(rows, cols);
            for (int j = 0; j < cols; ++j) {
                for (int i = 0; i < rows; ++i) out(i, j) = z(rng);
            }
            return out;
        };

        LinearGaussianDesign d;
        d.m = m;
        d.q = q;
        d.r_sigma = r_sigma;
        d.r_alpha = r_alpha;
        Matrix k = gauss(m, m);
        d.K = 0.3 * k / Eigen::JacobiSVD<Matrix>(k).singularValues()(0);
        d.L = gauss(m, r_sigma) / std::sqrt(static_cast<double>(r_sigma));
        const Matrix range = (Matrix::Identity(m, m) - d.K) * d.L;
        d.D = range * gauss(r_sigma, r_alpha) * gauss(r_alpha, q) / std::sqrt(static_cast<double>(r_sigma * r_alpha + 1));
        d.b = range * gauss(r_sigma, 1);
        d.alpha0 = sym_pinv(d.D.transpose() * d.D) * d.D.transpose() * d.D * gauss(q, 1);
        d.theta0 = gauss(m, 1) * 0.5;
        d.c = (Matrix::Identity(m, m) - d.K) * d.theta0 - d.D * d.alpha0 - d.b * d.beta0;
        return d;
    }

    Matrix sigma() const { return L * L.transpose(); }

    /// Fixed point of g at (alpha0, beta).
    Vector theta_at(double beta) const {
        return (Matrix::Identity(m, m) - K).partialPivLu().solve(D * alpha0 + b * beta + c);
    }

    StructuralModel model() const {
        StructuralModel model;
        model.name = "linear_gaussian";
        model.dims = {m, q, 1};
        model.alpha_lo = Vector::Constant(q, -alpha_bound);
        model.alpha_hi = Vector::Constant(q, alpha_bound);
        const Matrix k = K, dm = D;
        const Vector bv = b, cv = c;
        model.g = [k, dm, bv, cv](const Vector& t, const Vector& a, const Vector& be) {
            return Vector(k * t + dm * a + bv * be(0) + cv);
        };
        model.jac_theta = [k](const Vector&, const Vector&, const Vector&) { return k; };
        model.jac_alpha = [dm](const Vector&, const Vector&, const Vector&) { return dm; };
        model.jac_beta = [bv](const Vector&, const Vector&, const Vector&) { return Matrix(bv); };
        return model;
    }

    /// n draws of theta(beta) + L u with u ~ N(0, I); returns the sample mean
    /// and the (n - 1)-normalized sample covariance.
    ReducedFormEstimate sample(double beta, long n, std::uint64_t seed) const {
        if (n < 2) throw InvalidSampleSize("linear-Gaussian sample: need n >= 2");
        Rng rng(seed);
        std::normal_distribution<double> z(0.0, 1.0);
        const Vector mean = theta_at(beta);
        Vector sum = Vector::Zero(m);
        Matrix cross = Matrix::Zero(m, m);
        Vector u(r_sigma);
        for (long i = 0; i < n; ++i) {
            for (int j = 0; j < r_sigma; ++j) u(j) = z(rng);
            const Vector x = L * u;
            sum += x;
            cross.noalias() += x * x.transpose();
        }
        const double nn = static_cast<double>(n);
        const Vector xbar = sum / nn;
        ReducedFormEstimate rf;
        rf.n = nn;
        rf.theta_hat = mean + xbar;
        rf.sigma_hat = (cross - nn * xbar * xbar.transpose()) / (nn - 1.0);
        return rf;
    }
};

}  // namespace rmd::synthetic
