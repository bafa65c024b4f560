#pragma once

// Small simulated-moments model with a built-in identification failure:
//
//   x = (a1 + a2 + e1,  b + e2,  b + a1 + a2 + e3),   e ~ N(0, I3)
//
// with h(x) = x. Only a1 + a2 is identified, so the nuisance Jacobian has
// rank 1 and the robust test has 3 - 1 = 2 degrees of freedom.

#include <cstdint>
#include <random>

#include "rmd/inference.hpp"
#include "rmd/model.hpp"
#include "rmd/random.hpp"

namespace rmd::smm_toy {

inline constexpr int kRankSigma = 3;
inline constexpr int kRankAlpha = 1;

template <class Engine>
Vector draw(const Vector& alpha, const Vector& beta, Engine& rng) {
    std::normal_distribution<double> z(0.0, 1.0);
    const double s = alpha(0) + alpha(1);
    Vector x(3);
    x(0) = s + z(rng);
    x(1) = beta(0) + z(rng);
    x(2) = beta(0) + s + z(rng);
    return x;
}

inline SmmAdapter adapter(std::uint64_t base_seed = 1, long draws = 0) {
    SmmAdapter smm;
    smm.simulator = [](const Vector& alpha, const Vector& beta, std::uint64_t, std::uint64_t seed) {
        SplitMix64 rng(seed);
        return draw(alpha, beta, rng);
    };
    smm.h = [](const Vector& x) { return x; };
    smm.draws = draws;
    smm.base_seed = base_seed;
    return smm;
}

/// With common random numbers the simulated moments are exactly linear in
/// (alpha, beta), so the Jacobians are supplied in closed form.
inline StructuralModel make_model(long n, long draws = 0, std::uint64_t base_seed = 1, double alpha_bound = 5.0) {
    StructuralModel model = adapter(base_seed, draws)
        .to_model("smm_toy", {3, 2, 1}, Vector::Constant(2, -alpha_bound), Vector::Constant(2, alpha_bound), n);
    model.jac_alpha = [](const Vector&, const Vector&, const Vector&) {
        return (Matrix(3, 2) << 1, 1, 0, 0, 1, 1).finished();
    };
    model.jac_beta = [](const Vector&, const Vector&, const Vector&) { return (Matrix(3, 1) << 0, 1, 1).finished(); };
    return model;
}

/// Sample mean and covariance of n observed draws at (alpha, beta).
inline ReducedFormEstimate sample(const Vector& alpha, const Vector& beta, long n, std::uint64_t seed) {
    if (n < 2) throw InvalidSampleSize("smm_toy sample: need n >= 2");
    Rng rng(seed);
    Vector sum = Vector::Zero(3);
    Matrix cross = Matrix::Zero(3, 3);
    for (long i = 0; i < n; ++i) {
        const Vector x = draw(alpha, beta, rng);
        sum += x;
        cross.noalias() += x * x.transpose();
    }
    const double nn = static_cast<double>(n);
    ReducedFormEstimate rf;
    rf.n = nn;
    rf.theta_hat = sum / nn;
    rf.sigma_hat = (cross - nn * rf.theta_hat * rf.theta_hat.transpose()) / (nn - 1.0);
    return rf;
}

}  // namespace rmd::smm_toy
