#pragma once

// Structural model interface: the map g(theta, alpha, beta) linking the
// reduced-form parameter to nuisance and interest parameters, its Jacobians,
// and an adapter that builds g from a stochastic simulator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "rmd/errors.hpp"
#include "rmd/random.hpp"

namespace rmd {

struct ModelDims {
    int m = 1;  // reduced-form dimension
    int q = 0;  // nuisance dimension
    int p = 1;  // interest dimension
};

using MapFn = std::function<Vector(const Vector& theta, const Vector& alpha, const Vector& beta)>;
using JacobianFn = std::function<Matrix(const Vector& theta, const Vector& alpha, const Vector& beta)>;

/// cbrt(machine epsilon): the usual central-difference step.
inline const double kDefaultFdStep = std::cbrt(std::numeric_limits<double>::epsilon());

struct StructuralModel {
    std::string name;
    ModelDims dims;
    MapFn g;
    Vector alpha_lo;  // box A, componentwise lo < hi
    Vector alpha_hi;
    // Optional analytic Jacobians; finite differences are used when empty.
    JacobianFn jac_theta;
    JacobianFn jac_alpha;
    JacobianFn jac_beta;
    double fd_step = kDefaultFdStep;

    void validate() const {
        if (dims.m < 1 || dims.q < 0 || dims.p < 0) throw InvalidArgument("model '" + name + "': invalid dimensions");
        if (!g) throw InvalidArgument("model '" + name + "': g is not set");
        if (alpha_lo.size() != dims.q || alpha_hi.size() != dims.q) {
            throw DimensionError("model '" + name + "': alpha bounds must have q entries");
        }
        for (int i = 0; i < dims.q; ++i) {
            if (!(alpha_lo(i) < alpha_hi(i))) {
                throw InvalidArgument("model '" + name + "': alpha bounds need lo < hi");
            }
        }
        if (!(fd_step > 0.0)) throw InvalidArgument("model '" + name + "': fd_step must be positive");
    }
};

inline constexpr double kBoundSlack = 1e-12;

namespace detail {

inline void check_sizes(const StructuralModel& model, const Vector& theta, const Vector& alpha,
                        const Vector& beta) {
    const auto& d = model.dims;
    if (theta.size() != d.m || alpha.size() != d.q || beta.size() != d.p) {
        std::ostringstream os;
        os << "model '" << model.name << "': expected (theta, alpha, beta) sizes (" << d.m << ", " << d.q
           << ", " << d.p << "), got (" << theta.size() << ", " << alpha.size() << ", " << beta.size() << ")";
        throw DimensionError(os.str());
    }
}

inline Vector checked_call(const StructuralModel& model, const Vector& theta, const Vector& alpha,
                           const Vector& beta) {
    Vector out = model.g(theta, alpha, beta);
    if (out.size() != model.dims.m || !out.allFinite()) {
        throw ModelEvaluationError("model '" + model.name + "': g returned a non-finite or mis-sized value", theta,
                                   alpha, beta);
    }
    return out;
}

// Central differences of f along each coordinate of x.
template <typename F>
Matrix central_difference(F&& f, const Vector& x, Eigen::Index rows, double step) {
    Matrix jac(rows, x.size());
    Vector xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double h = step * (1.0 + std::abs(x(i)));
        xp(i) = x(i) + h;
        const Vector up = f(xp);
        xp(i) = x(i) - h;
        const Vector down = f(xp);
        xp(i) = x(i);
        jac.col(i) = (up - down) / (2.0 * h);
    }
    return jac;
}

inline Matrix checked_jacobian(const StructuralModel& model, const Matrix& jac, Eigen::Index cols,
                               const Vector& theta, const Vector& alpha, const Vector& beta, const char* which) {
    if (jac.rows() != model.dims.m || jac.cols() != cols || !jac.allFinite()) {
        throw ModelEvaluationError("model '" + model.name + "': " + which + " is non-finite or mis-sized", theta,
                                   alpha, beta);
    }
    return jac;
}

}  // namespace detail

/// Evaluates g. alpha outside the box by at most kBoundSlack is clamped and a
/// warning appended to `warnings` (when given); larger violations throw.
inline Vector eval_g(const StructuralModel& model, const Vector& theta, const Vector& alpha, const Vector& beta,
                     std::vector<std::string>* warnings = nullptr) {
    detail::check_sizes(model, theta, alpha, beta);
    Vector a = alpha;
    for (int i = 0; i < model.dims.q; ++i) {
        const double below = model.alpha_lo(i) - a(i);
        const double above = a(i) - model.alpha_hi(i);
        const double excess = std::max(below, above);
        if (excess > kBoundSlack || std::isnan(a(i))) {
            std::ostringstream os;
            os << "model '" << model.name << "': alpha[" << i << "] = " << a(i) << " is outside ["
               << model.alpha_lo(i) << ", " << model.alpha_hi(i) << "]";
            throw InvalidArgument(os.str());
        }
        if (excess > 0.0) {
            a(i) = std::clamp(a(i), model.alpha_lo(i), model.alpha_hi(i));
            if (warnings) warnings->push_back("alpha clamped into its box by " + std::to_string(excess));
        }
    }
    return detail::checked_call(model, theta, a, beta);
}

/// d g / d alpha' (m x q).
inline Matrix jac_alpha(const StructuralModel& model, const Vector& theta, const Vector& alpha, const Vector& beta) {
    detail::check_sizes(model, theta, alpha, beta);
    if (model.jac_alpha) {
        return detail::checked_jacobian(model, model.jac_alpha(theta, alpha, beta), model.dims.q, theta, alpha, beta,
                                        "jac_alpha");
    }
    auto f = [&](const Vector& a) { return detail::checked_call(model, theta, a, beta); };
    return detail::central_difference(f, alpha, model.dims.m, model.fd_step);
}

/// d g / d theta' (m x m).
inline Matrix jac_theta(const StructuralModel& model, const Vector& theta, const Vector& alpha, const Vector& beta) {
    detail::check_sizes(model, theta, alpha, beta);
    if (model.jac_theta) {
        return detail::checked_jacobian(model, model.jac_theta(theta, alpha, beta), model.dims.m, theta, alpha, beta,
                                        "jac_theta");
    }
    auto f = [&](const Vector& t) { return detail::checked_call(model, t, alpha, beta); };
    return detail::central_difference(f, theta, model.dims.m, model.fd_step);
}

/// d g / d beta' (m x p).
inline Matrix jac_beta(const StructuralModel& model, const Vector& theta, const Vector& alpha, const Vector& beta) {
    detail::check_sizes(model, theta, alpha, beta);
    if (model.jac_beta) {
        return detail::checked_jacobian(model, model.jac_beta(theta, alpha, beta), model.dims.p, theta, alpha, beta,
                                        "jac_beta");
    }
    auto f = [&](const Vector& b) { return detail::checked_call(model, theta, alpha, b); };
    return detail::central_difference(f, beta, model.dims.m, model.fd_step);
}

/// Simulated-moments adapter: g(alpha, beta) is the average of h over B
/// simulator draws. Draw j always uses seed hash(base_seed, j), so the same
/// (alpha, beta) reproduces the same value bit for bit (common random numbers).
struct SmmAdapter {
    using Simulator =
        std::function<Vector(const Vector& alpha, const Vector& beta, std::uint64_t draw_index, std::uint64_t seed)>;
    using Statistic = std::function<Vector(const Vector& sample)>;

    Simulator simulator;
    Statistic h;
    long draws = 0;  // B; 0 means 10 * n when converted to a model
    std::uint64_t base_seed = 0;

    static long default_draws(long n) { return 10 * n; }

    Vector simulated_moments(const Vector& alpha, const Vector& beta, long b) const {
        if (b < 1) throw InvalidArgument("SMM adapter needs at least one draw");
        Vector sum;
        for (long j = 0; j < b; ++j) {
            const auto idx = static_cast<std::uint64_t>(j);
            const Vector stat = h(simulator(alpha, beta, idx, hash_seed({base_seed, idx})));
            if (j == 0) {
                sum = stat;
            } else {
                sum += stat;
            }
        }
        return sum / static_cast<double>(b);
    }

    /// A StructuralModel whose g ignores theta (so jac_theta is zero).
    StructuralModel to_model(std::string name, ModelDims dims, Vector alpha_lo, Vector alpha_hi, long n) const {
        if (!simulator || !h) throw InvalidArgument("SMM adapter needs a simulator and a statistic");
        const long b = draws > 0 ? draws : default_draws(n);
        StructuralModel model;
        model.name = std::move(name);
        model.dims = dims;
        model.alpha_lo = std::move(alpha_lo);
        model.alpha_hi = std::move(alpha_hi);
        const SmmAdapter self = *this;
        model.g = [self, b](const Vector&, const Vector& alpha, const Vector& beta) {
            return self.simulated_moments(alpha, beta, b);
        };
        const int m = dims.m;
        model.jac_theta = [m](const Vector&, const Vector&, const Vector&) { return Matrix::Zero(m, m).eval(); };
        model.validate();
        return model;
    }
};

}  // namespace rmd
