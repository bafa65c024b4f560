#pragma once

// Normal and (noncentral) chi-squared distribution functions.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>

#include "rmd/errors.hpp"

namespace rmd {

inline double normal_pdf(double x) {
    if (!std::isfinite(x)) throw InvalidArgument("normal_pdf: argument must be finite");
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double normal_cdf(double x) {
    if (!std::isfinite(x)) throw InvalidArgument("normal_cdf: argument must be finite");
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

namespace detail {

// log(x^a e^-x / Gamma(a))
inline double gamma_prefactor_log(double a, double x) {
    return a * std::log(x) - x - std::lgamma(a);
}

inline double lower_gamma_series(double a, double x) {
    double term = 1.0 / a;
    double sum = term;
    for (int k = 1; k < 10000; ++k) {
        term *= x / (a + k);
        sum += term;
        if (std::abs(term) < std::abs(sum) * 1e-17) break;
    }
    return sum * std::exp(gamma_prefactor_log(a, x));
}

// Modified Lentz evaluation of the continued fraction for Q(a, x).
inline double upper_gamma_fraction(double a, double x) {
    constexpr double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 10000; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-16) break;
    }
    return std::exp(gamma_prefactor_log(a, x)) * h;
}

/// Regularized lower incomplete gamma P(a, x).
inline double gamma_p(double a, double x) {
    if (x <= 0.0) return 0.0;
    if (x < a + 1.0) return lower_gamma_series(a, x);
    return 1.0 - upper_gamma_fraction(a, x);
}

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
inline double gamma_q(double a, double x) {
    if (x <= 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - lower_gamma_series(a, x);
    return upper_gamma_fraction(a, x);
}

inline void check_df(int df) {
    if (df < 1) {
        std::ostringstream os;
        os << "degrees of freedom must be a positive integer, got " << df;
        throw InvalidArgument(os.str());
    }
}

inline void check_x(double x, const char* who) {
    if (!(x >= 0.0)) throw InvalidArgument(std::string(who) + ": x must be non-negative");
}

}  // namespace detail

inline double chisq_cdf(double x, int df) {
    detail::check_df(df);
    detail::check_x(x, "chisq_cdf");
    if (std::isinf(x)) return 1.0;
    return detail::gamma_p(0.5 * df, 0.5 * x);
}

/// Upper tail 1 - chisq_cdf, computed without cancellation.
inline double chisq_sf(double x, int df) {
    detail::check_df(df);
    detail::check_x(x, "chisq_sf");
    if (std::isinf(x)) return 0.0;
    return detail::gamma_q(0.5 * df, 0.5 * x);
}

inline double chisq_pdf(double x, int df) {
    detail::check_df(df);
    detail::check_x(x, "chisq_pdf");
    const double a = 0.5 * df;
    if (x == 0.0) {
        if (df == 1) return std::numeric_limits<double>::infinity();
        return df == 2 ? 0.5 : 0.0;
    }
    return std::exp((a - 1.0) * std::log(x) - 0.5 * x - a * std::numbers::ln2 - std::lgamma(a));
}

/// Inverse of chisq_cdf by safeguarded Newton iteration inside a bracket.
inline double chisq_quantile(double p, int df) {
    detail::check_df(df);
    if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("chisq_quantile: p must lie in (0, 1)");

    // Work on whichever tail is smaller so the target keeps full precision.
    const bool upper = p > 0.5;
    const double target = upper ? 1.0 - p : p;
    auto residual = [&](double x) {
        return upper ? target - chisq_sf(x, df) : chisq_cdf(x, df) - target;
    };

    double lo = 0.0;
    double hi = std::max(2.0 * df, 4.0);
    while (residual(hi) < 0.0) {
        lo = hi;
        hi *= 2.0;
    }

    // Wilson-Hilferty starting point, with a rational normal-quantile approximation.
    const double t = std::sqrt(-2.0 * std::log(std::min(p, 1.0 - p)));
    const double zabs = t - (2.515517 + 0.802853 * t + 0.010328 * t * t) /
                                (1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t * t * t);
    const double z = p < 0.5 ? -zabs : zabs;
    const double h = 2.0 / (9.0 * df);
    double x = df * std::pow(std::max(1.0 - h + z * std::sqrt(h), 1e-3), 3);
    if (!(x > lo && x < hi)) x = 0.5 * (lo + hi);

    for (int iter = 0; iter < 300; ++iter) {
        const double f = residual(x);
        if (f == 0.0) return x;
        if (f < 0.0) {
            lo = x;
        } else {
            hi = x;
        }
        const double dens = chisq_pdf(x, df);
        double next = (dens > 0.0 && std::isfinite(dens)) ? x - f / dens : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - x) <= 1e-15 * x || hi - lo <= 1e-15 * x) {
            return next;
        }
        x = next;
    }
    return x;
}

namespace detail {

// Poisson(lambda) weights visited outward from the mode; calls f(j, w_j) and
// stops once the visited mass is within tol of one.
template <typename F>
void poisson_mixture(double lambda, double tol, F&& f) {
    const long mode = static_cast<long>(std::floor(lambda));
    auto weight = [&](long j) {
        return std::exp(-lambda + j * std::log(lambda) - std::lgamma(static_cast<double>(j) + 1.0));
    };
    double mass = 0.0;
    for (long j = mode; j >= 0; --j) {
        const double w = weight(j);
        f(j, w);
        mass += w;
        if (w < 1e-17 && j < mode) break;
    }
    const long jmax = mode + 100 + static_cast<long>(40.0 * std::sqrt(lambda + 1.0));
    for (long j = mode + 1; j <= jmax && mass < 1.0 - tol; ++j) {
        const double w = weight(j);
        f(j, w);
        mass += w;
    }
}

inline void check_noncentrality(double k) {
    if (!(k >= 0.0) || !std::isfinite(k)) {
        throw InvalidArgument("noncentrality must be finite and non-negative");
    }
}

}  // namespace detail

/// Noncentral chi-squared cdf as a Poisson(k/2) mixture of central cdfs.
inline double noncentral_chisq_cdf(double x, int df, double k) {
    detail::check_df(df);
    detail::check_x(x, "noncentral_chisq_cdf");
    detail::check_noncentrality(k);
    if (k == 0.0) return chisq_cdf(x, df);
    if (std::isinf(x)) return 1.0;
    double sum = 0.0;
    detail::poisson_mixture(0.5 * k, 1e-12, [&](long j, double w) {
        sum += w * detail::gamma_p(0.5 * df + static_cast<double>(j), 0.5 * x);
    });
    return std::clamp(sum, 0.0, 1.0);
}

inline double noncentral_chisq_sf(double x, int df, double k) {
    detail::check_df(df);
    detail::check_x(x, "noncentral_chisq_sf");
    detail::check_noncentrality(k);
    if (k == 0.0) return chisq_sf(x, df);
    if (std::isinf(x)) return 0.0;
    double sum = 0.0;
    double mass = 0.0;
    detail::poisson_mixture(0.5 * k, 1e-12, [&](long j, double w) {
        sum += w * detail::gamma_q(0.5 * df + static_cast<double>(j), 0.5 * x);
        mass += w;
    });
    // Unvisited Poisson mass sits in the far right tail where Q is ~1.
    return std::clamp(sum + std::max(0.0, 1.0 - mass), 0.0, 1.0);
}

/// Chi-squared law with df degrees of freedom and noncentrality k (0 = central).
struct ChiSquared {
    int df = 1;
    double noncentrality = 0.0;

    ChiSquared(int df_, double k = 0.0) : df(df_), noncentrality(k) {
        detail::check_df(df);
        detail::check_noncentrality(k);
    }

    double cdf(double x) const { return noncentral_chisq_cdf(x, df, noncentrality); }
    double sf(double x) const { return noncentral_chisq_sf(x, df, noncentrality); }

    /// Quantile of the central law; only defined when noncentrality is zero.
    double quantile(double p) const {
        if (noncentrality != 0.0) throw InvalidArgument("quantile is only provided for the central law");
        return chisq_quantile(p, df);
    }
};

}  // namespace rmd
