#pragma once

// Symmetric eigendecomposition, hard-threshold rank estimation and the
// spectrally truncated Moore-Penrose pseudoinverse.

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rmd/errors.hpp"

namespace rmd {

/// Default hard-threshold exponent: eigenvalues below n^(-b) count as zero.
inline constexpr double kDefaultRankExponent = 0.99;

struct SpectralDecomposition {
    Vector eigenvalues;   // non-increasing
    Matrix eigenvectors;  // column i pairs with eigenvalues(i)
};

struct RankEstimate {
    int rank = 0;
    double threshold = 0.0;
    double b = kDefaultRankExponent;
    Vector eigenvalues_kept;
    Vector eigenvalues;  // full spectrum, non-increasing
};

struct TruncatedPinv {
    Matrix matrix;            // the pseudoinverse of truncated_source
    int rank = 0;
    Matrix truncated_source;  // input with sub-threshold eigenvalues zeroed
    double threshold = 0.0;
};

namespace detail {

inline void require_square(const Matrix& m, const char* who) {
    if (m.rows() != m.cols()) {
        std::ostringstream os;
        os << who << ": expected a square matrix, got " << m.rows() << "x" << m.cols();
        throw DimensionError(os.str());
    }
}

inline void require_finite(const Matrix& m, const char* who) {
    if (!m.allFinite()) throw InvalidMatrix(std::string(who) + ": matrix has non-finite entries");
}

inline double rank_threshold(double n, double b) {
    if (!(n >= 2.0)) throw InvalidSampleSize("sample size must be at least 2");
    if (!(b > 0.0 && b < 1.0)) throw InvalidArgument("threshold exponent b must lie in (0, 1)");
    return std::pow(n, -b);
}

}  // namespace detail

/// Eigendecomposition of (M + M')/2 with eigenvalues sorted descending.
inline SpectralDecomposition sym_eig(const Matrix& m) {
    detail::require_square(m, "sym_eig");
    detail::require_finite(m, "sym_eig");
    const Matrix sym = 0.5 * (m + m.transpose());
    SpectralDecomposition out;
    if (sym.rows() == 0) {
        out.eigenvalues = Vector(0);
        out.eigenvectors = Matrix(0, 0);
        return out;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
    if (es.info() != Eigen::Success) throw InvalidMatrix("sym_eig: eigensolver failed");
    // Eigen returns ascending order.
    out.eigenvalues = es.eigenvalues().reverse();
    out.eigenvectors = es.eigenvectors().rowwise().reverse();
    return out;
}

namespace detail {

// Rank count on an existing spectrum; clips small negatives, rejects large ones.
inline RankEstimate rank_from_spectrum(const Vector& eigenvalues, double n, double b) {
    RankEstimate est;
    est.b = b;
    est.threshold = rank_threshold(n, b);
    est.eigenvalues = eigenvalues;
    if (eigenvalues.size() > 0) {
        const double lowest = eigenvalues.minCoeff();
        if (lowest < -est.threshold) {
            std::ostringstream os;
            os << "matrix is not positive semi-definite: eigenvalue " << lowest
               << " is below -" << est.threshold;
            throw NotPSD(os.str(), lowest);
        }
    }
    std::vector<double> kept;
    for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
        const double lam = std::max(eigenvalues(i), 0.0);
        if (lam >= est.threshold) kept.push_back(lam);
    }
    est.rank = static_cast<int>(kept.size());
    est.eigenvalues_kept = Eigen::Map<const Vector>(kept.data(), static_cast<Eigen::Index>(kept.size()));
    return est;
}

}  // namespace detail

/// Number of eigenvalues of the PSD matrix M that are at least n^(-b).
inline RankEstimate estimate_rank(const Matrix& m, double n, double b = kDefaultRankExponent) {
    detail::rank_threshold(n, b);
    return detail::rank_from_spectrum(sym_eig(m).eigenvalues, n, b);
}

/// Zeroes every eigenvalue of A below n^(-b) and inverts the rest.
///
/// The result is the exact pseudoinverse of the truncated matrix, whose rank
/// equals estimate_rank(A, n, b).rank. Consistency of the pseudoinverse
/// hinges on that rank being estimated consistently.
inline TruncatedPinv truncated_pinv(const Matrix& a, double n, double b = kDefaultRankExponent) {
    detail::rank_threshold(n, b);
    const SpectralDecomposition sd = sym_eig(a);
    const RankEstimate est = detail::rank_from_spectrum(sd.eigenvalues, n, b);

    const Eigen::Index m = a.rows();
    Vector kept = Vector::Zero(m);
    Vector inverted = Vector::Zero(m);
    for (Eigen::Index j = 0; j < m; ++j) {
        const double p = std::max(sd.eigenvalues(j), 0.0);
        if (p >= est.threshold) {
            kept(j) = p;
            inverted(j) = 1.0 / p;
        }
    }
    const Matrix& r = sd.eigenvectors;
    TruncatedPinv out;
    out.rank = est.rank;
    out.threshold = est.threshold;
    out.truncated_source = r * kept.asDiagonal() * r.transpose();
    out.matrix = r * inverted.asDiagonal() * r.transpose();
    out.matrix = 0.5 * (out.matrix + out.matrix.transpose());
    out.truncated_source = 0.5 * (out.truncated_source + out.truncated_source.transpose());
    return out;
}

/// v' W v.
inline double quadratic_form(const Vector& v, const Matrix& w) {
    if (w.rows() != w.cols() || w.rows() != v.size()) {
        std::ostringstream os;
        os << "quadratic_form: vector of size " << v.size() << " against " << w.rows() << "x"
           << w.cols() << " matrix";
        throw DimensionError(os.str());
    }
    return v.dot(w * v);
}

/// Pseudoinverse of a symmetric matrix with a relative eigenvalue cutoff.
/// Used where a population (not sample) rank is wanted, e.g. power analysis.
inline Matrix sym_pinv(const Matrix& a, double rel_tol = 1e-10) {
    const SpectralDecomposition sd = sym_eig(a);
    const Eigen::Index m = a.rows();
    if (m == 0) return Matrix(0, 0);
    const double cutoff = rel_tol * std::max(std::abs(sd.eigenvalues(0)), std::abs(sd.eigenvalues(m - 1)));
    Vector inv = Vector::Zero(m);
    for (Eigen::Index j = 0; j < m; ++j) {
        if (std::abs(sd.eigenvalues(j)) > cutoff) inv(j) = 1.0 / sd.eigenvalues(j);
    }
    return sd.eigenvectors * inv.asDiagonal() * sd.eigenvectors.transpose();
}

/// Rank with a relative singular-value cutoff (population-side objects).
inline int numerical_rank(const Matrix& a, double rel_tol = 1e-10) {
    if (a.size() == 0) return 0;
    Eigen::JacobiSVD<Matrix> svd(a);
    const Vector& s = svd.singularValues();
    if (s.size() == 0 || s(0) == 0.0) return 0;
    int r = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s(i) > rel_tol * s(0)) ++r;
    }
    return r;
}

}  // namespace rmd
