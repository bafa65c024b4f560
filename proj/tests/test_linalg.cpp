#include <random>

#include <gtest/gtest.h>

#include "rmd/linalg.hpp"
#include "rmd/random.hpp"

using rmd::Matrix;
using rmd::Vector;

namespace {

Matrix random_psd(int m, int rank, rmd::Rng& rng) {
    std::normal_distribution<double> z;
    Matrix f(m, rank);
    for (int j = 0; j < rank; ++j)
        for (int i = 0; i < m; ++i) f(i, j) = z(rng);
    return f * f.transpose();
}

}  // namespace

TEST(SymEig, IdentityHasUnitSpectrum) {
    const auto sd = rmd::sym_eig(Matrix::Identity(3, 3));
    EXPECT_TRUE(sd.eigenvalues.isApprox(Vector::Ones(3)));
    EXPECT_LT((sd.eigenvectors.transpose() * sd.eigenvectors - Matrix::Identity(3, 3)).norm(), 1e-10);
}

TEST(SymEig, DiagonalSortedDescending) {
    const auto sd = rmd::sym_eig(Vector(Vector::LinSpaced(3, 1.0, 3.0)).asDiagonal().toDenseMatrix());
    EXPECT_NEAR(sd.eigenvalues(0), 3.0, 1e-14);
    EXPECT_NEAR(sd.eigenvalues(1), 2.0, 1e-14);
    EXPECT_NEAR(sd.eigenvalues(2), 1.0, 1e-14);
}

TEST(SymEig, TwoByTwo) {
    Matrix m(2, 2);
    m << 2, 1, 1, 2;
    const auto sd = rmd::sym_eig(m);
    EXPECT_NEAR(sd.eigenvalues(0), 3.0, 1e-14);
    EXPECT_NEAR(sd.eigenvalues(1), 1.0, 1e-14);
}

TEST(SymEig, ReconstructsRandomSymmetric) {
    rmd::Rng rng(3);
    for (int rep = 0; rep < 20; ++rep) {
        Matrix a = random_psd(6, 3, rng) - random_psd(6, 2, rng);
        const auto sd = rmd::sym_eig(a);
        const Matrix back = sd.eigenvectors * sd.eigenvalues.asDiagonal() * sd.eigenvectors.transpose();
        EXPECT_LE((back - a).norm(), 1e-10 * (1.0 + a.norm()));
        for (int i = 0; i + 1 < 6; ++i) EXPECT_GE(sd.eigenvalues(i), sd.eigenvalues(i + 1));
    }
}

TEST(SymEig, AveragesAsymmetricRoundOff) {
    Matrix m(2, 2);
    m << 2, 1 + 1e-13, 1, 2;
    EXPECT_NEAR(rmd::sym_eig(m).eigenvalues(0), 3.0, 1e-12);
}

TEST(SymEig, RejectsNonFinite) {
    Matrix m = Matrix::Identity(2, 2);
    m(0, 1) = std::nan("");
    EXPECT_THROW(rmd::sym_eig(m), rmd::InvalidMatrix);
}

TEST(EstimateRank, Identity) {
    const auto est = rmd::estimate_rank(Matrix::Identity(3, 3), 100, 0.99);
    EXPECT_EQ(est.rank, 3);
    EXPECT_NEAR(est.threshold, std::pow(100.0, -0.99), 1e-15);
}

TEST(EstimateRank, DropsZeroEigenvalue) {
    const auto est = rmd::estimate_rank(Vector((Vector(3) << 1.0, 0.5, 0.0).finished()).asDiagonal().toDenseMatrix(), 1000, 0.99);
    EXPECT_EQ(est.rank, 2);
    EXPECT_NEAR(est.threshold, 1.0715193e-3, 1e-9);
    EXPECT_EQ(est.eigenvalues_kept.size(), 2);
}

TEST(EstimateRank, ZeroMatrix) { EXPECT_EQ(rmd::estimate_rank(Matrix::Zero(3, 3), 100, 0.99).rank, 0); }

TEST(EstimateRank, ThresholdIsInclusive) {
    const double thr = std::pow(1000.0, -0.99);
    Matrix m = Matrix::Zero(2, 2);
    m(0, 0) = 1.0;
    m(1, 1) = thr;
    EXPECT_EQ(rmd::estimate_rank(m, 1000, 0.99).rank, 2);
}

TEST(EstimateRank, InputValidation) {
    EXPECT_THROW(rmd::estimate_rank(Matrix::Identity(2, 2), 1, 0.99), rmd::InvalidSampleSize);
    EXPECT_THROW(rmd::estimate_rank(Matrix::Identity(2, 2), 100, 1.0), rmd::InvalidArgument);
    EXPECT_THROW(rmd::estimate_rank(Matrix::Identity(2, 2), 100, 0.0), rmd::InvalidArgument);
    Matrix neg = Matrix::Identity(2, 2);
    neg(1, 1) = -0.5;
    EXPECT_THROW(rmd::estimate_rank(neg, 100, 0.99), rmd::NotPSD);
    neg(1, 1) = -1e-6;  // within the threshold: clipped
    EXPECT_EQ(rmd::estimate_rank(neg, 100, 0.99).rank, 1);
    EXPECT_THROW(rmd::estimate_rank(Matrix::Identity(2, 3), 100, 0.99), rmd::DimensionError);
}

TEST(EstimateRank, ConsistentForSampleCovariance) {
    // Sample covariance of n draws from N(0, diag(1, 0.5, 0, 0)): the nonzero
    // block carries O(1/sqrt(n)) noise and the null block stays exactly null.
    rmd::Rng rng(17);
    std::normal_distribution<double> z;
    const int n = 1000;
    int hits = 0;
    for (int rep = 0; rep < 500; ++rep) {
        Matrix s = Matrix::Zero(4, 4);
        for (int i = 0; i < n; ++i) {
            Vector x = Vector::Zero(4);
            x(0) = z(rng);
            x(1) = std::sqrt(0.5) * z(rng);
            s += x * x.transpose();
        }
        hits += rmd::estimate_rank(s / n, n, 0.99).rank == 2;
    }
    EXPECT_GE(hits / 500.0, 0.95);
}

TEST(TruncatedPinv, IdentityIsSelfInverse) {
    const auto t = rmd::truncated_pinv(Matrix::Identity(3, 3), 100, 0.99);
    EXPECT_TRUE(t.matrix.isApprox(Matrix::Identity(3, 3)));
    EXPECT_EQ(t.rank, 3);
}

TEST(TruncatedPinv, DiagonalPseudoinverse) {
    Matrix a = Matrix::Zero(2, 2);
    a(0, 0) = 2.0;
    const auto t = rmd::truncated_pinv(a, 100, 0.99);
    EXPECT_NEAR(t.matrix(0, 0), 0.5, 1e-14);
    EXPECT_NEAR(t.matrix(1, 1), 0.0, 1e-14);
    EXPECT_EQ(t.rank, 1);
}

TEST(TruncatedPinv, TruncatesSmallEigenvalue) {
    Matrix a = Matrix::Zero(2, 2);
    a(0, 0) = 4.0;
    a(1, 1) = 1e-6;
    const auto t = rmd::truncated_pinv(a, 1000, 0.99);
    EXPECT_EQ(t.rank, 1);
    EXPECT_NEAR(t.matrix(0, 0), 0.25, 1e-14);
    EXPECT_NEAR(t.matrix(1, 1), 0.0, 1e-14);
    EXPECT_NEAR(t.truncated_source(1, 1), 0.0, 1e-14);
}

TEST(TruncatedPinv, PseudoinverseIdentitiesOnRandomPsd) {
    rmd::Rng rng(5);
    for (int rep = 0; rep < 100; ++rep) {
        const int m = 3 + rep % 5;
        const int r = 1 + rep % m;
        const Matrix a = random_psd(m, r, rng);
        const auto t = rmd::truncated_pinv(a, 1000, 0.99);
        const Matrix& at = t.truncated_source;
        const Matrix& w = t.matrix;
        EXPECT_LE((at * w * at - at).norm(), 1e-8 * (1.0 + at.norm()));
        EXPECT_LE((w * at * w - w).norm(), 1e-8 * (1.0 + w.norm()));
        EXPECT_LE((w - w.transpose()).norm(), 1e-10);
        EXPECT_EQ(t.rank, rmd::estimate_rank(a, 1000, 0.99).rank);
        EXPECT_EQ(rmd::numerical_rank(at, 1e-10), t.rank);
    }
}

TEST(TruncatedPinv, ExactInverseWhenNothingTruncated) {
    rmd::Rng rng(9);
    const Matrix a = random_psd(4, 4, rng) + Matrix::Identity(4, 4);
    const auto t = rmd::truncated_pinv(a, 1000, 0.99);
    EXPECT_LE((t.matrix * a - Matrix::Identity(4, 4)).norm(), 1e-8);
}

TEST(QuadraticForm, Examples) {
    EXPECT_DOUBLE_EQ(rmd::quadratic_form(Vector::Unit(2, 0), Matrix::Identity(2, 2)), 1.0);
    Matrix w(2, 2);
    w << 2, 1, 1, 2;
    EXPECT_DOUBLE_EQ(rmd::quadratic_form(Vector::Zero(2), w), 0.0);
    EXPECT_DOUBLE_EQ(rmd::quadratic_form(Vector::Ones(2), w), 6.0);
    EXPECT_THROW(rmd::quadratic_form(Vector::Ones(3), w), rmd::DimensionError);
}
