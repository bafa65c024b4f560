#include <algorithm>
#include <numeric>

#include <gtest/gtest.h>

#include "rmd/entry_game.hpp"
#include "rmd/inference.hpp"
#include "rmd/smm_toy.hpp"

using rmd::Matrix;
using rmd::Vector;
namespace game = rmd::game;

namespace {

// g = c + D alpha + b beta with no dependence on theta.
rmd::StructuralModel affine_model(const Matrix& d, const Vector& c, const Vector& b, double bound = 10.0) {
    rmd::StructuralModel m;
    m.name = "affine";
    m.dims = {static_cast<int>(d.rows()), static_cast<int>(d.cols()), 1};
    m.alpha_lo = Vector::Constant(d.cols(), -bound);
    m.alpha_hi = Vector::Constant(d.cols(), bound);
    m.g = [d, c, b](const Vector&, const Vector& a, const Vector& beta) { return Vector(c + d * a + b * beta(0)); };
    m.jac_alpha = [d](const Vector&, const Vector&, const Vector&) { return d; };
    m.jac_theta = [d](const Vector&, const Vector&, const Vector&) { return Matrix::Zero(d.rows(), d.rows()).eval(); };
    m.jac_beta = [b](const Vector&, const Vector&, const Vector&) { return Matrix(b); };
    return m;
}

rmd::ReducedFormEstimate game_sample(const game::GameParams& p, long n, std::uint64_t seed) {
    return game::estimate_reduced_form(game::simulate_data(p, n, seed));
}

}  // namespace

TEST(RobustTest, ExactFixedPointHasZeroStatistic) {
    const auto p = game::GameParams::identified();
    const auto eq = game::solve_equilibrium(p);
    rmd::ReducedFormEstimate rf{eq.theta, game::population_sigma(p, eq.theta), 1000.0};
    const auto res = rmd::robust_test(game::make_model(p.states), rf, Vector::Constant(1, p.beta), 0.05);
    EXPECT_LE(res.statistic, 1e-8);
    EXPECT_FALSE(res.reject);
    EXPECT_EQ(res.r_sigma_hat, 6);
    EXPECT_EQ(res.r_alpha_hat, 3);
    EXPECT_EQ(res.df_hat, 3);
}

TEST(RobustTest, UnidentifiedDesignDropsNuisanceRank) {
    const auto p = game::GameParams::unidentified();
    const auto eq = game::solve_equilibrium(p);
    rmd::ReducedFormEstimate rf{eq.theta, game::population_sigma(p, eq.theta), 1000.0};
    const auto res = rmd::robust_test(game::make_model(p.states), rf, Vector::Constant(1, p.beta), 0.05);
    EXPECT_EQ(res.r_alpha_hat, 2);
    EXPECT_EQ(res.df_hat, 4);
}

TEST(RobustTest, DecisionInvariants) {
    const auto p = game::GameParams::identified();
    const auto model = game::make_model(p.states);
    for (double beta0 : {1.5, 1.7, 2.2}) {
        const auto rf = game_sample(p, 800, 31);
        const auto res = rmd::robust_test(model, rf, Vector::Constant(1, beta0), 0.05);
        EXPECT_DOUBLE_EQ(res.critical_value, rmd::chisq_quantile(0.95, res.df_used));
        EXPECT_DOUBLE_EQ(res.p_value, rmd::chisq_sf(res.statistic, res.df_used));
        EXPECT_EQ(res.reject, res.statistic > res.critical_value);
        EXPECT_EQ(res.reject, res.p_value < 0.05);
        EXPECT_GE(res.statistic, 0.0);
    }
}

TEST(RobustTest, FarAlternativeRejects) {
    const auto p = game::GameParams::identified();
    const auto rf = game_sample(p, 1000, 9);
    // Population statistic at beta0 = -1.5 is about 31 on 3 degrees of freedom.
    const auto res = rmd::robust_test(game::make_model(p.states), rf, Vector::Constant(1, -1.5), 0.05);
    EXPECT_TRUE(res.reject);
}

TEST(RobustTest, NonPositiveDegreesOfFreedomThrow) {
    const auto model = affine_model(Matrix::Identity(2, 2), Vector::Zero(2), Vector::Ones(2));
    rmd::ReducedFormEstimate rf{Vector::Constant(2, 0.1), Matrix::Identity(2, 2), 100.0};
    try {
        rmd::robust_test(model, rf, Vector::Zero(1), 0.05);
        FAIL() << "expected DegreesOfFreedomError";
    } catch (const rmd::DegreesOfFreedomError& e) {
        EXPECT_EQ(e.r_sigma(), 2);
        EXPECT_EQ(e.r_alpha(), 2);
    }
}

TEST(RobustTest, InputValidation) {
    const auto model = affine_model(Matrix::Identity(3, 1), Vector::Zero(3), Vector::Ones(3));
    rmd::ReducedFormEstimate rf{Vector::Zero(3), Matrix::Identity(3, 3), 100.0};
    EXPECT_THROW(rmd::robust_test(model, rf, Vector::Zero(1), 1.5), rmd::InvalidArgument);
    EXPECT_THROW(rmd::robust_test(model, rf, Vector::Zero(2), 0.05), rmd::DimensionError);
    rf.sigma_hat(0, 1) = 0.5;
    EXPECT_THROW(rmd::robust_test(model, rf, Vector::Zero(1), 0.05), rmd::InvalidMatrix);
}

TEST(RobustTest, WithoutNuisanceIsWaldDistance) {
    // One nuisance that cannot move the fit (zero column), theta-free g.
    Matrix d = Matrix::Zero(3, 1);
    const Vector c = (Vector(3) << 0.1, -0.2, 0.05).finished();
    const auto model = affine_model(d, c, Vector::Zero(3));
    Matrix sigma(3, 3);
    sigma << 2, 0.3, 0, 0.3, 1, 0.1, 0, 0.1, 0.5;
    const Vector theta_hat = (Vector(3) << 0.15, -0.1, 0.0).finished();
    rmd::ReducedFormEstimate rf{theta_hat, sigma, 400.0};
    const auto res = rmd::oracle_test(model, rf, Vector::Zero(1), 0.05, 3);
    const Vector r = theta_hat - c;
    EXPECT_NEAR(res.statistic, 400.0 * r.dot(sigma.ldlt().solve(r)), 1e-9);
    EXPECT_EQ(res.df_used, 3);
    EXPECT_TRUE(res.oracle);
}

TEST(RobustTest, PermutingCoordinatesLeavesDecisionUnchanged) {
    const auto p = game::GameParams::identified();
    const auto base = game::make_model(p.states);
    std::vector<int> perm{4, 0, 5, 2, 1, 3};
    Eigen::PermutationMatrix<Eigen::Dynamic> pm(6);
    for (int i = 0; i < 6; ++i) pm.indices()(i) = perm[i];
    const Matrix P = pm.toDenseMatrix().cast<double>();

    rmd::StructuralModel permuted = base;
    permuted.g = [base, P](const Vector& t, const Vector& a, const Vector& b) {
        return Vector(P * base.g(P.transpose() * t, a, b));
    };
    permuted.jac_alpha = [base, P](const Vector& t, const Vector& a, const Vector& b) {
        return Matrix(P * base.jac_alpha(P.transpose() * t, a, b));
    };
    permuted.jac_theta = [base, P](const Vector& t, const Vector& a, const Vector& b) {
        return Matrix(P * base.jac_theta(P.transpose() * t, a, b) * P.transpose());
    };
    permuted.jac_beta = [base, P](const Vector& t, const Vector& a, const Vector& b) {
        return Matrix(P * base.jac_beta(P.transpose() * t, a, b));
    };

    for (std::uint64_t seed : {3u, 4u, 5u}) {
        const auto rf = game_sample(p, 1000, seed);
        rmd::ReducedFormEstimate rfp{P * rf.theta_hat, P * rf.sigma_hat * P.transpose(), rf.n};
        for (double beta0 : {1.5, 1.35}) {
            const auto a = rmd::robust_test(base, rf, Vector::Constant(1, beta0), 0.05);
            const auto b = rmd::robust_test(permuted, rfp, Vector::Constant(1, beta0), 0.05);
            EXPECT_EQ(a.reject, b.reject);
            EXPECT_EQ(a.df_hat, b.df_hat);
            EXPECT_NEAR(a.statistic, b.statistic, 1e-6 * (1.0 + a.statistic));
        }
    }
}

TEST(PairedTest, SharesTheStatistic) {
    const auto p = game::GameParams::unidentified();
    const auto rf = game_sample(p, 1000, 21);
    const auto pair = rmd::robust_and_oracle_test(game::make_model(p.states), rf, Vector::Constant(1, p.beta), 0.05, 4);
    ASSERT_TRUE(pair.robust.has_value());
    EXPECT_EQ(pair.robust->statistic, pair.oracle.statistic);
    EXPECT_EQ(pair.oracle.df_used, 4);
    EXPECT_EQ(pair.robust->df_used, pair.robust->df_hat);
}

TEST(TTest, ExactFitGivesZeroStatistic) {
    Matrix d(3, 1);
    d << 1, 0, 1;
    const Vector b = (Vector(3) << 0, 1, 1).finished();
    const auto model = affine_model(d, Vector::Zero(3), b);
    const Vector theta_hat = d * Vector::Constant(1, 0.4) + b * 0.7;
    rmd::ReducedFormEstimate rf{theta_hat, Matrix::Identity(3, 3), 500.0};
    const auto res = rmd::t_test(model, rf, Vector::Constant(1, 0.7), 0.05);
    EXPECT_NEAR(res.beta_hat(0), 0.7, 1e-8);
    EXPECT_LE(std::abs(res.t_stats(0)), 1e-5);
    EXPECT_FALSE(res.any_reject());
    EXPECT_FALSE(res.degenerate);
    EXPECT_NEAR(res.critical_value, 1.959964, 1e-5);
}

TEST(TTest, FlagsUnidentifiedNuisance) {
    const auto model = rmd::smm_toy::make_model(1000, 200);
    const auto rf = rmd::smm_toy::sample((Vector(2) << 0.2, 0.1).finished(), Vector::Constant(1, 0.3), 1000, 5);
    const auto res = rmd::t_test(model, rf, Vector::Constant(1, 0.3), 0.05);
    EXPECT_TRUE(res.degenerate);
}

TEST(InvertCi, SinglePointGrid) {
    const auto p = game::GameParams::identified();
    const auto model = game::make_model(p.states);
    const auto rf = game_sample(p, 1000, 2);
    for (double beta : {1.5, 0.5}) {
        const auto ci = rmd::invert_ci(model, rf, {beta}, 0.05);
        const bool accepted = !rmd::robust_test(model, rf, Vector::Constant(1, beta), 0.05).reject;
        EXPECT_EQ(ci.accepted.size(), accepted ? 1u : 0u);
        if (accepted) {
            EXPECT_EQ(ci.accepted.front(), beta);
        }
    }
}

TEST(InvertCi, IrrelevantInterestParameterAcceptsEverything) {
    Matrix d(3, 1);
    d << 1, 1, 0;
    const auto model = affine_model(d, Vector::Zero(3), Vector::Zero(3));
    const Vector theta_hat = (Vector(3) << 0.31, 0.29, 0.02).finished();
    rmd::ReducedFormEstimate rf{theta_hat, Matrix::Identity(3, 3), 300.0};
    std::vector<double> grid;
    for (int i = 0; i <= 20; ++i) grid.push_back(-5.0 + 0.5 * i);
    const auto ci = rmd::invert_ci(model, rf, grid, 0.05);
    EXPECT_EQ(ci.accepted.size(), grid.size());
}

TEST(InvertCi, RequiresScalarBeta) {
    auto model = affine_model(Matrix::Identity(3, 1), Vector::Zero(3), Vector::Zero(3));
    model.dims.p = 2;
    rmd::ReducedFormEstimate rf{Vector::Zero(3), Matrix::Identity(3, 3), 300.0};
    EXPECT_THROW(rmd::invert_ci(model, rf, {0.0}, 0.05), rmd::InvalidArgument);
    model.dims.p = 1;
    EXPECT_THROW(rmd::invert_ci(model, rf, {}, 0.05), rmd::InvalidArgument);
}
