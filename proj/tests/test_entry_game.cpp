#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "rmd/entry_game.hpp"
#include "rmd/harness.hpp"

using rmd::Matrix;
using rmd::Vector;
namespace game = rmd::game;

namespace {

Matrix central_difference(const Vector& theta, const Vector& alpha, double beta, const game::States& st) {
    const double h = 1e-5;
    Matrix out(6, 3);
    for (int j = 0; j < 3; ++j) {
        Vector up = alpha, down = alpha;
        up(j) += h;
        down(j) -= h;
        out.col(j) = (game::game_g(theta, up, beta, st) - game::game_g(theta, down, beta, st)) / (2.0 * h);
    }
    return out;
}

}  // namespace

TEST(GameG, ZeroPayoffsGiveOneHalf) {
    EXPECT_TRUE(game::game_g(Vector::Constant(6, 0.2), Vector::Zero(3), 0.0).isApprox(Vector::Constant(6, 0.5)));
}

TEST(GameG, CertainRivalEntry) {
    Vector theta = Vector::Constant(6, 0.3);
    theta.tail(3).setOnes();
    const Vector alpha = (Vector(3) << -1.2, 0.4, 0.7).finished();
    const Vector g = game::game_g(theta, alpha, 2.0);
    for (int s = 0; s < 3; ++s) EXPECT_NEAR(g(s), rmd::normal_cdf(alpha(0) * game::kDefaultStates[s]), 1e-15);
}

TEST(GameG, RejectsProbabilitiesOutsideUnitInterval) {
    EXPECT_THROW(game::game_g(Vector::Constant(6, 1.5), Vector::Zero(3), 0.0), rmd::InvalidArgument);
    EXPECT_THROW(game::game_g(Vector::Constant(5, 0.5), Vector::Zero(3), 0.0), rmd::DimensionError);
}

TEST(Equilibrium, ZeroPayoffs) {
    const auto eq = game::solve_equilibrium(game::GameParams{});
    EXPECT_LE((eq.theta - Vector::Constant(6, 0.5)).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(Equilibrium, UnidentifiedDesignSitsAtOneHalf) {
    const auto eq = game::solve_equilibrium(game::GameParams::unidentified());
    EXPECT_LE((eq.theta - Vector::Constant(6, 0.5)).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(Equilibrium, ResidualContract) {
    for (const auto& p : {game::GameParams::identified(), game::GameParams::unidentified(),
                          game::GameParams::local_power_design()}) {
        const auto eq = game::solve_equilibrium(p);
        EXPECT_LE((eq.theta - game::game_g(eq.theta, p.alpha(), p.beta, p.states)).lpNorm<Eigen::Infinity>(), 1e-12);
        EXPECT_LE(eq.residual, 1e-12);
    }
}

TEST(Equilibrium, RejectsBadParameters) {
    game::GameParams p;
    p.states = {1.0, 0.5, 2.0};
    EXPECT_THROW(game::solve_equilibrium(p), rmd::InvalidArgument);
    p = {};
    p.state_probs = {0.5, 0.5, 0.5};
    EXPECT_THROW(game::solve_equilibrium(p), rmd::InvalidArgument);
}

TEST(Equilibrium, SwappingFirmsPermutesBeliefs) {
    const auto p = game::GameParams::identified();
    game::GameParams swapped{p.alpha2, p.alpha3, p.beta, p.alpha1};
    const auto a = game::solve_equilibrium(p);
    const auto b = game::solve_equilibrium(swapped);
    EXPECT_LE((a.theta.head(3) - b.theta.tail(3)).norm(), 1e-11);
    EXPECT_LE((a.theta.tail(3) - b.theta.head(3)).norm(), 1e-11);
}

TEST(JacAlpha, MatchesFiniteDifferences) {
    rmd::Rng rng(8);
    std::uniform_real_distribution<double> t(0.05, 0.95), a(-2.0, 2.0);
    for (int rep = 0; rep < 50; ++rep) {
        Vector theta(6), alpha(3);
        for (int i = 0; i < 6; ++i) theta(i) = t(rng);
        for (int i = 0; i < 3; ++i) alpha(i) = a(rng);
        const double beta = a(rng);
        const Matrix diff = game::game_jac_alpha(theta, alpha, beta) - central_difference(theta, alpha, beta, game::kDefaultStates);
        EXPECT_LE(diff.lpNorm<Eigen::Infinity>(), 1e-6);
    }
}

TEST(JacAlpha, RankTwoAtOneHalf) {
    const auto p = game::GameParams::unidentified();
    const Matrix j = game::game_jac_alpha(Vector::Constant(6, 0.5), p.alpha(), p.beta);
    Eigen::JacobiSVD<Matrix> svd(j);
    EXPECT_LE(svd.singularValues()(2), 1e-10);
    EXPECT_EQ(rmd::numerical_rank(j, 1e-8), 2);
}

TEST(JacAlpha, FullRankAtIdentifiedEquilibrium) {
    const auto p = game::GameParams::identified();
    const auto eq = game::solve_equilibrium(p);
    EXPECT_EQ(rmd::numerical_rank(game::game_jac_alpha(eq.theta, p.alpha(), p.beta), 1e-8), 3);
    const auto ranks = game::population_ranks(p, eq);
    EXPECT_EQ(ranks.r_sigma, 6);
    EXPECT_EQ(ranks.df(), 3);
}

TEST(JacAlpha, RankDropsExactlyWhenFirmOneIsIndifferent) {
    // On equilibria, theta_{1,s} constant across states forces firm 1's index to
    // vanish, hence theta_{1,s} = 1/2.
    const std::vector<double> values{-1.5, -0.6, 0.0, 0.4, 1.2};
    int deficient = 0;
    for (double beta : values) {
        for (double a1 : values) {
            for (double a2 : values) {
                for (double a3 : values) {
                    const game::GameParams p{beta, a1, a2, a3};
                    const auto eq = game::solve_equilibrium(p);
                    const Matrix j = game::game_jac_alpha(eq.theta, p.alpha(), p.beta);
                    Eigen::JacobiSVD<Matrix> svd(j);
                    const bool rank2 = svd.singularValues()(2) <= 1e-8;
                    const bool half = (eq.theta.head(3).array() - 0.5).abs().maxCoeff() <= 1e-8;
                    EXPECT_EQ(rank2, half) << beta << ' ' << a1 << ' ' << a2 << ' ' << a3;
                    deficient += rank2;
                }
            }
        }
    }
    EXPECT_GT(deficient, 0);
}

TEST(Simulate, ZeroPayoffFrequencies) {
    const long n = 20000;
    const auto data = game::simulate_data(game::GameParams{}, n, 5);
    double f1 = 0.0, f2 = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        f1 += data.a1[i];
        f2 += data.a2[i];
    }
    EXPECT_NEAR(f1 / n, 0.5, 3.0 / std::sqrt(double(n)));
    EXPECT_NEAR(f2 / n, 0.5, 3.0 / std::sqrt(double(n)));
}

TEST(Simulate, FrequenciesConcentrateAtEquilibrium) {
    const auto p = game::GameParams::identified();
    const auto eq = game::solve_equilibrium(p);
    const auto rf = game::estimate_reduced_form(game::simulate_data(p, eq, 30000, 12));
    for (int i = 0; i < 6; ++i) {
        const double t = eq.theta(i);
        const double ns = double(rf.state_counts[i % 3]);
        EXPECT_NEAR(rf.theta_hat(i), t, 4.0 * std::sqrt(t * (1.0 - t) / ns));
    }
}

TEST(Simulate, SameSeedSameData) {
    const auto p = game::GameParams::unidentified();
    const auto a = game::simulate_data(p, 300, 42);
    const auto b = game::simulate_data(p, 300, 42);
    EXPECT_EQ(a.state, b.state);
    EXPECT_EQ(a.a1, b.a1);
    EXPECT_EQ(a.a2, b.a2);
    std::ostringstream os;
    a.write_csv(os);
    EXPECT_EQ(os.str().rfind("market_id,state,a1,a2\n", 0), 0u);
}

TEST(ReducedForm, AllEnterIsFlaggedDegenerate) {
    game::GameDataset data;
    for (int i = 0; i < 60; ++i) {
        data.state.push_back(static_cast<std::uint8_t>(i % 3));
        data.a1.push_back(1);
        data.a2.push_back(1);
    }
    const auto rf = game::estimate_reduced_form(data);
    EXPECT_TRUE(rf.theta_hat.isApprox(Vector::Ones(6)));
    EXPECT_TRUE(rf.sigma_hat.isZero());
    EXPECT_TRUE(rf.degenerate);
}

TEST(ReducedForm, HalfWithUniformStates) {
    game::GameDataset data;
    for (int i = 0; i < 120; ++i) {
        data.state.push_back(static_cast<std::uint8_t>(i % 3));
        data.a1.push_back((i / 3) % 2);
        data.a2.push_back((i / 3 + 1) % 2);
    }
    const auto rf = game::estimate_reduced_form(data);
    EXPECT_TRUE(rf.theta_hat.isApprox(Vector::Constant(6, 0.5)));
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(rf.sigma_hat(i, i), 0.75, 1e-15);
    EXPECT_TRUE((rf.sigma_hat - Matrix(rf.sigma_hat.diagonal().asDiagonal())).isZero());
    EXPECT_EQ(rf.n, 120.0);
}

TEST(ReducedForm, SparseStateIsReported) {
    game::GameDataset data;
    for (int i = 0; i < 50; ++i) {
        data.state.push_back(i < 5 ? 2 : static_cast<std::uint8_t>(i % 2));
        data.a1.push_back(0);
        data.a2.push_back(1);
    }
    try {
        game::estimate_reduced_form(data);
        FAIL() << "expected InsufficientData";
    } catch (const rmd::InsufficientData& e) {
        EXPECT_EQ(e.state(), 3);
    }
}

TEST(ReducedForm, ScaledErrorsAreGaussian) {
    const auto p = game::GameParams::identified();
    const auto eq = game::solve_equilibrium(p);
    const Matrix sigma = game::population_sigma(p, eq.theta);
    const long n = 1000;
    const int reps = 2000;
    std::vector<std::vector<double>> z(6);
    for (int r = 0; r < reps; ++r) {
        const auto rf = game::estimate_reduced_form(game::simulate_data(p, eq, n, rmd::hash_seed({77, std::uint64_t(r)})));
        for (int i = 0; i < 6; ++i) {
            z[i].push_back(std::sqrt(double(n)) * (rf.theta_hat(i) - eq.theta(i)) / std::sqrt(sigma(i, i)));
        }
    }
    // Frequencies are lattice-valued, so allow the 1% critical value plus the
    // lattice step of the standardized frequency.
    for (int i = 0; i < 6; ++i) {
        const double d = rmd::harness::ks_statistic(z[i], rmd::normal_cdf);
        const double lattice = 1.0 / std::sqrt(2.0 * M_PI * n / 3.0 * eq.theta(i) * (1.0 - eq.theta(i)));
        EXPECT_LE(d, rmd::harness::ks_critical_1pct(reps) + lattice) << "coordinate " << i;
    }
}
