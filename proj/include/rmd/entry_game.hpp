#pragma once

// Static two-firm entry game with private N(0,1) payoff shocks. Firm i enters
// in state s when its expected payoff plus shock is positive, so equilibrium
// beliefs solve theta = g(theta, alpha, beta) with
//
//   theta_{1,s} = Phi((1 - theta_{2,s}) s beta   + theta_{2,s} alpha1 s)
//   theta_{2,s} = Phi((1 - theta_{1,s}) s alpha2 + theta_{1,s} alpha3 s)
//
// Layout of theta: (theta_{1,s1}, theta_{1,s2}, theta_{1,s3}, theta_{2,s1}, theta_{2,s2}, theta_{2,s3}).

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <ostream>
#include <random>
#include <sstream>
#include <vector>

#include "rmd/dist.hpp"
#include "rmd/errors.hpp"
#include "rmd/inference.hpp"
#include "rmd/linalg.hpp"
#include "rmd/model.hpp"
#include "rmd/random.hpp"

namespace rmd::game {

using States = std::array<double, 3>;

inline constexpr States kDefaultStates{1.0 / 3.0, 2.0 / 3.0, 1.0};
inline constexpr int kNumStates = 3;
inline constexpr int kDim = 6;
inline constexpr double kDefaultAlphaBound = 3.0;

struct GameParams {
    double beta = 0.0;    // firm 1 monopoly slope (interest)
    double alpha1 = 0.0;  // firm 1 duopoly slope
    double alpha2 = 0.0;  // firm 2 monopoly slope
    double alpha3 = 0.0;  // firm 2 duopoly slope
    States states = kDefaultStates;
    std::array<double, 3> state_probs{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};

    Vector alpha() const { return (Vector(3) << alpha1, alpha2, alpha3).finished(); }

    void validate() const {
        if (!(states[0] < states[1] && states[1] < states[2]) || !(states[0] > 0.0)) {
            throw InvalidArgument("game: states must be positive and strictly increasing");
        }
        double total = 0.0;
        for (double p : state_probs) {
            if (!(p > 0.0)) throw InvalidArgument("game: state probabilities must be positive");
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-12) throw InvalidArgument("game: state probabilities must sum to one");
        for (double v : {beta, alpha1, alpha2, alpha3}) {
            if (!std::isfinite(v)) throw InvalidArgument("game: payoff parameters must be finite");
        }
    }

    /// Point-identified design: beta0 = 1.5, full-rank nuisance Jacobian.
    static GameParams identified() { return {1.5, -2.0, 1.5, -0.5}; }

    /// alpha1 = -beta and alpha3 = -alpha2 put both firms at theta = 1/2, where
    /// the nuisance Jacobian drops to rank 2.
    static GameParams unidentified() { return {0.3, -0.3, 0.6, -0.6}; }

    /// Design for local power checks at n = 1000: states (2/3, 4/3, 2),
    /// beta0 = 3. Here the finite-sample drift of the statistic under
    /// beta0 + delta / sqrt(n) stays close to its local limit.
    static GameParams local_power_design() {
        GameParams p{3.0, -1.0, 0.5, 1.0};
        p.states = {2.0 / 3.0, 4.0 / 3.0, 2.0};
        return p;
    }
};

namespace detail {

inline void check_theta(const Vector& theta) {
    if (theta.size() != kDim) throw DimensionError("game: theta must have 6 entries");
    for (Eigen::Index i = 0; i < kDim; ++i) {
        if (!(theta(i) >= -1e-9 && theta(i) <= 1.0 + 1e-9)) {
            throw InvalidArgument("game: choice probabilities must lie in [0, 1]");
        }
    }
}

inline void check_alpha(const Vector& alpha) {
    if (alpha.size() != 3) throw DimensionError("game: alpha must have 3 entries");
}

// Best-response index of firm 1 and firm 2 in state s.
inline double index1(const Vector& theta, const Vector& alpha, double beta, const States& st, int s) {
    const double t2 = theta(3 + s);
    return (1.0 - t2) * st[s] * beta + t2 * alpha(0) * st[s];
}

inline double index2(const Vector& theta, const Vector& alpha, const States& st, int s) {
    const double t1 = theta(s);
    return (1.0 - t1) * st[s] * alpha(1) + t1 * alpha(2) * st[s];
}

}  // namespace detail

inline Vector game_g(const Vector& theta, const Vector& alpha, double beta, const States& states = kDefaultStates) {
    detail::check_theta(theta);
    detail::check_alpha(alpha);
    Vector out(kDim);
    for (int s = 0; s < kNumStates; ++s) {
        out(s) = normal_cdf(detail::index1(theta, alpha, beta, states, s));
        out(3 + s) = normal_cdf(detail::index2(theta, alpha, states, s));
    }
    return out;
}

/// Closed-form d g / d alpha' (6 x 3).
inline Matrix game_jac_alpha(const Vector& theta, const Vector& alpha, double beta,
                             const States& states = kDefaultStates) {
    detail::check_theta(theta);
    detail::check_alpha(alpha);
    Matrix jac = Matrix::Zero(kDim, 3);
    for (int s = 0; s < kNumStates; ++s) {
        const double dens1 = normal_pdf(detail::index1(theta, alpha, beta, states, s));
        const double dens2 = normal_pdf(detail::index2(theta, alpha, states, s));
        jac(s, 0) = dens1 * theta(3 + s) * states[s];
        jac(3 + s, 1) = dens2 * (1.0 - theta(s)) * states[s];
        jac(3 + s, 2) = dens2 * theta(s) * states[s];
    }
    return jac;
}

/// d g / d theta' (6 x 6): only the cross-firm belief derivatives are nonzero.
inline Matrix game_jac_theta(const Vector& theta, const Vector& alpha, double beta,
                             const States& states = kDefaultStates) {
    detail::check_theta(theta);
    detail::check_alpha(alpha);
    Matrix jac = Matrix::Zero(kDim, kDim);
    for (int s = 0; s < kNumStates; ++s) {
        const double dens1 = normal_pdf(detail::index1(theta, alpha, beta, states, s));
        const double dens2 = normal_pdf(detail::index2(theta, alpha, states, s));
        jac(s, 3 + s) = dens1 * (alpha(0) - beta) * states[s];
        jac(3 + s, s) = dens2 * (alpha(2) - alpha(1)) * states[s];
    }
    return jac;
}

/// d g / d beta (6 x 1).
inline Matrix game_jac_beta(const Vector& theta, const Vector& alpha, double beta,
                            const States& states = kDefaultStates) {
    detail::check_theta(theta);
    detail::check_alpha(alpha);
    Matrix jac = Matrix::Zero(kDim, 1);
    for (int s = 0; s < kNumStates; ++s) {
        const double dens1 = normal_pdf(detail::index1(theta, alpha, beta, states, s));
        jac(s, 0) = dens1 * (1.0 - theta(3 + s)) * states[s];
    }
    return jac;
}

struct EquilibriumBeliefs {
    Vector theta;
    double residual = 0.0;  // sup-norm of theta - g(theta)
    int iterations = 0;
};

/// Damped fixed-point iteration theta <- (1 - w) theta + w g(theta) followed
/// by Newton polishing on theta - g(theta) = 0.
inline EquilibriumBeliefs solve_equilibrium(const GameParams& params,
                                            const Vector& theta_init = Vector::Constant(kDim, 0.5),
                                            double damping = 0.5) {
    params.validate();
    detail::check_theta(theta_init);
    if (!(damping > 0.0 && damping <= 1.0)) throw InvalidArgument("solve_equilibrium: damping must lie in (0, 1]");
    const Vector alpha = params.alpha();
    auto residual_of = [&](const Vector& t) {
        return (t - game_g(t, alpha, params.beta, params.states)).lpNorm<Eigen::Infinity>();
    };

    EquilibriumBeliefs eq;
    Vector theta = theta_init;
    std::deque<double> tail;
    constexpr int kMaxIter = 100000;
    int it = 0;
    double res = residual_of(theta);
    for (; it < kMaxIter && res > 1e-13; ++it) {
        theta = (1.0 - damping) * theta + damping * game_g(theta, alpha, params.beta, params.states);
        res = residual_of(theta);
        tail.push_back(res);
        if (tail.size() > 10) tail.pop_front();
    }

    for (int k = 0; k < 5; ++k) {
        const Vector f = theta - game_g(theta, alpha, params.beta, params.states);
        const Matrix jac = Matrix::Identity(kDim, kDim) - game_jac_theta(theta, alpha, params.beta, params.states);
        const Vector next = (theta - jac.partialPivLu().solve(f)).cwiseMax(0.0).cwiseMin(1.0);
        const double next_res = residual_of(next);
        if (!(next_res < res)) break;
        theta = next;
        res = next_res;
        tail.push_back(res);
        if (tail.size() > 10) tail.pop_front();
    }

    if (!(res <= 1e-12)) {
        std::ostringstream os;
        os << "equilibrium iteration did not converge: residual " << res << " after " << it << " iterations";
        throw EquilibriumError(os.str(), std::vector<double>(tail.begin(), tail.end()));
    }
    eq.theta = theta;
    eq.residual = res;
    eq.iterations = it;
    return eq;
}

struct GameDataset {
    std::vector<std::uint8_t> state;  // 0-based state index
    std::vector<std::uint8_t> a1;     // firm 1 entered
    std::vector<std::uint8_t> a2;     // firm 2 entered

    std::size_t size() const { return state.size(); }

    /// CSV with columns market_id, state (1-based), a1, a2.
    void write_csv(std::ostream& os) const {
        os << "market_id,state,a1,a2\n";
        for (std::size_t i = 0; i < size(); ++i) {
            os << i + 1 << ',' << state[i] + 1 << ',' << int(a1[i]) << ',' << int(a2[i]) << '\n';
        }
    }
};

/// Draws n markets at the equilibrium of `params`; deterministic in seed.
inline GameDataset simulate_data(const GameParams& params, const EquilibriumBeliefs& eq, long n, std::uint64_t seed) {
    if (n < 1) throw InvalidSampleSize("simulate_data: need at least one market");
    const Vector alpha = params.alpha();
    std::array<double, 3> idx1{};
    std::array<double, 3> idx2{};
    for (int s = 0; s < kNumStates; ++s) {
        idx1[s] = detail::index1(eq.theta, alpha, params.beta, params.states, s);
        idx2[s] = detail::index2(eq.theta, alpha, params.states, s);
    }
    Rng rng(seed);
    std::discrete_distribution<int> pick_state(params.state_probs.begin(), params.state_probs.end());
    std::normal_distribution<double> shock(0.0, 1.0);
    GameDataset data;
    data.state.resize(static_cast<std::size_t>(n));
    data.a1.resize(static_cast<std::size_t>(n));
    data.a2.resize(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) {
        const int s = pick_state(rng);
        const double e1 = shock(rng);
        const double e2 = shock(rng);
        data.state[i] = static_cast<std::uint8_t>(s);
        data.a1[i] = idx1[s] + e1 > 0.0;
        data.a2[i] = idx2[s] + e2 > 0.0;
    }
    return data;
}

inline GameDataset simulate_data(const GameParams& params, long n, std::uint64_t seed) {
    return simulate_data(params, solve_equilibrium(params), n, seed);
}

struct GameReducedForm : ReducedFormEstimate {
    std::array<long, 3> state_counts{};
    bool degenerate = false;  // some entry frequency is 0 or 1, so Sigma_hat loses rank
};

inline constexpr long kMinStateCount = 10;

/// Entry frequencies per (firm, state) and their diagonal asymptotic variance
/// theta(1 - theta) / p_s; firms' actions are independent given the state.
inline GameReducedForm estimate_reduced_form(const GameDataset& data) {
    const std::size_t n = data.size();
    if (data.a1.size() != n || data.a2.size() != n) throw DimensionError("game dataset columns differ in length");
    GameReducedForm rf;
    std::array<long, 3> enter1{};
    std::array<long, 3> enter2{};
    for (std::size_t i = 0; i < n; ++i) {
        const int s = data.state[i];
        if (s < 0 || s >= kNumStates) throw InvalidArgument("game dataset: state index out of range");
        ++rf.state_counts[s];
        enter1[s] += data.a1[i] ? 1 : 0;
        enter2[s] += data.a2[i] ? 1 : 0;
    }
    for (int s = 0; s < kNumStates; ++s) {
        if (rf.state_counts[s] < kMinStateCount) {
            std::ostringstream os;
            os << "state " << s + 1 << " observed " << rf.state_counts[s] << " times; need at least "
               << kMinStateCount;
            throw InsufficientData(os.str(), s + 1);
        }
    }
    rf.n = static_cast<double>(n);
    rf.theta_hat.resize(kDim);
    rf.sigma_hat = Matrix::Zero(kDim, kDim);
    for (int s = 0; s < kNumStates; ++s) {
        const double ns = static_cast<double>(rf.state_counts[s]);
        const double ps = ns / rf.n;
        const double t1 = enter1[s] / ns;
        const double t2 = enter2[s] / ns;
        rf.theta_hat(s) = t1;
        rf.theta_hat(3 + s) = t2;
        rf.sigma_hat(s, s) = t1 * (1.0 - t1) / ps;
        rf.sigma_hat(3 + s, 3 + s) = t2 * (1.0 - t2) / ps;
    }
    rf.degenerate = (rf.sigma_hat.diagonal().array() == 0.0).any();
    return rf;
}

/// Population counterpart of Sigma_hat at the equilibrium.
inline Matrix population_sigma(const GameParams& params, const Vector& theta0) {
    Matrix sigma = Matrix::Zero(kDim, kDim);
    for (int s = 0; s < kNumStates; ++s) {
        sigma(s, s) = theta0(s) * (1.0 - theta0(s)) / params.state_probs[s];
        sigma(3 + s, 3 + s) = theta0(3 + s) * (1.0 - theta0(3 + s)) / params.state_probs[s];
    }
    return sigma;
}

/// The game as a StructuralModel with q = 3, p = 1 and analytic Jacobians.
inline StructuralModel make_model(const States& states = kDefaultStates, double alpha_bound = kDefaultAlphaBound) {
    if (!(alpha_bound > 0.0)) throw InvalidArgument("entry game: alpha bound must be positive");
    StructuralModel model;
    model.name = "entry_game";
    model.dims = {kDim, 3, 1};
    model.alpha_lo = Vector::Constant(3, -alpha_bound);
    model.alpha_hi = Vector::Constant(3, alpha_bound);
    model.g = [states](const Vector& t, const Vector& a, const Vector& b) { return game_g(t, a, b(0), states); };
    model.jac_alpha = [states](const Vector& t, const Vector& a, const Vector& b) {
        return game_jac_alpha(t, a, b(0), states);
    };
    model.jac_theta = [states](const Vector& t, const Vector& a, const Vector& b) {
        return game_jac_theta(t, a, b(0), states);
    };
    model.jac_beta = [states](const Vector& t, const Vector& a, const Vector& b) {
        return game_jac_beta(t, a, b(0), states);
    };
    return model;
}

/// Population ranks and degrees of freedom r_Sigma - r_alpha at the equilibrium.
struct PopulationRanks {
    int r_sigma = 0;
    int r_alpha = 0;
    int df() const { return r_sigma - r_alpha; }
};

inline PopulationRanks population_ranks(const GameParams& params, const EquilibriumBeliefs& eq) {
    PopulationRanks out;
    out.r_sigma = numerical_rank(population_sigma(params, eq.theta), 1e-10);
    out.r_alpha = numerical_rank(game_jac_alpha(eq.theta, params.alpha(), params.beta, params.states), 1e-8);
    return out;
}

}  // namespace rmd::game
