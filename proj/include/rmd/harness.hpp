#pragma once

// Monte Carlo experiments: size tables, power curves, rank-consistency
// frequencies and null-distribution draws. Every replication gets its own
// seed hash(master_seed, experiment id, cell, n, replication), so results do
// not depend on the number of worker threads.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "rmd/entry_game.hpp"
#include "rmd/errors.hpp"
#include "rmd/inference.hpp"
#include "rmd/linear_gaussian.hpp"
#include "rmd/random.hpp"

namespace rmd::harness {

enum class ExperimentKind { Size, Power, Rank, NullDist };

inline const char* to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::Size: return "size";
        case ExperimentKind::Power: return "power";
        case ExperimentKind::Rank: return "rank";
        case ExperimentKind::NullDist: return "null-dist";
    }
    return "?";
}

struct McConfig {
    std::string model = "entry_game";  // "entry_game" or "linear_gaussian"
    game::GameParams game = game::GameParams::identified();
    double alpha_bound = game::kDefaultAlphaBound;
    std::uint64_t design_seed = 11;  // linear_gaussian only
    std::vector<long> sample_sizes{1000};
    int replications = 2000;
    double tau = 0.05;
    double b = kDefaultRankExponent;
    std::uint64_t master_seed = 20240611;
    ExperimentKind kind = ExperimentKind::Size;
    std::vector<double> beta_grid;        // data-generating beta values for power curves
    std::optional<double> beta0;          // hypothesized value; defaults to the DGP's beta
    double t_alpha_halfwidth = 50.0;      // box of the t-test joint fit
    double t_beta_halfwidth = 50.0;
    double max_failure_fraction = 0.01;
    int threads = 0;  // 0: hardware concurrency
    std::string output_csv;
    std::string output_meta;

    void validate() const {
        if (model != "entry_game" && model != "linear_gaussian") {
            throw ConfigError("unknown model '" + model + "' (expected entry_game or linear_gaussian)");
        }
        if (replications < 1) throw ConfigError("replications must be at least 1");
        if (sample_sizes.empty()) throw ConfigError("sample_sizes must not be empty");
        for (long n : sample_sizes) {
            if (n < 50) throw ConfigError("sample sizes must be at least 50");
        }
        if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie in (0, 1)");
        if (!(b > 0.0 && b < 1.0)) throw ConfigError("b must lie in (0, 1)");
        if (kind == ExperimentKind::Power && beta_grid.empty()) throw ConfigError("power experiments need a beta_grid");
        if (!(alpha_bound > 0.0)) throw ConfigError("alpha_bound must be positive");
        if (!(max_failure_fraction >= 0.0 && max_failure_fraction < 1.0)) {
            throw ConfigError("max_failure_fraction must lie in [0, 1)");
        }
        if (threads < 0) throw ConfigError("threads must be non-negative");
        if (model == "entry_game") {
            try {
                game.validate();
            } catch (const Error& e) {
                throw ConfigError(e.what());
            }
        }
    }
};

/// One replication-ready data-generating process: the model under test,
/// the null value, population ranks and a sampler for a given beta.
struct Dgp {
    StructuralModel model;
    double beta0 = 0.0;
    int r_sigma = 0;
    int r_alpha = 0;
    std::function<ReducedFormEstimate(double beta, long n, std::uint64_t seed)> sample;

    int df() const { return r_sigma - r_alpha; }
};

inline Dgp make_dgp(const McConfig& cfg) {
    Dgp dgp;
    if (cfg.model == "entry_game") {
        const game::GameParams params = cfg.game;
        const game::EquilibriumBeliefs eq = game::solve_equilibrium(params);
        const game::PopulationRanks ranks = game::population_ranks(params, eq);
        dgp.model = game::make_model(params.states, cfg.alpha_bound);
        dgp.beta0 = cfg.beta0.value_or(params.beta);
        dgp.r_sigma = ranks.r_sigma;
        dgp.r_alpha = ranks.r_alpha;
        // Equilibria at the data-generating beta are solved once per beta value.
        auto cache = std::make_shared<std::vector<std::pair<double, game::EquilibriumBeliefs>>>();
        auto mutex = std::make_shared<std::mutex>();
        dgp.sample = [params, cache, mutex](double beta, long n, std::uint64_t seed) -> ReducedFormEstimate {
            game::GameParams p = params;
            p.beta = beta;
            std::optional<game::EquilibriumBeliefs> eq_beta;
            {
                std::lock_guard<std::mutex> lock(*mutex);
                for (const auto& [bv, e] : *cache) {
                    if (bv == beta) eq_beta = e;
                }
                if (!eq_beta) {
                    eq_beta = game::solve_equilibrium(p);
                    cache->emplace_back(beta, *eq_beta);
                }
            }
            return game::estimate_reduced_form(game::simulate_data(p, *eq_beta, n, seed));
        };
    } else {
        auto design = synthetic::LinearGaussianDesign::make(cfg.design_seed);
        design.alpha_bound = cfg.alpha_bound;
        dgp.model = design.model();
        dgp.beta0 = cfg.beta0.value_or(design.beta0);
        dgp.r_sigma = design.r_sigma;
        dgp.r_alpha = design.r_alpha;
        dgp.sample = [design](double beta, long n, std::uint64_t seed) { return design.sample(beta, n, seed); };
    }
    return dgp;
}

/// Runs body(i) for i in [0, count) on up to `threads` workers. The first
/// exception escaping a body is rethrown after all workers stop.
inline void parallel_for(int count, int threads, const std::function<void(int)>& body) {
    if (count <= 0) return;
    unsigned hw = std::thread::hardware_concurrency();
    int workers = threads > 0 ? threads : static_cast<int>(hw == 0 ? 1 : hw);
    workers = std::max(1, std::min(workers, count));
    if (workers == 1) {
        for (int i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= count) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(count);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

/// Outcome of the three tests on one simulated dataset.
struct Replication {
    bool data_ok = false;
    std::optional<RobustTestResult> robust;
    std::optional<RobustTestResult> oracle;
    std::optional<TTestResult> ttest;
    std::string error;
};

inline Replication run_replication(const Dgp& dgp, const McConfig& cfg, double beta_data, long n, std::uint64_t seed,
                                   bool with_ttest) {
    Replication rep;
    ReducedFormEstimate rf;
    try {
        rf = dgp.sample(beta_data, n, seed);
        rep.data_ok = true;
    } catch (const Error& e) {
        rep.error = e.what();
        return rep;
    }
    const Vector b0 = Vector::Constant(1, dgp.beta0);
    try {
        TestOptions opts;
        opts.b = cfg.b;
        opts.seed = seed;
        PairedTestResult pair = robust_and_oracle_test(dgp.model, rf, b0, cfg.tau, dgp.df(), opts);
        rep.oracle = std::move(pair.oracle);
        rep.robust = std::move(pair.robust);
        if (!rep.robust) rep.error = "estimated degrees of freedom not positive";
    } catch (const Error& e) {
        rep.error = e.what();
    }
    if (with_ttest) {
        try {
            TTestOptions topts;
            topts.b = cfg.b;
            topts.seed = seed;
            topts.alpha_halfwidth = cfg.t_alpha_halfwidth;
            topts.beta_halfwidth = cfg.t_beta_halfwidth;
            rep.ttest = t_test(dgp.model, rf, b0, cfg.tau, topts);
        } catch (const Error& e) {
            if (rep.error.empty()) rep.error = e.what();
        }
    }
    return rep;
}

inline constexpr std::uint64_t kSizeId = 1;
inline constexpr std::uint64_t kPowerId = 2;
inline constexpr std::uint64_t kRankId = 3;
inline constexpr std::uint64_t kNullId = 4;

inline std::uint64_t replication_seed(const McConfig& cfg, std::uint64_t experiment, std::uint64_t cell, long n,
                                      int rep) {
    return hash_seed({cfg.master_seed, experiment, cell, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(rep)});
}

/// One (test, n, beta) cell of a size table or power curve.
struct RateRow {
    std::string test;  // Oracle, Robust or T-test
    long n = 0;
    double beta = 0.0;  // data-generating beta
    double rate = 0.0;
    double se = 0.0;  // sqrt(rate (1 - rate) / successes)
    double mean_df = 0.0;
    double mean_r_alpha = 0.0;
    int successes = 0;
    int failures = 0;
};

struct SizeTable {
    std::vector<RateRow> rows;
    int replications = 0;
    double beta0 = 0.0;
    int df = 0;
    int r_alpha = 0;

    const RateRow* find(const std::string& test, long n, std::optional<double> beta = {}) const {
        for (const auto& r : rows) {
            if (r.test == test && r.n == n && (!beta || r.beta == *beta)) return &r;
        }
        return nullptr;
    }

    int max_failures() const {
        int worst = 0;
        for (const auto& r : rows) worst = std::max(worst, r.failures);
        return worst;
    }
};

namespace detail {

struct Tally {
    int rejects = 0;
    int ok = 0;
    double df_sum = 0.0;
    double ra_sum = 0.0;

    RateRow row(const std::string& test, long n, double beta, int total) const {
        RateRow r;
        r.test = test;
        r.n = n;
        r.beta = beta;
        r.successes = ok;
        r.failures = total - ok;
        if (ok > 0) {
            r.rate = static_cast<double>(rejects) / ok;
            r.se = std::sqrt(r.rate * (1.0 - r.rate) / ok);
            r.mean_df = df_sum / ok;
            r.mean_r_alpha = ra_sum / ok;
        }
        return r;
    }
};

inline void tally_cell(SizeTable& table, const Dgp& dgp, const McConfig& cfg, std::uint64_t experiment,
                       std::uint64_t cell, double beta_data, long n) {
    const int R = cfg.replications;
    std::vector<Replication> reps(static_cast<std::size_t>(R));
    parallel_for(R, cfg.threads, [&](int i) {
        reps[static_cast<std::size_t>(i)] =
            run_replication(dgp, cfg, beta_data, n, replication_seed(cfg, experiment, cell, n, i), true);
    });
    Tally oracle, robust, ttest;
    for (const auto& rep : reps) {
        if (rep.oracle) {
            ++oracle.ok;
            oracle.rejects += rep.oracle->reject;
            oracle.df_sum += rep.oracle->df_used;
            oracle.ra_sum += rep.oracle->r_alpha_hat;
        }
        if (rep.robust) {
            ++robust.ok;
            robust.rejects += rep.robust->reject;
            robust.df_sum += rep.robust->df_hat;
            robust.ra_sum += rep.robust->r_alpha_hat;
        }
        if (rep.ttest) {
            ++ttest.ok;
            ttest.rejects += rep.ttest->any_reject();
            ttest.df_sum += 1.0;
        }
    }
    table.rows.push_back(oracle.row("Oracle", n, beta_data, R));
    table.rows.push_back(robust.row("Robust", n, beta_data, R));
    table.rows.push_back(ttest.row("T-test", n, beta_data, R));
}

}  // namespace detail

/// Rejection rates of the oracle, robust and t tests at the true beta.
inline SizeTable run_size_experiment(const McConfig& cfg) {
    cfg.validate();
    const Dgp dgp = make_dgp(cfg);
    SizeTable table;
    table.replications = cfg.replications;
    table.beta0 = dgp.beta0;
    table.df = dgp.df();
    table.r_alpha = dgp.r_alpha;
    for (long n : cfg.sample_sizes) detail::tally_cell(table, dgp, cfg, kSizeId, 0, dgp.beta0, n);
    return table;
}

/// Rejection rates of H0: beta = beta0 with data generated at each beta in the grid.
inline SizeTable run_power_experiment(const McConfig& cfg) {
    McConfig c = cfg;
    c.kind = ExperimentKind::Power;
    c.validate();
    const Dgp dgp = make_dgp(c);
    SizeTable table;
    table.replications = c.replications;
    table.beta0 = dgp.beta0;
    table.df = dgp.df();
    table.r_alpha = dgp.r_alpha;
    for (long n : c.sample_sizes) {
        for (std::size_t j = 0; j < c.beta_grid.size(); ++j) {
            detail::tally_cell(table, dgp, c, kPowerId, j, c.beta_grid[j], n);
        }
    }
    return table;
}

struct RankRow {
    long n = 0;
    double freq_r_alpha = 0.0;  // share of successful replications with r_alpha_hat = r_alpha
    double freq_r_sigma = 0.0;
    double freq_df = 0.0;
    int successes = 0;
    int failures = 0;
};

struct RankTable {
    std::vector<RankRow> rows;
    int r_sigma = 0;
    int r_alpha = 0;
    int replications = 0;

    int max_failures() const {
        int worst = 0;
        for (const auto& r : rows) worst = std::max(worst, r.failures);
        return worst;
    }
};

/// Frequency with which the estimated ranks hit the population ranks.
inline RankTable run_rank_consistency(const McConfig& cfg) {
    cfg.validate();
    const Dgp dgp = make_dgp(cfg);
    RankTable table;
    table.r_sigma = dgp.r_sigma;
    table.r_alpha = dgp.r_alpha;
    table.replications = cfg.replications;
    for (long n : cfg.sample_sizes) {
        const int R = cfg.replications;
        std::vector<Replication> reps(static_cast<std::size_t>(R));
        parallel_for(R, cfg.threads, [&](int i) {
            reps[static_cast<std::size_t>(i)] =
                run_replication(dgp, cfg, dgp.beta0, n, replication_seed(cfg, kRankId, 0, n, i), false);
        });
        RankRow row;
        row.n = n;
        int ra = 0, rs = 0, df = 0;
        for (const auto& rep : reps) {
            if (!rep.oracle) continue;
            ++row.successes;
            ra += rep.oracle->r_alpha_hat == dgp.r_alpha;
            rs += rep.oracle->r_sigma_hat == dgp.r_sigma;
            df += rep.oracle->df_hat == dgp.df();
        }
        row.failures = R - row.successes;
        if (row.successes > 0) {
            row.freq_r_alpha = static_cast<double>(ra) / row.successes;
            row.freq_r_sigma = static_cast<double>(rs) / row.successes;
            row.freq_df = static_cast<double>(df) / row.successes;
        }
        table.rows.push_back(row);
    }
    return table;
}

/// Sup-distance between the empirical cdf of `samples` and `cdf`.
inline double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
    if (samples.size() < 10) throw InvalidArgument("ks_statistic: need at least 10 samples");
    std::sort(samples.begin(), samples.end());
    const double N = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double f = cdf(samples[i]);
        d = std::max({d, (i + 1.0) / N - f, f - static_cast<double>(i) / N});
    }
    return d;
}

/// Asymptotic Kolmogorov critical value at level 1%.
inline double ks_critical_1pct(std::size_t n) { return 1.628 / std::sqrt(static_cast<double>(n)); }

struct NullDistribution {
    std::vector<double> statistics;  // in replication order
    int df = 0;
    long n = 0;
    double ks = 0.0;
    double critical = 0.0;
    int failures = 0;

    bool pass() const { return ks <= critical; }
};

/// Draws the robust statistic under the null at the first sample size and
/// compares it with chi-squared(r_sigma - r_alpha).
inline NullDistribution run_null_distribution(const McConfig& cfg) {
    cfg.validate();
    const Dgp dgp = make_dgp(cfg);
    const long n = cfg.sample_sizes.front();
    const int R = cfg.replications;
    std::vector<std::optional<double>> stats(static_cast<std::size_t>(R));
    parallel_for(R, cfg.threads, [&](int i) {
        Replication rep = run_replication(dgp, cfg, dgp.beta0, n, replication_seed(cfg, kNullId, 0, n, i), false);
        if (rep.oracle) stats[static_cast<std::size_t>(i)] = rep.oracle->statistic;
    });
    NullDistribution out;
    out.df = dgp.df();
    out.n = n;
    for (const auto& s : stats) {
        if (s) {
            out.statistics.push_back(*s);
        } else {
            ++out.failures;
        }
    }
    if (out.statistics.size() >= 10) {
        const int df = out.df;
        out.ks = ks_statistic(out.statistics, [df](double x) { return chisq_cdf(x, df); });
        out.critical = ks_critical_1pct(out.statistics.size());
    }
    return out;
}

/// Throws ErrorBudgetExceeded when failures exceed the configured share of R.
inline void enforce_error_budget(int failures, const McConfig& cfg) {
    if (failures > cfg.max_failure_fraction * cfg.replications) {
        throw ErrorBudgetExceeded(std::to_string(failures) + " of " + std::to_string(cfg.replications) +
                                  " replications failed, above the allowed fraction " +
                                  std::to_string(cfg.max_failure_fraction));
    }
}

namespace detail {

inline std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace detail

inline void write_csv(std::ostream& os, const SizeTable& t) {
    os << "test,n,beta,rate,se,mean_df,mean_r_alpha,successes,failures\n";
    for (const auto& r : t.rows) {
        os << r.test << ',' << r.n << ',' << detail::fmt(r.beta) << ',' << detail::fmt(r.rate) << ','
           << detail::fmt(r.se) << ',' << detail::fmt(r.mean_df) << ',' << detail::fmt(r.mean_r_alpha) << ','
           << r.successes << ',' << r.failures << '\n';
    }
}

inline void write_csv(std::ostream& os, const RankTable& t) {
    os << "n,freq_r_alpha,freq_r_sigma,freq_df,successes,failures\n";
    for (const auto& r : t.rows) {
        os << r.n << ',' << detail::fmt(r.freq_r_alpha) << ',' << detail::fmt(r.freq_r_sigma) << ','
           << detail::fmt(r.freq_df) << ',' << r.successes << ',' << r.failures << '\n';
    }
}

inline void write_csv(std::ostream& os, const NullDistribution& d) {
    os << "replication,statistic\n";
    for (std::size_t i = 0; i < d.statistics.size(); ++i) os << i << ',' << detail::fmt(d.statistics[i]) << '\n';
}

}  // namespace rmd::harness
