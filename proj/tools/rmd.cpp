// rmd: command-line front end for the robust minimum-distance test and its
// Monte Carlo harness.
//
//   rmd mc-size     --config cfg.json
//   rmd mc-power    --config cfg.json
//   rmd mc-rank     --config cfg.json
//   rmd mc-null     --config cfg.json
//   rmd test        --input test.json
//   rmd ci          --input ci.json
//   rmd power-local --input pl.json [--csv weights.csv]
//
// Exit codes: 0 success, 1 runtime error, 2 configuration error,
// 3 Monte Carlo error budget exceeded.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <openssl/evp.h>

#include "rmd/io.hpp"
#include "rmd/rmd.hpp"
#include "rmd/smm_toy.hpp"

namespace {

using rmd::io::json;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitBudget = 3;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw rmd::ConfigError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Git blob id of `content`: sha1("blob <size>\0" + content).
std::string git_blob_hash(const std::string& content) {
    const std::string header = "blob " + std::to_string(content.size()) + std::string(1, '\0');
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
    EVP_DigestUpdate(ctx, header.data(), header.size());
    EVP_DigestUpdate(ctx, content.data(), content.size());
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return os.str();
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw rmd::Error("cannot write '" + path + "'");
    out << text;
}

struct Globals {
    int threads = 0;
    std::optional<std::uint64_t> seed;
};

// ---------------------------------------------------------------- Monte Carlo

int run_mc(const std::string& command, const std::string& config_path, const std::string& csv_override,
           const Globals& g) {
    const std::string raw = read_file(config_path);
    json j;
    try {
        j = json::parse(raw);
    } catch (const json::parse_error& e) {
        throw rmd::ConfigError("'" + config_path + "' is not valid JSON: " + e.what());
    }
    rmd::harness::McConfig cfg = rmd::io::mc_config_from_json(j);
    if (g.threads > 0) cfg.threads = g.threads;
    if (g.seed) cfg.master_seed = *g.seed;
    if (!csv_override.empty()) cfg.output_csv = csv_override;

    const auto start = std::chrono::steady_clock::now();
    std::ostringstream csv;
    json summary;
    int failures = 0;
    if (command == "mc-size" || command == "mc-power") {
        const auto table = command == "mc-size" ? rmd::harness::run_size_experiment(cfg)
                                                : rmd::harness::run_power_experiment(cfg);
        rmd::harness::write_csv(csv, table);
        failures = table.max_failures();
        summary = {{"beta0", table.beta0}, {"df", table.df}, {"r_alpha", table.r_alpha}};
        for (const auto& r : table.rows) {
            std::cerr << std::left << std::setw(7) << r.test << " n=" << std::setw(6) << r.n << " beta=" << std::setw(9)
                      << r.beta << " rate=" << std::fixed << std::setprecision(4) << r.rate << " (se " << r.se
                      << ", failures " << r.failures << ")\n"
                      << std::defaultfloat;
        }
    } else if (command == "mc-rank") {
        const auto table = rmd::harness::run_rank_consistency(cfg);
        rmd::harness::write_csv(csv, table);
        failures = table.max_failures();
        summary = {{"r_sigma", table.r_sigma}, {"r_alpha", table.r_alpha}};
        for (const auto& r : table.rows) {
            std::cerr << "n=" << r.n << " P(r_alpha ok)=" << r.freq_r_alpha << " P(r_sigma ok)=" << r.freq_r_sigma
                      << " P(d ok)=" << r.freq_df << " failures " << r.failures << "\n";
        }
    } else {
        const auto dist = rmd::harness::run_null_distribution(cfg);
        rmd::harness::write_csv(csv, dist);
        failures = dist.failures;
        summary = {{"df", dist.df}, {"ks", dist.ks}, {"ks_critical_1pct", dist.critical}, {"pass", dist.pass()}};
        std::cerr << "KS " << dist.ks << " vs 1% critical value " << dist.critical << (dist.pass() ? " (pass)\n" : " (fail)\n");
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    write_text(cfg.output_csv, csv.str());
    std::string meta_path = cfg.output_meta;
    if (meta_path.empty() && !cfg.output_csv.empty() && cfg.output_csv != "-") meta_path = cfg.output_csv + ".meta.json";
    if (!meta_path.empty()) {
        json meta = {{"command", command},
                     {"config", rmd::io::to_json(cfg)},
                     {"config_path", config_path},
                     {"config_blob_sha1", git_blob_hash(raw)},
                     {"csv_blob_sha1", git_blob_hash(csv.str())},
                     {"wall_seconds", wall},
                     {"threads", cfg.threads},
                     {"failures", failures},
                     {"summary", summary}};
        write_text(meta_path, meta.dump(2) + "\n");
    }
    try {
        rmd::harness::enforce_error_budget(failures, cfg);
    } catch (const rmd::ErrorBudgetExceeded& e) {
        std::cerr << "rmd: " << e.what() << "\n";
        return kExitBudget;
    }
    return kExitOk;
}

// ---------------------------------------------------------- single-data tools

struct Problem {
    rmd::StructuralModel model;
    rmd::ReducedFormEstimate rf;
    std::optional<int> population_df;
    rmd::game::GameParams game;
    bool is_game = true;
};

// Model plus reduced-form data from an input document. Data come from
// "data" (theta_hat, sigma_hat, n), "dataset_csv" (game markets) or
// "simulate" (n, seed, optional beta).
Problem load_problem(const json& j, const Globals& g) {
    Problem pr;
    const std::string model = j.value("model", std::string("entry_game"));
    const double alpha_bound = j.value("alpha_bound", rmd::game::kDefaultAlphaBound);
    std::optional<rmd::synthetic::LinearGaussianDesign> design;
    if (model == "entry_game") {
        pr.game = j.contains("game") ? rmd::io::game_from_json(j.at("game")) : rmd::game::GameParams::identified();
        pr.model = rmd::game::make_model(pr.game.states, alpha_bound);
    } else if (model == "linear_gaussian") {
        pr.is_game = false;
        design = rmd::synthetic::LinearGaussianDesign::make(j.value("design_seed", std::uint64_t{11}));
        design->alpha_bound = alpha_bound;
        pr.model = design->model();
        pr.population_df = design->r_sigma - design->r_alpha;
    } else if (model == "smm_toy") {
        pr.is_game = false;
        pr.population_df = rmd::smm_toy::kRankSigma - rmd::smm_toy::kRankAlpha;
    } else {
        throw rmd::ConfigError("unknown model '" + model + "' (expected entry_game, linear_gaussian or smm_toy)");
    }

    const int sources = int(j.contains("data")) + int(j.contains("dataset_csv")) + int(j.contains("simulate"));
    if (sources != 1) throw rmd::ConfigError("give exactly one of data, dataset_csv or simulate");
    if (j.contains("data")) {
        const json& d = j.at("data");
        pr.rf.theta_hat = rmd::io::vector_from_json(d.at("theta_hat"), "data.theta_hat");
        pr.rf.sigma_hat = rmd::io::matrix_from_json(d.at("sigma_hat"), "data.sigma_hat");
        pr.rf.n = d.at("n").get<double>();
    } else if (j.contains("dataset_csv")) {
        if (!pr.is_game) throw rmd::ConfigError("dataset_csv is only available for the entry game");
        std::ifstream in(j.at("dataset_csv").get<std::string>());
        if (!in) throw rmd::ConfigError("cannot open dataset_csv");
        pr.rf = rmd::game::estimate_reduced_form(rmd::io::read_game_csv(in));
    } else {
        const json& s = j.at("simulate");
        const long n = s.at("n").get<long>();
        std::uint64_t seed = s.value("seed", std::uint64_t{1});
        if (g.seed) seed = *g.seed;
        if (pr.is_game) {
            rmd::game::GameParams p = pr.game;
            if (s.contains("beta")) p.beta = s.at("beta").get<double>();
            pr.rf = rmd::game::estimate_reduced_form(rmd::game::simulate_data(p, n, seed));
        } else if (model == "smm_toy") {
            const rmd::Vector alpha = s.contains("alpha") ? rmd::io::vector_from_json(s.at("alpha"), "simulate.alpha")
                                                          : rmd::Vector::Zero(2);
            if (alpha.size() != 2) throw rmd::ConfigError("simulate.alpha must have 2 entries for smm_toy");
            pr.rf = rmd::smm_toy::sample(alpha, rmd::Vector::Constant(1, s.value("beta", 0.0)), n, seed);
        } else {
            pr.rf = design->sample(s.value("beta", design->beta0), n, seed);
        }
    }
    if (model == "smm_toy") {
        pr.model = rmd::smm_toy::make_model(static_cast<long>(pr.rf.n), j.value("draws", 0L),
                                            j.value("sim_seed", std::uint64_t{1}), alpha_bound);
    }
    try {
        pr.rf.validate();
    } catch (const rmd::Error& e) {
        throw rmd::ConfigError(e.what());
    }
    if (pr.is_game) {
        pr.population_df = rmd::game::population_ranks(pr.game, rmd::game::solve_equilibrium(pr.game)).df();
    }
    if (j.contains("oracle_df")) pr.population_df = j.at("oracle_df").get<int>();
    return pr;
}

rmd::Vector beta0_from(const json& j, const Problem& pr) {
    if (!j.contains("beta0")) {
        if (pr.is_game) return rmd::Vector::Constant(1, pr.game.beta);
        throw rmd::ConfigError("beta0 is required");
    }
    const json& b = j.at("beta0");
    if (b.is_number()) return rmd::Vector::Constant(1, b.get<double>());
    return rmd::io::vector_from_json(b, "beta0");
}

rmd::TestOptions test_options_from(const json& j, const Globals& g) {
    rmd::TestOptions o;
    o.b = j.value("b", rmd::kDefaultRankExponent);
    if (j.contains("lambda") && !j.at("lambda").is_null()) o.lambda = j.at("lambda").get<double>();
    o.use_gcv = j.value("use_gcv", true);
    o.seed = g.seed.value_or(j.value("seed", std::uint64_t{0}));
    return o;
}

int run_test(const std::string& input, const std::string& output, const Globals& g) {
    const json j = rmd::io::parse_json_file(input);
    const Problem pr = load_problem(j, g);
    const rmd::Vector beta0 = beta0_from(j, pr);
    const double tau = j.value("tau", 0.05);
    const rmd::TestOptions opts = test_options_from(j, g);

    json out = {{"model", pr.model.name}, {"n", pr.rf.n}, {"beta0", rmd::io::to_json(beta0)}};
    try {
        out["robust"] = rmd::io::to_json(rmd::robust_test(pr.model, pr.rf, beta0, tau, opts));
    } catch (const rmd::DegreesOfFreedomError& e) {
        out["robust"] = {{"error", e.what()}};
    }
    if (pr.population_df) {
        out["oracle"] = rmd::io::to_json(rmd::oracle_test(pr.model, pr.rf, beta0, tau, *pr.population_df, opts));
    }
    if (j.value("t_test", true)) {
        rmd::TTestOptions to;
        to.b = opts.b;
        to.seed = opts.seed;
        to.alpha_halfwidth = j.value("t_alpha_halfwidth", 50.0);
        to.beta_halfwidth = j.value("t_beta_halfwidth", 50.0);
        out["t_test"] = rmd::io::to_json(rmd::t_test(pr.model, pr.rf, beta0, tau, to));
    }
    write_text(output, out.dump(2) + "\n");
    return kExitOk;
}

std::vector<double> beta_grid_from(const json& j) {
    if (!j.contains("beta_grid")) throw rmd::ConfigError("beta_grid is required");
    const json& b = j.at("beta_grid");
    if (b.is_array()) return b.get<std::vector<double>>();
    const double lo = b.at("lo").get<double>();
    const double hi = b.at("hi").get<double>();
    const int points = b.at("points").get<int>();
    if (points < 2 || !(hi > lo)) throw rmd::ConfigError("beta_grid needs hi > lo and at least 2 points");
    std::vector<double> grid(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i) grid[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (points - 1);
    return grid;
}

int run_ci(const std::string& input, const std::string& output, const Globals& g) {
    const json j = rmd::io::parse_json_file(input);
    const Problem pr = load_problem(j, g);
    const auto grid = beta_grid_from(j);
    const double tau = j.value("tau", 0.05);
    const auto cs = rmd::invert_ci(pr.model, pr.rf, grid, tau, test_options_from(j, g), j.value("strict", false));
    json out = rmd::io::to_json(cs);
    out["tau"] = tau;
    write_text(output, out.dump(2) + "\n");
    return kExitOk;
}

// Power objects at the population point (source "population", entry game
// only) or at the feasible estimates from data (source "data").
int run_power_local(const std::string& input, const std::string& output, const std::string& csv_path,
                    const Globals& g) {
    const json j = rmd::io::parse_json_file(input);
    const std::string source = j.value("source", std::string("population"));
    rmd::PowerOptions popts;
    popts.partial_out_nuisance = j.value("partial_out_nuisance", true);
    popts.b = j.value("b", rmd::kDefaultRankExponent);
    if (j.contains("scales")) popts.scales = j.at("scales").get<std::vector<double>>();
    const double tau = j.value("tau", 0.05);

    rmd::StructuralModel model;
    rmd::Vector theta0, alpha0, beta0;
    rmd::Matrix weight;
    int df = 0;
    double n = j.value("n", 1000.0);
    if (source == "population") {
        if (j.value("model", std::string("entry_game")) != "entry_game") {
            throw rmd::ConfigError("source population is only available for the entry game");
        }
        const rmd::game::GameParams p =
            j.contains("game") ? rmd::io::game_from_json(j.at("game")) : rmd::game::GameParams::identified();
        const auto eq = rmd::game::solve_equilibrium(p);
        model = rmd::game::make_model(p.states, j.value("alpha_bound", rmd::game::kDefaultAlphaBound));
        theta0 = eq.theta;
        alpha0 = p.alpha();
        beta0 = rmd::Vector::Constant(1, p.beta);
        const rmd::Matrix e = rmd::Matrix::Identity(6, 6) - rmd::jac_theta(model, theta0, alpha0, beta0);
        weight = rmd::sym_pinv(e * rmd::game::population_sigma(p, theta0) * e.transpose());
        df = j.value("df", rmd::game::population_ranks(p, eq).df());
    } else if (source == "data") {
        const Problem pr = load_problem(j, g);
        model = pr.model;
        beta0 = beta0_from(j, pr);
        const auto res = rmd::robust_test(pr.model, pr.rf, beta0, tau, test_options_from(j, g));
        theta0 = pr.rf.theta_hat;
        alpha0 = res.alpha_hat;
        weight = res.W_hat;
        df = j.value("df", res.df_hat);
        n = pr.rf.n;
    } else {
        throw rmd::ConfigError("source must be population or data");
    }
    if (df < 1) throw rmd::ConfigError("degrees of freedom must be positive");
    const rmd::PowerReport rep = rmd::power_report(model, theta0, alpha0, beta0, weight, df, tau, n, popts);
    json out = rmd::io::to_json(rep);
    out["source"] = source;
    write_text(output, out.dump(2) + "\n");

    std::ostringstream csv;
    csv << "component,delta_star,relative_weight\n";
    for (Eigen::Index i = 0; i < rep.delta_star.size(); ++i) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "%ld,%.10f,%.10f\n", static_cast<long>(i + 1), rep.delta_star(i),
                      rep.relative_weights(i));
        csv << buf;
    }
    if (!csv_path.empty()) write_text(csv_path, csv.str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Robust minimum-distance inference under identification failure"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    std::uint64_t seed_value = 0;
    app.add_option("--threads", g.threads, "Worker threads for Monte Carlo runs (0: all cores)")->check(CLI::NonNegativeNumber);
    auto* seed_opt = app.add_option("--seed", seed_value, "Override the master seed");

    std::string config, input, output, csv;
    std::string command;
    for (const char* name : {"mc-size", "mc-power", "mc-rank", "mc-null"}) {
        auto* sub = app.add_subcommand(name, std::string("Monte Carlo ") + (name + 3) + " experiment");
        sub->add_option("--config", config, "Experiment config (JSON)")->required();
        sub->add_option("--csv", csv, "CSV output path, overriding the config");
        sub->callback([&command, name] { command = name; });
    }
    auto* test = app.add_subcommand("test", "Robust, oracle and t tests on one dataset");
    auto* ci = app.add_subcommand("ci", "Confidence set for a scalar beta by test inversion");
    auto* pl = app.add_subcommand("power-local", "Local power report and maximum-power direction");
    for (auto* sub : {test, ci, pl}) {
        sub->add_option("--input", input, "Input document (JSON)")->required();
        sub->add_option("--output", output, "JSON output path (default: stdout)");
        const std::string name = sub->get_name();
        sub->callback([&command, name] { command = name; });
    }
    pl->add_option("--csv", csv, "CSV of direction components and relative weights");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }
    if (seed_opt->count() > 0) g.seed = seed_value;

    try {
        if (command.rfind("mc-", 0) == 0) return run_mc(command, config, csv, g);
        if (command == "test") return run_test(input, output, g);
        if (command == "ci") return run_ci(input, output, g);
        return run_power_local(input, output, csv, g);
    } catch (const rmd::ConfigError& e) {
        std::cerr << "rmd: config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const rmd::ErrorBudgetExceeded& e) {
        std::cerr << "rmd: " << e.what() << "\n";
        return kExitBudget;
    } catch (const json::exception& e) {
        std::cerr << "rmd: config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "rmd: " << e.what() << "\n";
        return kExitError;
    }
}
