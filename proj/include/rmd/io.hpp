#pragma once

// JSON and CSV plumbing for the command-line tool: config parsing, game
// parameter (de)serialization, and result encoding. Needs nlohmann/json.

#include <fstream>
#include <istream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rmd/entry_game.hpp"
#include "rmd/errors.hpp"
#include "rmd/harness.hpp"
#include "rmd/inference.hpp"
#include "rmd/power.hpp"

namespace rmd::io {

using json = nlohmann::json;

namespace detail {

inline void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
}

template <class T>
T get(const json& j, const std::string& key, const std::string& where) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

template <class T>
void get_to(const json& j, const std::string& key, T& out, const std::string& where) {
    if (j.contains(key)) out = get<T>(j, key, where);
}

inline Vector to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace detail

inline json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline json to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::vector<double> row(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index k = 0; k < m.cols(); ++k) row[static_cast<std::size_t>(k)] = m(i, k);
        rows.push_back(row);
    }
    return rows;
}

inline Vector vector_from_json(const json& j, const std::string& where) {
    try {
        return detail::to_vector(j.get<std::vector<double>>());
    } catch (const json::exception& e) {
        throw ConfigError(where + ": expected an array of numbers (" + e.what() + ")");
    }
}

inline Matrix matrix_from_json(const json& j, const std::string& where) {
    std::vector<std::vector<double>> rows;
    try {
        rows = j.get<std::vector<std::vector<double>>>();
    } catch (const json::exception& e) {
        throw ConfigError(where + ": expected an array of rows (" + e.what() + ")");
    }
    if (rows.empty()) throw ConfigError(where + ": matrix is empty");
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows[0].size()) throw ConfigError(where + ": rows differ in length");
        for (std::size_t k = 0; k < rows[i].size(); ++k) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
    }
    return m;
}

inline json to_json(const game::GameParams& p) {
    return {{"beta", p.beta},
            {"alpha", {p.alpha1, p.alpha2, p.alpha3}},
            {"states", {p.states[0], p.states[1], p.states[2]}},
            {"state_probs", {p.state_probs[0], p.state_probs[1], p.state_probs[2]}}};
}

/// Game parameters from JSON. "preset" (identified, unidentified or
/// local_power) seeds the values; explicit fields override it.
inline game::GameParams game_from_json(const json& j) {
    const std::string where = "game";
    detail::reject_unknown(j, {"preset", "beta", "alpha", "states", "state_probs"}, where);
    game::GameParams p = game::GameParams::identified();
    if (j.contains("preset")) {
        const auto preset = detail::get<std::string>(j, "preset", where);
        if (preset == "identified") {
            p = game::GameParams::identified();
        } else if (preset == "unidentified") {
            p = game::GameParams::unidentified();
        } else if (preset == "local_power") {
            p = game::GameParams::local_power_design();
        } else {
            throw ConfigError("game.preset must be identified, unidentified or local_power");
        }
    }
    detail::get_to(j, "beta", p.beta, where);
    if (j.contains("alpha")) {
        const auto a = detail::get<std::vector<double>>(j, "alpha", where);
        if (a.size() != 3) throw ConfigError("game.alpha must have 3 entries");
        p.alpha1 = a[0];
        p.alpha2 = a[1];
        p.alpha3 = a[2];
    }
    if (j.contains("states")) {
        const auto s = detail::get<std::vector<double>>(j, "states", where);
        if (s.size() != 3) throw ConfigError("game.states must have 3 entries");
        p.states = {s[0], s[1], s[2]};
    }
    if (j.contains("state_probs")) {
        const auto s = detail::get<std::vector<double>>(j, "state_probs", where);
        if (s.size() != 3) throw ConfigError("game.state_probs must have 3 entries");
        p.state_probs = {s[0], s[1], s[2]};
    }
    try {
        p.validate();
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    return p;
}

inline harness::ExperimentKind kind_from_string(const std::string& s) {
    if (s == "size") return harness::ExperimentKind::Size;
    if (s == "power") return harness::ExperimentKind::Power;
    if (s == "rank") return harness::ExperimentKind::Rank;
    if (s == "null-dist") return harness::ExperimentKind::NullDist;
    throw ConfigError("experiment must be size, power, rank or null-dist");
}

inline harness::McConfig mc_config_from_json(const json& j) {
    const std::string where = "config";
    detail::reject_unknown(j,
                           {"model", "game", "alpha_bound", "design_seed", "sample_sizes", "replications", "tau", "b",
                            "master_seed", "experiment", "beta_grid", "beta0", "t_alpha_halfwidth",
                            "t_beta_halfwidth", "max_failure_fraction", "threads", "output"},
                           where);
    harness::McConfig cfg;
    detail::get_to(j, "model", cfg.model, where);
    if (j.contains("game")) cfg.game = game_from_json(j.at("game"));
    detail::get_to(j, "alpha_bound", cfg.alpha_bound, where);
    detail::get_to(j, "design_seed", cfg.design_seed, where);
    detail::get_to(j, "sample_sizes", cfg.sample_sizes, where);
    detail::get_to(j, "replications", cfg.replications, where);
    detail::get_to(j, "tau", cfg.tau, where);
    detail::get_to(j, "b", cfg.b, where);
    detail::get_to(j, "master_seed", cfg.master_seed, where);
    if (j.contains("experiment")) cfg.kind = kind_from_string(detail::get<std::string>(j, "experiment", where));
    detail::get_to(j, "beta_grid", cfg.beta_grid, where);
    if (j.contains("beta0")) cfg.beta0 = detail::get<double>(j, "beta0", where);
    detail::get_to(j, "t_alpha_halfwidth", cfg.t_alpha_halfwidth, where);
    detail::get_to(j, "t_beta_halfwidth", cfg.t_beta_halfwidth, where);
    detail::get_to(j, "max_failure_fraction", cfg.max_failure_fraction, where);
    detail::get_to(j, "threads", cfg.threads, where);
    if (j.contains("output")) {
        const json& o = j.at("output");
        detail::reject_unknown(o, {"csv", "meta"}, "output");
        detail::get_to(o, "csv", cfg.output_csv, "output");
        detail::get_to(o, "meta", cfg.output_meta, "output");
    }
    cfg.validate();
    return cfg;
}

inline json to_json(const harness::McConfig& cfg) {
    json j = {{"model", cfg.model},
              {"alpha_bound", cfg.alpha_bound},
              {"sample_sizes", cfg.sample_sizes},
              {"replications", cfg.replications},
              {"tau", cfg.tau},
              {"b", cfg.b},
              {"master_seed", cfg.master_seed},
              {"experiment", harness::to_string(cfg.kind)},
              {"t_alpha_halfwidth", cfg.t_alpha_halfwidth},
              {"t_beta_halfwidth", cfg.t_beta_halfwidth},
              {"max_failure_fraction", cfg.max_failure_fraction}};
    if (cfg.model == "entry_game") {
        j["game"] = to_json(cfg.game);
    } else {
        j["design_seed"] = cfg.design_seed;
    }
    if (!cfg.beta_grid.empty()) j["beta_grid"] = cfg.beta_grid;
    if (cfg.beta0) j["beta0"] = *cfg.beta0;
    return j;
}

inline json parse_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
    }
}

/// Reads market_id,state,a1,a2 rows with 1-based states, as written by
/// GameDataset::write_csv.
inline game::GameDataset read_game_csv(std::istream& in) {
    game::GameDataset data;
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("game CSV is empty");
    if (line.rfind("market_id", 0) != 0) throw ConfigError("game CSV must start with a market_id,state,a1,a2 header");
    long lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<long> vals;
        while (std::getline(ss, cell, ',')) {
            try {
                vals.push_back(std::stol(cell));
            } catch (const std::exception&) {
                throw ConfigError("game CSV line " + std::to_string(lineno) + ": non-integer field");
            }
        }
        if (vals.size() != 4) throw ConfigError("game CSV line " + std::to_string(lineno) + ": expected 4 fields");
        if (vals[1] < 1 || vals[1] > 3 || vals[2] < 0 || vals[2] > 1 || vals[3] < 0 || vals[3] > 1) {
            throw ConfigError("game CSV line " + std::to_string(lineno) + ": state must be 1-3 and actions 0/1");
        }
        data.state.push_back(static_cast<std::uint8_t>(vals[1] - 1));
        data.a1.push_back(static_cast<std::uint8_t>(vals[2]));
        data.a2.push_back(static_cast<std::uint8_t>(vals[3]));
    }
    return data;
}

inline json to_json(const RobustTestResult& r) {
    json j = {{"statistic", r.statistic},
              {"r_sigma_hat", r.r_sigma_hat},
              {"r_alpha_hat", r.r_alpha_hat},
              {"df_hat", r.df_hat},
              {"df_used", r.df_used},
              {"critical_value", r.critical_value},
              {"p_value", r.p_value},
              {"reject", r.reject},
              {"tau", r.tau},
              {"alpha_hat", to_json(r.alpha_hat)},
              {"lambda", r.lambda_used},
              {"weight_rank", r.weight_rank},
              {"min_singular_value_I_minus_grad_theta", r.min_singular_value},
              {"oracle", r.oracle},
              {"warnings", r.warnings}};
    return j;
}

inline json to_json(const TTestResult& t) {
    return {{"beta_hat", to_json(t.beta_hat)},   {"alpha_hat", to_json(t.alpha_hat)},
            {"std_err", to_json(t.std_err)},     {"t_stats", to_json(t.t_stats)},
            {"reject", t.reject},                {"critical_value", t.critical_value},
            {"degenerate", t.degenerate},        {"condition", t.condition}};
}

inline json to_json(const ConfidenceSet& cs) {
    json j = {{"grid", cs.grid},
              {"accepted", cs.accepted},
              {"statistics", cs.statistics},
              {"p_values", cs.p_values},
              {"errors", cs.errors},
              {"lambda", cs.lambda_used},
              {"empty", cs.empty()}};
    if (!cs.empty()) {
        j["lower"] = cs.lower();
        j["upper"] = cs.upper();
    }
    return j;
}

inline json to_json(const PowerReport& r) {
    json curve = json::array();
    for (const auto& [c, p] : r.predicted_power) curve.push_back({{"c", c}, {"power", p}});
    return {{"delta_star", to_json(r.delta_star)},
            {"k_star", r.k_star},
            {"relative_weights", to_json(r.relative_weights)},
            {"trivial_dim", r.trivial_dim},
            {"eigenspace_dim", r.eigenspace_dim},
            {"degenerate", r.degenerate},
            {"df", r.df},
            {"tau", r.tau},
            {"nuisance_adjusted", r.nuisance_adjusted},
            {"predicted_power", curve}};
}

}  // namespace rmd::io
