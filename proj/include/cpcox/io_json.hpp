#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "cpcox/bootstrap.hpp"
#include "cpcox/likelihood.hpp"
#include "cpcox/limit_law.hpp"
#include "cpcox/simulate.hpp"

namespace cpcox {

using nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";

inline void to_json(json& j, const PiecewiseHazard& h) {
    j = json{{"breaks", h.breaks}, {"rates", h.rates}};
}
inline void from_json(const json& j, PiecewiseHazard& h) {
    h.breaks = j.value("breaks", std::vector<double>{});
    j.at("rates").get_to(h.rates);
}

inline void to_json(json& j, const ScenarioConfig& c) {
    j = json{{"alpha0", c.alpha0},
             {"beta0", c.beta0},
             {"zeta0", c.zeta0},
             {"baseline", c.baseline},
             {"covariate_levels", c.covariate_levels},
             {"covariate_probs", c.covariate_probs},
             {"censoring_rate", c.censoring_rate},
             {"tau", c.tau},
             {"n", c.n}};
}
inline void from_json(const json& j, ScenarioConfig& c) {
    j.at("alpha0").get_to(c.alpha0);
    j.at("beta0").get_to(c.beta0);
    j.at("zeta0").get_to(c.zeta0);
    j.at("baseline").get_to(c.baseline);
    j.at("covariate_levels").get_to(c.covariate_levels);
    j.at("covariate_probs").get_to(c.covariate_probs);
    j.at("censoring_rate").get_to(c.censoring_rate);
    j.at("tau").get_to(c.tau);
    c.n = j.value("n", std::size_t{0});
}

inline void to_json(json& j, const ProfileFitConfig& c) {
    j = json{{"zeta_lo", c.zeta_lo},
             {"zeta_hi", c.zeta_hi},
             {"newton_tol", c.newton_tol},
             {"newton_max_iter", c.newton_max_iter},
             {"step_halving_max", c.step_halving_max},
             {"coef_bound", c.coef_bound}};
}
inline void from_json(const json& j, ProfileFitConfig& c) {
    j.at("zeta_lo").get_to(c.zeta_lo);
    j.at("zeta_hi").get_to(c.zeta_hi);
    c.newton_tol = j.value("newton_tol", 1e-8);
    c.newton_max_iter = j.value("newton_max_iter", 50);
    c.step_halving_max = j.value("step_halving_max", 30);
    c.coef_bound = j.value("coef_bound", 50.0);
}

inline void to_json(json& j, const BootstrapConfig& c) {
    j = json{{"method", method_name(c.method)},
             {"replicates", c.replicates},
             {"m_exponent", c.m_exponent},
             {"fit", c.fit},
             {"seed", c.seed},
             {"confidence_level", c.confidence_level},
             {"max_failure_fraction", c.max_failure_fraction}};
}
inline void from_json(const json& j, BootstrapConfig& c) {
    c.method = method_from_name(j.at("method").get<std::string>());
    j.at("replicates").get_to(c.replicates);
    c.m_exponent = j.value("m_exponent", 1.0);
    j.at("fit").get_to(c.fit);
    c.seed = j.value("seed", std::uint64_t{0});
    c.confidence_level = j.value("confidence_level", 0.95);
    c.max_failure_fraction = j.value("max_failure_fraction", 0.05);
}

inline void to_json(json& j, const ChangePointParams& t) {
    j = json{{"alpha", t.alpha}, {"beta", t.beta}, {"zeta", t.zeta}};
}
inline void from_json(const json& j, ChangePointParams& t) {
    j.at("alpha").get_to(t.alpha);
    j.at("beta").get_to(t.beta);
    j.at("zeta").get_to(t.zeta);
}

inline void to_json(json& j, const ProfilePoint& p) {
    j = json{{"zeta", p.zeta},
             {"loglik", p.converged ? json(p.loglik) : json(nullptr)},
             {"alpha", p.alpha},
             {"beta", p.beta},
             {"converged", p.converged}};
}

inline void to_json(json& j, const FitResult& r) {
    j = json{{"theta", r.theta},
             {"loglik", r.loglik},
             {"converged", r.converged},
             {"profile", r.profile}};
}

inline void to_json(json& j, const ConfidenceInterval& c) {
    j = json{{"lower", c.lower}, {"upper", c.upper}, {"level", c.level}, {"method", c.method_label}};
}

inline void to_json(json& j, const DiscreteLaw& l) {
    j = json{{"atoms", l.atoms}, {"probs", l.probs}};
}
inline void from_json(const json& j, DiscreteLaw& l) {
    j.at("atoms").get_to(l.atoms);
    j.at("probs").get_to(l.probs);
}

inline void to_json(json& j, const Mat& m) {
    std::vector<std::vector<double>> rows(m.rows, std::vector<double>(m.cols));
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t k = 0; k < m.cols; ++k) rows[i][k] = m(i, k);
    j = rows;
}
inline void from_json(const json& j, Mat& m) {
    const auto rows = j.get<std::vector<std::vector<double>>>();
    m = Mat(rows.size(), rows.empty() ? 0 : rows.front().size());
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t k = 0; k < m.cols; ++k) m(i, k) = rows[i][k];
}

inline void to_json(json& j, const LimitLawConfig& c) {
    j = json{{"gamma_minus", c.gamma_minus},
             {"gamma_plus", c.gamma_plus},
             {"log_r_left", c.log_r_left},
             {"log_r_right", c.log_r_right},
             {"jump_minus", c.jump_minus},
             {"jump_plus", c.jump_plus},
             {"delta", c.delta},
             {"info_alpha", c.info_alpha},
             {"info_beta", c.info_beta},
             {"window_halfwidth", c.window_halfwidth}};
}
inline void from_json(const json& j, LimitLawConfig& c) {
    j.at("gamma_minus").get_to(c.gamma_minus);
    j.at("gamma_plus").get_to(c.gamma_plus);
    j.at("log_r_left").get_to(c.log_r_left);
    j.at("log_r_right").get_to(c.log_r_right);
    j.at("jump_minus").get_to(c.jump_minus);
    j.at("jump_plus").get_to(c.jump_plus);
    j.at("delta").get_to(c.delta);
    j.at("info_alpha").get_to(c.info_alpha);
    j.at("info_beta").get_to(c.info_beta);
    j.at("window_halfwidth").get_to(c.window_halfwidth);
}

inline json load_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    json j;
    is >> j;
    return j;
}

inline void save_json(const std::string& path, const json& j) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    os << j.dump(2) << "\n";
}

// Manifests wrap the fully-resolved config of a command; feeding a
// manifest back through --config reruns the command identically.
inline json make_manifest(const std::string& command, json config, json diagnostics = json::object()) {
    return json{{"tool", "cpcox"},
                {"version", kVersion},
                {"command", command},
                {"config", std::move(config)},
                {"diagnostics", std::move(diagnostics)}};
}

inline json unwrap_config(const json& j) {
    if (j.contains("config") && j.contains("command")) return j.at("config");
    return j;
}

} // namespace cpcox
