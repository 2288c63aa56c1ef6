#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "cpcox/bootstrap.hpp"
#include "cpcox/io_json.hpp"
#include "cpcox/simulate.hpp"

namespace cpcox {

struct ExperimentSpec {
    ScenarioConfig scenario;
    std::vector<std::size_t> sample_sizes{300, 500, 1000};
    std::size_t monte_carlo_reps = 200;
    std::vector<BootstrapConfig> methods;
    std::uint64_t seed = 0;
};

inline void to_json(json& j, const ExperimentSpec& s) {
    j = json{{"scenario", s.scenario},
             {"sample_sizes", s.sample_sizes},
             {"monte_carlo_reps", s.monte_carlo_reps},
             {"methods", s.methods},
             {"seed", s.seed}};
}
inline void from_json(const json& j, ExperimentSpec& s) {
    j.at("scenario").get_to(s.scenario);
    s.sample_sizes = j.value("sample_sizes", std::vector<std::size_t>{300, 500, 1000});
    j.at("monte_carlo_reps").get_to(s.monte_carlo_reps);
    j.at("methods").get_to(s.methods);
    s.seed = j.value("seed", std::uint64_t{0});
}

struct CoverageRow {
    std::string method_label;
    std::size_t n = 0;
    double m_exponent = 1.0;
    double coverage = 0.0;
    double avg_length = 0.0;
    double mc_standard_error = 0.0;
};

struct ExperimentResult {
    std::vector<CoverageRow> rows;
    std::vector<std::string> failed_cells;
    std::uint64_t no_mass_events = 0;
};

// Kaplan-Meier survival curves of the observed times, stratified by the
// (categorical) covariate value.
inline std::vector<std::pair<Vec, KaplanMeier>> km_curves(const Dataset& data,
                                                          std::size_t max_strata = 100) {
    std::map<Vec, std::vector<std::pair<double, bool>>> groups;
    for (const Subject& s : data.subjects) {
        if (!s.covariates.is_constant())
            throw NonCategoricalError("km_curves requires constant covariates");
        groups[s.covariates.at(0.0)].emplace_back(s.observed_time, s.event);
        if (groups.size() > max_strata) throw NonCategoricalError("km_curves: too many strata");
    }
    std::vector<std::pair<Vec, KaplanMeier>> out;
    for (auto& [z, obs] : groups) out.emplace_back(z, product_limit(std::move(obs)));
    return out;
}

namespace detail {

inline void write_km_csv(const std::string& path, const KaplanMeier& km) {
    std::ofstream os(path, std::ios::binary);
    os << "time,survival\n0,1\n";
    for (std::size_t i = 0; i < km.drop_times.size(); ++i)
        os << format_double(km.drop_times[i]) << "," << format_double(km.survival[i]) << "\n";
}

inline void write_draws_csv(const std::string& path, const BootstrapDraws& d) {
    std::ofstream os(path, std::ios::binary);
    const std::size_t p = d.scaled_alpha.empty() ? 0 : d.scaled_alpha.front().size();
    os << "scaled_zeta";
    for (std::size_t a = 0; a < p; ++a) os << ",scaled_alpha_" << (a + 1);
    for (std::size_t a = 0; a < p; ++a) os << ",scaled_beta_" << (a + 1);
    os << "\n";
    for (std::size_t i = 0; i < d.rep_scaled_zeta.size(); ++i) {
        os << format_double(d.rep_scaled_zeta[i]);
        for (std::size_t a = 0; a < p; ++a) os << "," << format_double(d.scaled_alpha[i][a]);
        for (std::size_t a = 0; a < p; ++a) os << "," << format_double(d.scaled_beta[i][a]);
        os << "\n";
    }
}

} // namespace detail

// Full coverage study: for each (n, method) cell, monte_carlo_reps
// independent datasets, one bootstrap interval per dataset. All randomness
// derives from (seed, n, rep) for the data and (seed, n, method, rep) for
// the bootstrap, so worker scheduling never changes any output.
inline ExperimentResult run_experiment(const ExperimentSpec& spec, const std::string& out_dir,
                                       unsigned threads = 1) {
    spec.scenario.validate();
    if (spec.monte_carlo_reps < 1) throw std::invalid_argument("monte_carlo_reps must be >= 1");
    std::filesystem::create_directories(out_dir);

    const std::size_t S = spec.sample_sizes.size();
    const std::size_t M = spec.methods.size();
    const std::size_t R = spec.monte_carlo_reps;

    struct TaskOut {
        bool attempted = false;
        bool failed = false;
        bool covered = false;
        double length = 0.0;
        std::uint64_t no_mass = 0;
        std::optional<BootstrapDraws> first_draws;
    };
    std::vector<TaskOut> out(S * M * R);

    auto run_task = [&](std::size_t idx) {
        const std::size_t si = idx / (M * R);
        const std::size_t mi = (idx / R) % M;
        const std::size_t rep = idx % R;
        const std::size_t n = spec.sample_sizes[si];
        TaskOut& t = out[idx];
        t.attempted = true;
        ScenarioConfig scn = spec.scenario;
        scn.n = n;
        const Dataset data = sample_dataset(scn, derive_seed(spec.seed, {0xda, n, rep}));
        BootstrapConfig bc = spec.methods[mi];
        bc.seed = derive_seed(spec.seed, {0xb0, n, mi, rep});
        try {
            BootstrapDraws draws = run_bootstrap(data, bc, 1);
            const ConfidenceInterval ci = percentile_ci(draws, draws.zeta_hat, draws.m_n,
                                                        bc.confidence_level, data.tau);
            t.covered = ci.lower <= spec.scenario.zeta0 && spec.scenario.zeta0 <= ci.upper;
            t.length = ci.upper - ci.lower;
            t.no_mass = draws.no_mass_events;
            if (rep == 0) t.first_draws = std::move(draws);
        } catch (const TooManyFailuresError&) {
            t.failed = true;
        } catch (const FitFailedError&) {
            t.failed = true;
        }
    };

    const std::size_t total = S * M * R;
    if (threads <= 1) {
        for (std::size_t i = 0; i < total; ++i) run_task(i);
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= total) return;
                run_task(i);
            }
        };
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < threads; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    ExperimentResult result;
    std::ofstream cov(out_dir + "/coverage.csv", std::ios::binary);
    cov << "method,n,m_exponent,coverage,avg_length,mc_standard_error\n";
    for (std::size_t si = 0; si < S; ++si) {
        for (std::size_t mi = 0; mi < M; ++mi) {
            const std::size_t n = spec.sample_sizes[si];
            const BootstrapConfig& bc = spec.methods[mi];
            std::size_t covered = 0;
            double len_sum = 0.0;
            bool cell_failed = false;
            for (std::size_t rep = 0; rep < R; ++rep) {
                const TaskOut& t = out[si * M * R + mi * R + rep];
                result.no_mass_events += t.no_mass;
                if (t.failed) cell_failed = true;
                covered += t.covered ? 1 : 0;
                len_sum += t.length;
            }
            const std::string label = method_name(bc.method);
            if (cell_failed) {
                result.failed_cells.push_back(label + ",n=" + std::to_string(n));
                continue;
            }
            CoverageRow row;
            row.method_label = label;
            row.n = n;
            row.m_exponent = bc.m_exponent;
            row.coverage = static_cast<double>(covered) / static_cast<double>(R);
            row.avg_length = len_sum / static_cast<double>(R);
            row.mc_standard_error =
                std::sqrt(row.coverage * (1.0 - row.coverage) / static_cast<double>(R));
            cov << row.method_label << "," << row.n << "," << format_double(row.m_exponent) << ","
                << format_double(row.coverage) << "," << format_double(row.avg_length) << ","
                << format_double(row.mc_standard_error) << "\n";
            result.rows.push_back(std::move(row));
            const TaskOut& first = out[si * M * R + mi * R];
            if (first.first_draws)
                detail::write_draws_csv(out_dir + "/draws_method" + std::to_string(mi) + "_n" +
                                            std::to_string(n) + ".csv",
                                        *first.first_draws);
        }
    }
    cov.close();

    // designated dataset for the survival-curve export: largest n, rep 0
    {
        const std::size_t n = *std::max_element(spec.sample_sizes.begin(), spec.sample_sizes.end());
        ScenarioConfig scn = spec.scenario;
        scn.n = n;
        const Dataset data = sample_dataset(scn, derive_seed(spec.seed, {0xda, n, std::size_t{0}}));
        const auto curves = km_curves(data);
        for (std::size_t l = 0; l < curves.size(); ++l)
            detail::write_km_csv(out_dir + "/km_n" + std::to_string(n) + "_stratum" +
                                     std::to_string(l) + ".csv",
                                 curves[l].second);
    }

    json diag{{"failed_cells", result.failed_cells},
              {"no_mass_events", result.no_mass_events},
              {"bandwidth_rule", "1.06 * sd(event times) * n_events^(-1/5), reflected at 0 and tau"},
              {"smooth_grid_step", "tau/4096"}};
    json cfg;
    to_json(cfg, spec);
    save_json(out_dir + "/manifest.json", make_manifest("experiment", cfg, diag));
    return result;
}

} // namespace cpcox
