#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cpcox/harness.hpp"
#include "cpcox/limit_law.hpp"

namespace fs = std::filesystem;
using cpcox::format_double;
using cpcox::json;

namespace {

struct CommonArgs {
    std::string out_dir;
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_given = false;
    unsigned threads = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_threads) {
    cmd->add_option("--out", args.out_dir, "output directory")->required();
    cmd->add_option("--config", args.config_path, "JSON config (or a manifest to rerun)");
    cmd->add_option("--seed", args.seed, "root seed")->each([&](const std::string&) {
        args.seed_given = true;
    });
    if (with_threads) cmd->add_option("--threads", args.threads, "worker threads");
}

json maybe_config(const CommonArgs& args) {
    if (args.config_path.empty()) return json::object();
    return cpcox::unwrap_config(cpcox::load_json(args.config_path));
}

void run_simulate(const CommonArgs& args, std::size_t n_flag) {
    json cfg = maybe_config(args);
    cpcox::ScenarioConfig scenario =
        cfg.contains("scenario") ? cfg.at("scenario").get<cpcox::ScenarioConfig>()
                                 : cpcox::default_scenario();
    if (n_flag > 0) scenario.n = n_flag;
    std::uint64_t seed = cfg.value("seed", std::uint64_t{0});
    if (args.seed_given) seed = args.seed;

    fs::create_directories(args.out_dir);
    const cpcox::Dataset data = cpcox::sample_dataset(scenario, seed);
    cpcox::save_dataset(args.out_dir + "/dataset.csv", data);
    json resolved{{"scenario", scenario}, {"seed", seed}};
    cpcox::save_json(args.out_dir + "/manifest.json",
                     cpcox::make_manifest("simulate", resolved));
}

void run_fit(const CommonArgs& args, std::string data_path, std::vector<double> window) {
    json cfg = maybe_config(args);
    if (data_path.empty()) data_path = cfg.value("data", std::string{});
    if (data_path.empty()) throw std::runtime_error("fit: --data or config key 'data' required");
    const cpcox::Dataset data = cpcox::load_dataset(data_path);

    cpcox::ProfileFitConfig fit;
    if (cfg.contains("fit")) {
        cfg.at("fit").get_to(fit);
    } else {
        fit.zeta_lo = 0.0;
        fit.zeta_hi = data.tau;
    }
    if (window.size() == 2) {
        fit.zeta_lo = window[0];
        fit.zeta_hi = window[1];
    }

    fs::create_directories(args.out_dir);
    const cpcox::FitResult result = cpcox::fit_mple(data, fit);
    json out;
    cpcox::to_json(out, result);
    cpcox::save_json(args.out_dir + "/fit.json", out);
    const cpcox::StepCumHazard base = cpcox::breslow(data, result.theta);
    {
        std::ofstream os(args.out_dir + "/baseline.csv", std::ios::binary);
        cpcox::write_step_hazard_csv(os, base);
    }
    {
        std::ofstream os(args.out_dir + "/smooth_hazard.csv", std::ios::binary);
        cpcox::write_smooth_hazard_csv(os, cpcox::kernel_smooth_hazard(data, base, data.tau / 4096.0));
    }
    json resolved{{"data", data_path}, {"fit", fit}};
    cpcox::save_json(args.out_dir + "/manifest.json", cpcox::make_manifest("fit", resolved));
}

void run_bootstrap_cmd(const CommonArgs& args, std::string data_path, std::string method,
                       std::size_t replicates, double m_exponent, double level,
                       std::vector<double> window) {
    json cfg = maybe_config(args);
    if (data_path.empty()) data_path = cfg.value("data", std::string{});
    if (data_path.empty())
        throw std::runtime_error("bootstrap: --data or config key 'data' required");
    const cpcox::Dataset data = cpcox::load_dataset(data_path);

    cpcox::BootstrapConfig bc;
    if (cfg.contains("bootstrap")) cfg.at("bootstrap").get_to(bc);
    if (!cfg.contains("bootstrap")) {
        bc.fit.zeta_lo = 0.0;
        bc.fit.zeta_hi = data.tau;
    }
    if (!method.empty()) bc.method = cpcox::method_from_name(method);
    if (replicates > 0) bc.replicates = replicates;
    if (m_exponent > 0.0) bc.m_exponent = m_exponent;
    if (level > 0.0) bc.confidence_level = level;
    if (window.size() == 2) {
        bc.fit.zeta_lo = window[0];
        bc.fit.zeta_hi = window[1];
    }
    if (args.seed_given) bc.seed = args.seed;

    fs::create_directories(args.out_dir);
    const cpcox::BootstrapDraws draws = cpcox::run_bootstrap(data, bc, args.threads);
    cpcox::ConfidenceInterval ci =
        cpcox::percentile_ci(draws, draws.zeta_hat, draws.m_n, bc.confidence_level, data.tau);
    ci.method_label = cpcox::method_name(bc.method);
    cpcox::detail::write_draws_csv(args.out_dir + "/draws.csv", draws);
    json ci_json;
    cpcox::to_json(ci_json, ci);
    ci_json["zeta_hat"] = draws.zeta_hat;
    ci_json["m_n"] = draws.m_n;
    ci_json["failures"] = draws.failures;
    cpcox::save_json(args.out_dir + "/ci.json", ci_json);
    json resolved{{"data", data_path}, {"bootstrap", bc}};
    json diag{{"failures", draws.failures}, {"no_mass_events", draws.no_mass_events}};
    cpcox::save_json(args.out_dir + "/manifest.json",
                     cpcox::make_manifest("bootstrap", resolved, diag));
}

void run_limit_law(const CommonArgs& args, std::size_t draws_flag) {
    json cfg = maybe_config(args);
    cpcox::ScenarioConfig scenario =
        cfg.contains("scenario") ? cfg.at("scenario").get<cpcox::ScenarioConfig>()
                                 : cpcox::default_scenario();
    std::size_t ndraws = cfg.value("draws", std::size_t{100000});
    if (draws_flag > 0) ndraws = draws_flag;
    std::uint64_t seed = cfg.value("seed", std::uint64_t{0});
    if (args.seed_given) seed = args.seed;
    const double qstep = cfg.value("quadrature_step", 0.0);

    const cpcox::LimitLawConfig limit = cpcox::derive_limit_config(scenario, qstep);
    fs::create_directories(args.out_dir);
    json limit_json;
    cpcox::to_json(limit_json, limit);
    cpcox::save_json(args.out_dir + "/limit_config.json", limit_json);

    std::ofstream os(args.out_dir + "/draws.csv", std::ios::binary);
    const std::size_t p = limit.delta.size();
    for (std::size_t a = 0; a < p; ++a) os << "phi_alpha_" << (a + 1) << ",";
    for (std::size_t a = 0; a < p; ++a) os << "phi_beta_" << (a + 1) << ",";
    os << "phi_zeta\n";
    for (std::size_t i = 0; i < ndraws; ++i) {
        cpcox::Rng rng = cpcox::Rng::stream(seed, {0x11, i});
        const cpcox::LimitDraw d = cpcox::sample_limit(limit, rng);
        for (std::size_t a = 0; a < p; ++a) os << format_double(d.phi_alpha[a]) << ",";
        for (std::size_t a = 0; a < p; ++a) os << format_double(d.phi_beta[a]) << ",";
        os << format_double(d.phi_zeta) << "\n";
    }
    os.close();
    json resolved{{"scenario", scenario},
                  {"draws", ndraws},
                  {"seed", seed},
                  {"quadrature_step", qstep}};
    cpcox::save_json(args.out_dir + "/manifest.json",
                     cpcox::make_manifest("limit-law", resolved));
}

void run_experiment_cmd(const CommonArgs& args) {
    if (args.config_path.empty()) throw std::runtime_error("experiment: --config required");
    json cfg = maybe_config(args);
    cpcox::ExperimentSpec spec = cfg.get<cpcox::ExperimentSpec>();
    if (args.seed_given) spec.seed = args.seed;
    cpcox::run_experiment(spec, args.out_dir, args.threads);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"change-point Cox regression with bootstrap confidence intervals"};
    app.require_subcommand(1);

    CommonArgs sim_args, fit_args, boot_args, limit_args, exp_args;
    std::size_t sim_n = 0, limit_draws = 0, boot_reps = 0;
    std::string fit_data, boot_data, boot_method;
    std::vector<double> fit_window, boot_window;
    double boot_mexp = 0.0, boot_level = 0.0;

    CLI::App* sim = app.add_subcommand("simulate", "draw a dataset from a scenario");
    add_common(sim, sim_args, false);
    sim->add_option("--n", sim_n, "sample size (overrides config)");

    CLI::App* fit = app.add_subcommand("fit", "maximum partial likelihood fit");
    add_common(fit, fit_args, false);
    fit->add_option("--data", fit_data, "dataset file");
    fit->add_option("--window", fit_window, "change-point window lo hi")->expected(2);

    CLI::App* boot = app.add_subcommand("bootstrap", "bootstrap a fitted dataset");
    add_common(boot, boot_args, true);
    boot->add_option("--data", boot_data, "dataset file");
    boot->add_option("--method", boot_method,
                     "classical|m_out_of_n|conditional|conditional_censoring|smooth|smooth_censoring");
    boot->add_option("--replicates", boot_reps, "bootstrap replicates");
    boot->add_option("--m-exponent", boot_mexp, "m = ceil(n^exponent) for m_out_of_n");
    boot->add_option("--level", boot_level, "confidence level");
    boot->add_option("--window", boot_window, "change-point window lo hi")->expected(2);

    CLI::App* limit = app.add_subcommand("limit-law", "sample the asymptotic law of the estimator");
    add_common(limit, limit_args, false);
    limit->add_option("--draws", limit_draws, "number of draws");

    CLI::App* exp = app.add_subcommand("experiment", "coverage study over methods and sample sizes");
    add_common(exp, exp_args, true);

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) run_simulate(sim_args, sim_n);
        if (fit->parsed()) run_fit(fit_args, fit_data, fit_window);
        if (boot->parsed())
            run_bootstrap_cmd(boot_args, boot_data, boot_method, boot_reps, boot_mexp, boot_level,
                              boot_window);
        if (limit->parsed()) run_limit_law(limit_args, limit_draws);
        if (exp->parsed()) run_experiment_cmd(exp_args);
    } catch (const std::exception& e) {
        std::cerr << json{{"error", std::string(e.what())}}.dump() << std::endl;
        return 1;
    }
    return 0;
}
