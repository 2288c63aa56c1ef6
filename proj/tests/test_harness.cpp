#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cpcox/harness.hpp"

using namespace cpcox;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

ExperimentSpec tiny_spec() {
    ExperimentSpec spec;
    spec.scenario = default_scenario();
    spec.sample_sizes = {60};
    spec.monte_carlo_reps = 4;
    spec.seed = 777;
    BootstrapConfig smooth;
    smooth.method = BootstrapMethod::Smooth;
    smooth.replicates = 40;
    smooth.fit = ProfileFitConfig{0.5, 1.5};
    BootstrapConfig classical = smooth;
    classical.method = BootstrapMethod::Classical;
    spec.methods = {smooth, classical};
    return spec;
}

} // namespace

TEST_CASE("km_curves") {
    SECTION("no censoring reduces to one minus the ECDF per stratum") {
        ScenarioConfig scn = default_scenario(300);
        scn.censoring_rate = 0.0;
        scn.baseline = PiecewiseHazard::constant(40.0);
        const Dataset d = sample_dataset(scn, 2);
        REQUIRE(count_events(d) == d.size());
        const auto curves = km_curves(d);
        REQUIRE(curves.size() == 2);
        for (const auto& [z, km] : curves) {
            std::vector<double> times;
            for (const Subject& s : d.subjects)
                if (s.covariates.at(0.0) == z) times.push_back(s.observed_time);
            for (double t : {0.001, 0.01, 0.02, 0.05}) {
                double above = 0.0;
                for (double u : times) above += u > t ? 1.0 : 0.0;
                CHECK(km.at(t) == Catch::Approx(above / times.size()).epsilon(1e-13));
            }
        }
    }
    SECTION("single stratum gives a single curve") {
        ScenarioConfig scn = default_scenario(50);
        scn.covariate_levels = {{1.0}};
        scn.covariate_probs = {1.0};
        const Dataset d = sample_dataset(scn, 4);
        CHECK(km_curves(d).size() == 1);
    }
    SECTION("curves separate after the change point, not before") {
        // the treatment effect only exists for t > zeta0 = 1
        int sharper_at_two = 0;
        const int reps = 15;
        std::vector<double> gaps;
        for (int rep = 0; rep < reps; ++rep) {
            ScenarioConfig scn = default_scenario(1000);
            const Dataset d = sample_dataset(scn, derive_seed(31337, {(std::uint64_t)rep}));
            const auto curves = km_curves(d);
            REQUIRE(curves.size() == 2);
            const double d1 = std::fabs(curves[0].second.at(1.0) - curves[1].second.at(1.0));
            const double d2 = std::fabs(curves[0].second.at(2.0) - curves[1].second.at(2.0));
            sharper_at_two += d2 > d1 ? 1 : 0;
            gaps.push_back(d2 - d1);
        }
        CHECK(sharper_at_two == reps);
        const double m = mean(gaps);
        const double se = std::sqrt(sample_variance(gaps) / reps);
        CHECK(m > 3.0 * se);
    }
}

TEST_CASE("experiment spec json round trip") {
    const ExperimentSpec spec = tiny_spec();
    json j;
    to_json(j, spec);
    const ExperimentSpec back = j.get<ExperimentSpec>();
    CHECK(back.sample_sizes == spec.sample_sizes);
    CHECK(back.monte_carlo_reps == spec.monte_carlo_reps);
    CHECK(back.seed == spec.seed);
    REQUIRE(back.methods.size() == 2);
    CHECK(back.methods[0].method == BootstrapMethod::Smooth);
    CHECK(back.methods[1].method == BootstrapMethod::Classical);
    CHECK(back.methods[0].fit.zeta_lo == 0.5);
    CHECK(back.scenario.beta0[0] == -1.5);
}

TEST_CASE("fit result serializes to json") {
    const ScenarioConfig scn = default_scenario(80);
    const Dataset d = sample_dataset(scn, 5);
    const FitResult fit = fit_mple(d, ProfileFitConfig{0.5, 1.5});
    json j;
    to_json(j, fit);
    CHECK(j.at("converged").get<bool>());
    CHECK(j.at("theta").at("zeta").get<double>() == fit.theta.zeta);
    CHECK(j.at("profile").size() == fit.profile.size());
}

TEST_CASE("experiment outputs are reproducible and complete") {
    const ExperimentSpec spec = tiny_spec();
    const std::string dir1 = (fs::temp_directory_path() / "cpcox_exp1").string();
    const std::string dir2 = (fs::temp_directory_path() / "cpcox_exp2").string();
    fs::remove_all(dir1);
    fs::remove_all(dir2);
    const ExperimentResult r1 = run_experiment(spec, dir1, 2);
    const ExperimentResult r2 = run_experiment(spec, dir2, 1);

    SECTION("coverage rows cover every non-failed cell") {
        CHECK(r1.rows.size() + r1.failed_cells.size() ==
              spec.sample_sizes.size() * spec.methods.size());
    }
    SECTION("stored standard errors are recomputable") {
        for (const auto& row : r1.rows) {
            const double se = std::sqrt(row.coverage * (1.0 - row.coverage) /
                                        static_cast<double>(spec.monte_carlo_reps));
            CHECK(row.mc_standard_error == se);
        }
    }
    SECTION("independent runs with different thread counts are byte-identical") {
        for (const auto& entry : fs::directory_iterator(dir1)) {
            const std::string name = entry.path().filename().string();
            CAPTURE(name);
            CHECK(slurp(dir1 + "/" + name) == slurp(dir2 + "/" + name));
        }
    }
    SECTION("rerunning from the manifest reproduces the outputs") {
        const json manifest = load_json(dir1 + "/manifest.json");
        const ExperimentSpec again = unwrap_config(manifest).get<ExperimentSpec>();
        const std::string dir3 = (fs::temp_directory_path() / "cpcox_exp3").string();
        fs::remove_all(dir3);
        run_experiment(again, dir3, 2);
        CHECK(slurp(dir1 + "/coverage.csv") == slurp(dir3 + "/coverage.csv"));
        CHECK(slurp(dir1 + "/manifest.json") == slurp(dir3 + "/manifest.json"));
    }
}
