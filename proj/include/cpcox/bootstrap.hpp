#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "cpcox/data.hpp"
#include "cpcox/estimators.hpp"
#include "cpcox/likelihood.hpp"
#include "cpcox/rng.hpp"
#include "cpcox/stats.hpp"

namespace cpcox {

enum class BootstrapMethod {
    Classical,            // resample n subject triples from the ED
    MOutOfN,              // resample m_n = ceil(n^exponent) triples
    Conditional,          // T* ~ F^b(.|Z_i), C* ~ G-hat(.|Z_i)
    ConditionalCensoring, // as above, but censored C_i kept / C* > T_i
    Smooth,               // T* ~ F^s(.|Z_i), C* ~ G-hat(.|Z_i)
    SmoothCensoring,
};

inline const char* method_name(BootstrapMethod m) {
    switch (m) {
        case BootstrapMethod::Classical: return "classical";
        case BootstrapMethod::MOutOfN: return "m_out_of_n";
        case BootstrapMethod::Conditional: return "conditional";
        case BootstrapMethod::ConditionalCensoring: return "conditional_censoring";
        case BootstrapMethod::Smooth: return "smooth";
        case BootstrapMethod::SmoothCensoring: return "smooth_censoring";
    }
    return "?";
}

inline BootstrapMethod method_from_name(const std::string& s) {
    for (BootstrapMethod m :
         {BootstrapMethod::Classical, BootstrapMethod::MOutOfN, BootstrapMethod::Conditional,
          BootstrapMethod::ConditionalCensoring, BootstrapMethod::Smooth,
          BootstrapMethod::SmoothCensoring})
        if (s == method_name(m)) return m;
    throw std::invalid_argument("unknown bootstrap method: " + s);
}

inline bool method_needs_model(BootstrapMethod m) {
    return m != BootstrapMethod::Classical && m != BootstrapMethod::MOutOfN;
}

inline bool method_is_smooth(BootstrapMethod m) {
    return m == BootstrapMethod::Smooth || m == BootstrapMethod::SmoothCensoring;
}

inline bool method_conditions_on_censoring(BootstrapMethod m) {
    return m == BootstrapMethod::ConditionalCensoring || m == BootstrapMethod::SmoothCensoring;
}

struct BootstrapConfig {
    BootstrapMethod method = BootstrapMethod::Smooth;
    std::size_t replicates = 500;
    double m_exponent = 1.0; // m_n = ceil(n^m_exponent); must be < 1 for MOutOfN
    ProfileFitConfig fit;
    std::uint64_t seed = 0;
    double confidence_level = 0.95;
    double max_failure_fraction = 0.05;

    void validate() const {
        if (method == BootstrapMethod::MOutOfN && !(m_exponent < 1.0))
            throw std::invalid_argument("m-out-of-n requires m_exponent < 1");
        if (!(m_exponent > 0.0 && m_exponent <= 1.0))
            throw std::invalid_argument("m_exponent must lie in (0,1]");
        if (!(confidence_level > 0.0 && confidence_level < 1.0))
            throw std::invalid_argument("confidence_level must lie in (0,1)");
    }
};

struct BootstrapDraws {
    std::vector<double> scaled_zeta;     // m_n (zeta* - zeta-hat), sorted ascending
    std::vector<double> rep_scaled_zeta; // same values in replicate order (CSV rows)
    std::vector<Vec> scaled_alpha;       // sqrt(m_n) (alpha* - alpha-hat), replicate order
    std::vector<Vec> scaled_beta;
    std::size_t failures = 0;
    // context carried for interval construction and export
    std::size_t m_n = 0;
    std::size_t n = 0;
    double zeta_hat = 0.0;
    std::uint64_t no_mass_events = 0;
};

struct ConfidenceInterval {
    double lower = 0.0;
    double upper = 0.0;
    double level = 0.0;
    std::string method_label;
};

struct FitFailedError : std::runtime_error {
    FitFailedError() : std::runtime_error("base fit did not converge") {}
};
struct TooManyFailuresError : std::runtime_error {
    explicit TooManyFailuresError(std::size_t k, std::size_t b)
        : std::runtime_error("bootstrap replicate failures " + std::to_string(k) + "/" +
                             std::to_string(b) + " exceed the cap") {}
};
struct EmptyDrawsError : std::runtime_error {
    EmptyDrawsError() : std::runtime_error("no bootstrap draws") {}
};

inline Dataset resample_classical(const Dataset& data, std::size_t m, Rng& rng) {
    Dataset out;
    out.tau = data.tau;
    out.subjects.reserve(m);
    const std::size_t n = data.size();
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(n));
        out.subjects.push_back(data.subjects[std::min(j, n - 1)]);
    }
    return out;
}

namespace detail {

// Per-level samplers cached once so replicate generation is O(n log grid).
class ConditionalResampler {
public:
    ConditionalResampler(const FittedModel& model, bool smooth, bool condition_on_censoring)
        : model_(&model), smooth_(smooth), cond_(condition_on_censoring) {
        for (const Vec& z : model.censoring.levels) {
            CovariatePath path(z);
            if (smooth_)
                smooth_samplers_.emplace_back(model, path);
            else
                step_samplers_.emplace_back(model, path);
        }
    }

    Dataset draw(Rng& rng, std::uint64_t* no_mass_events = nullptr) const {
        const FittedModel& m = *model_;
        Dataset out;
        out.tau = m.tau;
        out.subjects.resize(m.obs_time.size());
        for (std::size_t i = 0; i < m.obs_time.size(); ++i) {
            const std::size_t l = m.obs_level[i];
            const double t_star =
                smooth_ ? smooth_samplers_[l].draw(rng) : step_samplers_[l].draw(rng);
            double c_star;
            if (cond_ && !m.obs_event[i]) {
                c_star = m.obs_time[i]; // keep the observed censoring time
            } else if (cond_) {
                c_star = sample_censoring(m.censoring, l, m.tau, rng, m.obs_time[i], no_mass_events);
            } else {
                c_star = sample_censoring(m.censoring, l, m.tau, rng, std::nullopt, no_mass_events);
            }
            Subject& s = out.subjects[i];
            s.observed_time = std::min(t_star, c_star);
            s.event = t_star <= c_star;
            s.covariates = CovariatePath(m.censoring.levels[l]);
        }
        return out;
    }

private:
    const FittedModel* model_;
    bool smooth_, cond_;
    std::vector<StepSurvivalSampler> step_samplers_;
    std::vector<SmoothSurvivalSampler> smooth_samplers_;
};

} // namespace detail

inline Dataset resample_conditional(const FittedModel& model, Rng& rng,
                                    bool condition_on_censoring, bool smooth,
                                    std::uint64_t* no_mass_events = nullptr) {
    return detail::ConditionalResampler(model, smooth, condition_on_censoring)
        .draw(rng, no_mass_events);
}

inline std::size_t m_out_of_n_size(std::size_t n, double exponent) {
    return static_cast<std::size_t>(
        std::ceil(std::pow(static_cast<double>(n), exponent) - 1e-9));
}

// Run B bootstrap replicates and collect the centered, scaled statistics.
// Replicate b draws its RNG stream from (cfg.seed, b), so results do not
// depend on worker scheduling.
inline BootstrapDraws run_bootstrap(const Dataset& data, const BootstrapConfig& cfg,
                                    unsigned threads = 1) {
    cfg.validate();
    const FitResult base = fit_mple(data, cfg.fit);
    if (!base.converged) throw FitFailedError();

    const std::size_t n = data.size();
    const std::size_t m_n =
        cfg.method == BootstrapMethod::MOutOfN ? m_out_of_n_size(n, cfg.m_exponent) : n;
    const double scale_zeta = static_cast<double>(m_n);
    const double scale_coef = std::sqrt(scale_zeta);

    FittedModel model;
    std::unique_ptr<detail::ConditionalResampler> resampler;
    if (method_needs_model(cfg.method)) {
        FittedModelOptions opt;
        opt.with_smooth = method_is_smooth(cfg.method);
        model = build_fitted_model(data, base.theta, opt);
        resampler = std::make_unique<detail::ConditionalResampler>(
            model, method_is_smooth(cfg.method), method_conditions_on_censoring(cfg.method));
    }

    const std::size_t B = cfg.replicates;
    struct Slot {
        bool ok = false;
        double zeta = 0.0;
        Vec alpha, beta;
        std::uint64_t no_mass = 0;
    };
    std::vector<Slot> slots(B);

    auto run_one = [&](std::size_t b) {
        Rng rng = Rng::stream(cfg.seed, {0xb5, static_cast<std::uint64_t>(b)});
        Slot& slot = slots[b];
        try {
            Dataset rep;
            if (resampler)
                rep = resampler->draw(rng, &slot.no_mass);
            else
                rep = resample_classical(data, m_n, rng);
            const FitResult fr = fit_mple(rep, cfg.fit);
            if (!fr.converged) return;
            slot.ok = true;
            slot.zeta = scale_zeta * (fr.theta.zeta - base.theta.zeta);
            slot.alpha.resize(fr.theta.alpha.size());
            slot.beta.resize(fr.theta.beta.size());
            for (std::size_t a = 0; a < slot.alpha.size(); ++a)
                slot.alpha[a] = scale_coef * (fr.theta.alpha[a] - base.theta.alpha[a]);
            for (std::size_t a = 0; a < slot.beta.size(); ++a)
                slot.beta[a] = scale_coef * (fr.theta.beta[a] - base.theta.beta[a]);
        } catch (const NoEventsError&) {
        } catch (const EmptyRiskSetError&) {
        }
    };

    if (threads <= 1 || B < 2) {
        for (std::size_t b = 0; b < B; ++b) run_one(b);
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (;;) {
                const std::size_t b = next.fetch_add(1);
                if (b >= B) return;
                run_one(b);
            }
        };
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < threads; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    BootstrapDraws draws;
    draws.m_n = m_n;
    draws.n = n;
    draws.zeta_hat = base.theta.zeta;
    for (const Slot& s : slots) {
        draws.no_mass_events += s.no_mass;
        if (!s.ok) {
            ++draws.failures;
            continue;
        }
        draws.rep_scaled_zeta.push_back(s.zeta);
        draws.scaled_alpha.push_back(s.alpha);
        draws.scaled_beta.push_back(s.beta);
    }
    draws.scaled_zeta = draws.rep_scaled_zeta;
    std::sort(draws.scaled_zeta.begin(), draws.scaled_zeta.end());
    if (static_cast<double>(draws.failures) >
        cfg.max_failure_fraction * static_cast<double>(B))
        throw TooManyFailuresError(draws.failures, B);
    return draws;
}

// Percentile interval for zeta0 from the scaled draws:
// [zeta-hat + q_{a/2}/count, zeta-hat + q_{1-a/2}/count], clamped to [0,tau].
inline ConfidenceInterval percentile_ci(const BootstrapDraws& draws, double zeta_hat,
                                        std::size_t count, double level,
                                        double tau = std::numeric_limits<double>::infinity()) {
    if (draws.scaled_zeta.empty()) throw EmptyDrawsError();
    const double a = 1.0 - level;
    const double q_lo = quantile_sorted(draws.scaled_zeta, a / 2.0);
    const double q_hi = quantile_sorted(draws.scaled_zeta, 1.0 - a / 2.0);
    ConfidenceInterval ci;
    ci.level = level;
    ci.lower = std::max(0.0, zeta_hat + q_lo / static_cast<double>(count));
    ci.upper = std::min(tau, zeta_hat + q_hi / static_cast<double>(count));
    if (ci.lower > ci.upper) std::swap(ci.lower, ci.upper);
    return ci;
}

} // namespace cpcox
