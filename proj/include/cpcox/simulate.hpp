#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "cpcox/data.hpp"
#include "cpcox/rng.hpp"

namespace cpcox {

// Piecewise-constant rate on [0, tau]: rates[0] on [0, breaks[0]],
// rates[j] on (breaks[j-1], breaks[j]], rates.back() on the final segment.
struct PiecewiseHazard {
    std::vector<double> breaks;
    std::vector<double> rates;

    static PiecewiseHazard constant(double rate) { return {{}, {rate}}; }

    double value(double t) const {
        const auto it = std::lower_bound(breaks.begin(), breaks.end(), t);
        return rates[static_cast<std::size_t>(it - breaks.begin())];
    }

    // integral of the rate over [0, t]
    double cumulative(double t) const {
        double acc = 0.0, prev = 0.0;
        for (std::size_t j = 0; j < breaks.size(); ++j) {
            if (t <= breaks[j]) return acc + rates[j] * (t - prev);
            acc += rates[j] * (breaks[j] - prev);
            prev = breaks[j];
        }
        return acc + rates.back() * (t - prev);
    }

    // exact inverse of the cumulative; +inf when target exceeds cumulative(tau)
    double invert_cumulative(double target, double tau) const {
        double acc = 0.0, prev = 0.0;
        for (std::size_t j = 0; j < breaks.size(); ++j) {
            const double seg = rates[j] * (breaks[j] - prev);
            if (target <= acc + seg) return prev + (target - acc) / rates[j];
            acc += seg;
            prev = breaks[j];
        }
        const double t = prev + (target - acc) / rates.back();
        return t <= tau ? t : kBeyondHorizon;
    }
};

struct ScenarioConfig {
    Vec alpha0;
    Vec beta0;
    double zeta0 = 0.0;
    PiecewiseHazard baseline;
    std::vector<Vec> covariate_levels;
    std::vector<double> covariate_probs;
    double censoring_rate = 0.0; // exponential rate, capped at tau
    double tau = 0.0;
    std::size_t n = 0;

    std::size_t dim() const { return alpha0.size(); }

    void validate() const {
        if (alpha0.size() != beta0.size()) throw std::invalid_argument("scenario: dim mismatch");
        if (!(zeta0 > 0.0 && zeta0 < tau)) throw std::invalid_argument("scenario: zeta0 outside (0,tau)");
        if (covariate_levels.empty() || covariate_levels.size() != covariate_probs.size())
            throw std::invalid_argument("scenario: bad covariate law");
        double s = 0.0;
        for (double pr : covariate_probs) s += pr;
        if (std::fabs(s - 1.0) > 1e-9) throw std::invalid_argument("scenario: covariate probs must sum to 1");
        for (double r : baseline.rates)
            if (!(r > 0.0)) throw std::invalid_argument("scenario: baseline must be strictly positive");
    }
};

// Built-in study design: Z ~ Bernoulli(0.5), alpha0 = 0, beta0 = -1.5,
// zeta0 = 1, lambda0 = 0.5, censoring Exp(0.1) capped at tau = 4.
inline ScenarioConfig default_scenario(std::size_t n = 500) {
    ScenarioConfig cfg;
    cfg.alpha0 = {0.0};
    cfg.beta0 = {-1.5};
    cfg.zeta0 = 1.0;
    cfg.baseline = PiecewiseHazard::constant(0.5);
    cfg.covariate_levels = {{0.0}, {1.0}};
    cfg.covariate_probs = {0.5, 0.5};
    cfg.censoring_rate = 0.1;
    cfg.tau = 4.0;
    cfg.n = n;
    return cfg;
}

// Lambda(t|z) = e^{a'z} L0(min(t,zeta0)) + e^{b'z} (L0(t)-L0(zeta0))^+
inline double cum_hazard(const ScenarioConfig& cfg, const Vec& z, double t) {
    const double l_pre = cfg.baseline.cumulative(std::min(t, cfg.zeta0));
    double h = std::exp(dot(cfg.alpha0, z)) * l_pre;
    if (t > cfg.zeta0)
        h += std::exp(dot(cfg.beta0, z)) * (cfg.baseline.cumulative(t) - cfg.baseline.cumulative(cfg.zeta0));
    return h;
}

inline double survival(const ScenarioConfig& cfg, const Vec& z, double t) {
    return std::exp(-cum_hazard(cfg, z, t));
}

// Exact inverse-transform draw of the latent survival time.
inline double sample_survival_time(const ScenarioConfig& cfg, const Vec& z, double u) {
    const double target = -std::log1p(-u);
    const double wa = std::exp(dot(cfg.alpha0, z));
    const double pre_total = wa * cfg.baseline.cumulative(cfg.zeta0);
    if (target <= pre_total)
        return cfg.baseline.invert_cumulative(target / wa, cfg.tau);
    const double wb = std::exp(dot(cfg.beta0, z));
    const double base_target = cfg.baseline.cumulative(cfg.zeta0) + (target - pre_total) / wb;
    return cfg.baseline.invert_cumulative(base_target, cfg.tau);
}

struct LatentDraw {
    std::size_t level = 0;     // index into covariate_levels
    double survival_time = 0.0; // kBeyondHorizon when beyond tau
    double censoring_time = 0.0;
};

// Per-subject substream keyed by (seed, i): parallel generation is
// order-independent and bit-reproducible.
inline LatentDraw sample_latent(const ScenarioConfig& cfg, std::uint64_t seed, std::size_t i) {
    Rng rng = Rng::stream(seed, {0x5a, static_cast<std::uint64_t>(i)});
    LatentDraw d;
    d.level = rng.discrete(cfg.covariate_probs);
    d.survival_time = sample_survival_time(cfg, cfg.covariate_levels[d.level], rng.uniform());
    d.censoring_time = std::min(rng.exponential(cfg.censoring_rate), cfg.tau);
    return d;
}

inline Dataset sample_dataset(const ScenarioConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Dataset data;
    data.tau = cfg.tau;
    data.subjects.reserve(cfg.n);
    for (std::size_t i = 0; i < cfg.n; ++i) {
        const LatentDraw d = sample_latent(cfg, seed, i);
        Subject s;
        s.observed_time = std::min(d.survival_time, d.censoring_time);
        s.event = d.survival_time <= d.censoring_time;
        s.covariates = CovariatePath(cfg.covariate_levels[d.level]);
        data.subjects.push_back(std::move(s));
    }
    return data;
}

} // namespace cpcox
