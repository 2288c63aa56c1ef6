#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "cpcox/data.hpp"
#include "cpcox/likelihood.hpp"
#include "cpcox/rng.hpp"

namespace cpcox {

struct StepCumHazard {
    std::vector<double> jump_times; // distinct event times, ascending
    std::vector<double> jump_sizes;

    double value(double t) const {
        double acc = 0.0;
        for (std::size_t j = 0; j < jump_times.size() && jump_times[j] <= t; ++j)
            acc += jump_sizes[j];
        return acc;
    }

    double total() const {
        double acc = 0.0;
        for (double s : jump_sizes) acc += s;
        return acc;
    }
};

// Breslow estimator at theta: one jump per distinct event time of size
// (#events at t) / sum_{at risk} exp(coef(t)'Z_j(t)).
inline StepCumHazard breslow(const Dataset& data, const ChangePointParams& theta) {
    if (count_events(data) == 0) throw NoEventsError();
    StepCumHazard out;
    out.jump_times = event_times(data);
    out.jump_sizes.assign(out.jump_times.size(), 0.0);
    for (std::size_t j = 0; j < out.jump_times.size(); ++j) {
        const double t = out.jump_times[j];
        const Vec& coef = theta.coef_at(t);
        double denom = 0.0;
        double d = 0.0;
        for (const Subject& s : data.subjects) {
            if (s.observed_time >= t) denom += std::exp(dot(coef, s.covariates.at(t)));
            if (s.event && s.observed_time == t) d += 1.0;
        }
        out.jump_sizes[j] = d / denom;
    }
    return out;
}

struct SmoothHazard {
    double tau = 0.0;
    double grid_step = 0.0;
    std::vector<double> values; // hazard at 0, step, 2*step, ..., tau
    double bandwidth = 0.0;

    double value(double t) const {
        if (t <= 0.0) return values.front();
        if (t >= tau) return values.back();
        const double x = t / grid_step;
        const std::size_t i = std::min(static_cast<std::size_t>(x), values.size() - 2);
        const double frac = x - static_cast<double>(i);
        return values[i] * (1.0 - frac) + values[i + 1] * frac;
    }

    double integral() const {
        double acc = 0.0;
        for (std::size_t i = 0; i + 1 < values.size(); ++i)
            acc += 0.5 * (values[i] + values[i + 1]) * grid_step;
        return acc;
    }
};

namespace detail {

// Gaussian kernel smoothing of a jump measure with reflection at both
// boundaries so mass inside [0,tau] is preserved.
inline SmoothHazard smooth_from_jumps(const std::vector<double>& jump_times,
                                      const std::vector<double>& jump_sizes,
                                      double bandwidth, double grid_step, double tau) {
    SmoothHazard out;
    out.tau = tau;
    out.grid_step = grid_step;
    out.bandwidth = bandwidth;
    const std::size_t m = static_cast<std::size_t>(std::ceil(tau / grid_step)) + 1;
    out.values.assign(m, 0.0);
    const double inv_h = 1.0 / bandwidth;
    const double norm = inv_h / std::sqrt(6.283185307179586476925286766559);
    const double cutoff = 8.0 * bandwidth;
    auto kern = [&](double d) {
        if (std::fabs(d) > cutoff) return 0.0;
        const double u = d * inv_h;
        return norm * std::exp(-0.5 * u * u);
    };
    for (std::size_t i = 0; i < m; ++i) {
        const double t = std::min(static_cast<double>(i) * grid_step, tau);
        double acc = 0.0;
        for (std::size_t j = 0; j < jump_times.size(); ++j) {
            const double s = jump_times[j];
            acc += jump_sizes[j] * (kern(t - s) + kern(t + s) + kern(2.0 * tau - t - s));
        }
        out.values[i] = acc;
    }
    return out;
}

} // namespace detail

struct KaplanMeier {
    std::vector<double> drop_times; // times where the survival steps down
    std::vector<double> survival;   // value from drop_times[i] onward

    double at(double t) const {
        const auto it = std::upper_bound(drop_times.begin(), drop_times.end(), t);
        const std::size_t k = static_cast<std::size_t>(it - drop_times.begin());
        return k == 0 ? 1.0 : survival[k - 1];
    }
};

// Product-limit estimator; at tied times events are processed with the
// full risk set (censored subjects at t stay at risk at t).
inline KaplanMeier product_limit(std::vector<std::pair<double, bool>> obs) {
    std::sort(obs.begin(), obs.end());
    KaplanMeier km;
    double surv = 1.0;
    std::size_t at_risk = obs.size();
    std::size_t i = 0;
    while (i < obs.size()) {
        const double t = obs[i].first;
        std::size_t d = 0, total = 0;
        while (i < obs.size() && obs[i].first == t) {
            d += obs[i].second ? 1 : 0;
            ++total;
            ++i;
        }
        if (d > 0) {
            surv *= 1.0 - static_cast<double>(d) / static_cast<double>(at_risk);
            km.drop_times.push_back(t);
            km.survival.push_back(surv);
        }
        at_risk -= total;
    }
    return km;
}

struct CensoringEstimate {
    std::vector<Vec> levels;
    std::vector<KaplanMeier> km; // KM of the censoring time per level

    std::size_t stratum(const Vec& z) const {
        for (std::size_t l = 0; l < levels.size(); ++l)
            if (levels[l] == z) return l;
        throw NonCategoricalError("no censoring stratum for covariate value");
    }
};

// Kaplan-Meier of the censoring distribution with flipped roles:
// censorings are the events, failures the censorings.
inline CensoringEstimate km_censoring(const Dataset& data, std::size_t max_strata = 100) {
    CensoringEstimate est;
    std::map<Vec, std::size_t> seen;
    std::vector<std::vector<std::pair<double, bool>>> obs;
    for (const Subject& s : data.subjects) {
        if (!s.covariates.is_constant())
            throw NonCategoricalError("km_censoring requires constant covariates");
        const Vec& z = s.covariates.at(0.0);
        auto [it, inserted] = seen.emplace(z, est.levels.size());
        if (inserted) {
            est.levels.push_back(z);
            obs.emplace_back();
            if (est.levels.size() > max_strata)
                throw NonCategoricalError("km_censoring: too many covariate strata");
        }
        obs[it->second].emplace_back(s.observed_time, !s.event);
    }
    for (auto& o : obs) est.km.push_back(product_limit(std::move(o)));
    return est;
}

// Inverse-transform sampling from a stratum's KM distribution. Residual
// mass beyond the last drop (defective distribution) maps to tau, as does
// conditioning above the entire support.
inline double sample_censoring(const CensoringEstimate& est, std::size_t stratum, double tau,
                               Rng& rng, std::optional<double> lower_bound = std::nullopt,
                               std::uint64_t* no_mass_events = nullptr) {
    const KaplanMeier& km = est.km[stratum];
    if (!lower_bound) {
        const double u = rng.uniform();
        for (std::size_t j = 0; j < km.drop_times.size(); ++j)
            if (u < 1.0 - km.survival[j]) return km.drop_times[j];
        return tau;
    }
    const double lb = *lower_bound;
    // conditional law given C > lb: renormalize mass strictly above lb
    const double tail = km.at(lb);
    if (!(tail > 0.0) || lb >= tau) {
        if (no_mass_events) ++*no_mass_events;
        return tau;
    }
    const double u = rng.uniform() * tail;
    for (std::size_t j = 0; j < km.drop_times.size(); ++j) {
        if (km.drop_times[j] <= lb) continue;
        if (u < tail - km.survival[j]) return km.drop_times[j];
    }
    return tau;
}

// Draw from the stratum matching covariate value z.
inline double sample_censoring(const CensoringEstimate& est, const Vec& z, double tau, Rng& rng,
                               std::optional<double> lower_bound = std::nullopt,
                               std::uint64_t* no_mass_events = nullptr) {
    return sample_censoring(est, est.stratum(z), tau, rng, lower_bound, no_mass_events);
}

struct FittedModel {
    ChangePointParams theta;
    StepCumHazard baseline;
    std::optional<SmoothHazard> smooth;
    CensoringEstimate censoring;
    double tau = 0.0;
    // per-subject frame used by the conditional resamplers
    std::vector<double> obs_time;
    std::vector<bool> obs_event;
    std::vector<std::size_t> obs_level;
};

// Bandwidth from the normal-reference rule on the event times.
inline double normal_reference_bandwidth(const std::vector<double>& evt_times, double tau) {
    const std::size_t n = evt_times.size();
    if (n == 0) throw NoEventsError();
    double mean = 0.0;
    for (double v : evt_times) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : evt_times) ss += (v - mean) * (v - mean);
    double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    if (sd <= 0.0) sd = tau / std::sqrt(12.0); // degenerate spread fallback
    return 1.06 * sd * std::pow(static_cast<double>(n), -0.2);
}

inline double normal_reference_bandwidth(const Dataset& data) {
    std::vector<double> t;
    for (const Subject& s : data.subjects)
        if (s.event) t.push_back(s.observed_time);
    return normal_reference_bandwidth(t, data.tau);
}

inline SmoothHazard kernel_smooth_hazard(const Dataset& data, const StepCumHazard& base,
                                         double grid_step) {
    if (base.jump_times.empty()) throw NoEventsError();
    const double h = normal_reference_bandwidth(data);
    return detail::smooth_from_jumps(base.jump_times, base.jump_sizes, h, grid_step, data.tau);
}

// CSV export (time,value) for plotting.
inline void write_step_hazard_csv(std::ostream& os, const StepCumHazard& h) {
    os << "time,cumulative_hazard\n0,0\n";
    double acc = 0.0;
    for (std::size_t j = 0; j < h.jump_times.size(); ++j) {
        acc += h.jump_sizes[j];
        os << format_double(h.jump_times[j]) << "," << format_double(acc) << "\n";
    }
}

inline void write_smooth_hazard_csv(std::ostream& os, const SmoothHazard& h) {
    os << "time,hazard\n";
    for (std::size_t i = 0; i < h.values.size(); ++i) {
        const double t = std::min(static_cast<double>(i) * h.grid_step, h.tau);
        os << format_double(t) << "," << format_double(h.values[i]) << "\n";
    }
}

struct FittedModelOptions {
    bool with_smooth = false;
    double smooth_grid_step = 0.0; // 0 -> tau/4096
};

inline FittedModel build_fitted_model(const Dataset& data, const ChangePointParams& theta,
                                      const FittedModelOptions& opt = {}) {
    FittedModel m;
    m.theta = theta;
    m.tau = data.tau;
    m.baseline = breslow(data, theta);
    m.censoring = km_censoring(data);
    if (opt.with_smooth) {
        const double step = opt.smooth_grid_step > 0.0 ? opt.smooth_grid_step : data.tau / 4096.0;
        m.smooth = kernel_smooth_hazard(data, m.baseline, step);
    }
    m.obs_time.reserve(data.size());
    m.obs_event.reserve(data.size());
    m.obs_level.reserve(data.size());
    for (const Subject& s : data.subjects) {
        m.obs_time.push_back(s.observed_time);
        m.obs_event.push_back(s.event);
        m.obs_level.push_back(m.censoring.stratum(s.covariates.at(0.0)));
    }
    return m;
}

// Smooth the model's own Breslow estimate; bandwidth from the event times
// in the fitted frame.
inline SmoothHazard kernel_smooth_hazard(const FittedModel& model, double grid_step) {
    std::vector<double> t;
    for (std::size_t i = 0; i < model.obs_time.size(); ++i)
        if (model.obs_event[i]) t.push_back(model.obs_time[i]);
    const double h = normal_reference_bandwidth(t, model.tau);
    return detail::smooth_from_jumps(model.baseline.jump_times, model.baseline.jump_sizes, h,
                                     grid_step, model.tau);
}

// Sampler for T* ~ F^b(.|z): discrete over the Breslow jump times. An
// Exp(1) draw is matched against the accumulated covariate-weighted jumps.
class StepSurvivalSampler {
public:
    StepSurvivalSampler(const FittedModel& model, const CovariatePath& z) {
        const StepCumHazard& b = model.baseline;
        times_ = b.jump_times;
        cum_.resize(times_.size());
        double acc = 0.0;
        for (std::size_t j = 0; j < times_.size(); ++j) {
            const double t = times_[j];
            acc += std::exp(dot(model.theta.coef_at(t), z.at(t))) * b.jump_sizes[j];
            cum_[j] = acc;
        }
    }

    double draw(Rng& rng) const {
        const double e = -std::log(rng.uniform());
        const auto it = std::lower_bound(cum_.begin(), cum_.end(), e);
        if (it == cum_.end()) return kBeyondHorizon;
        return times_[static_cast<std::size_t>(it - cum_.begin())];
    }

    // P(T* <= t); for tests
    double cdf(double t) const {
        const auto it = std::upper_bound(times_.begin(), times_.end(), t);
        if (it == times_.begin()) return 0.0;
        return 1.0 - std::exp(-cum_[static_cast<std::size_t>(it - times_.begin()) - 1]);
    }

private:
    std::vector<double> times_;
    std::vector<double> cum_;
};

inline StepSurvivalSampler conditional_survival_step(const FittedModel& model,
                                                     const CovariatePath& z) {
    return StepSurvivalSampler(model, z);
}

// Sampler for T* ~ F^s(.|z): trapezoid integration of the weighted smooth
// hazard over the evaluation grid, with an extra node at zeta-hat where the
// integrand switches coefficient; inversion is linear between nodes.
class SmoothSurvivalSampler {
public:
    SmoothSurvivalSampler(const FittedModel& model, const CovariatePath& z) {
        if (!model.smooth) throw std::runtime_error("smooth hazard not built");
        const SmoothHazard& sh = *model.smooth;
        const double zeta = model.theta.zeta;
        for (std::size_t i = 0; i < sh.values.size(); ++i)
            nodes_.push_back(std::min(static_cast<double>(i) * sh.grid_step, sh.tau));
        if (zeta > 0.0 && zeta < sh.tau) nodes_.push_back(zeta);
        for (double b : z.breakpoints())
            if (b > 0.0 && b < sh.tau) nodes_.push_back(b);
        std::sort(nodes_.begin(), nodes_.end());
        nodes_.erase(std::unique(nodes_.begin(), nodes_.end()), nodes_.end());
        cum_.assign(nodes_.size(), 0.0);
        for (std::size_t i = 1; i < nodes_.size(); ++i) {
            const double a = nodes_[i - 1], b = nodes_[i];
            // coefficient and covariate value are constant on (a, b]
            const Vec& coef = b <= zeta ? model.theta.alpha : model.theta.beta;
            const double w = std::exp(dot(coef, z.at(b)));
            cum_[i] = cum_[i - 1] + w * 0.5 * (sh.value(a) + sh.value(b)) * (b - a);
        }
    }

    double draw(Rng& rng) const {
        const double e = -std::log(rng.uniform());
        return invert(e);
    }

    double invert(double target) const {
        if (target > cum_.back()) return kBeyondHorizon;
        const auto it = std::lower_bound(cum_.begin(), cum_.end(), target);
        const std::size_t i = static_cast<std::size_t>(it - cum_.begin());
        if (i == 0) return 0.0;
        const double seg = cum_[i] - cum_[i - 1];
        const double frac = seg > 0.0 ? (target - cum_[i - 1]) / seg : 0.0;
        return nodes_[i - 1] + frac * (nodes_[i] - nodes_[i - 1]);
    }

    double cdf(double t) const {
        const auto it = std::upper_bound(nodes_.begin(), nodes_.end(), t);
        std::size_t i = static_cast<std::size_t>(it - nodes_.begin());
        if (i == 0) return 0.0;
        if (i >= nodes_.size()) return 1.0 - std::exp(-cum_.back());
        const double a = nodes_[i - 1], b = nodes_[i];
        const double frac = b > a ? (t - a) / (b - a) : 0.0;
        const double m = cum_[i - 1] + frac * (cum_[i] - cum_[i - 1]);
        return 1.0 - std::exp(-m);
    }

private:
    std::vector<double> nodes_;
    std::vector<double> cum_;
};

inline SmoothSurvivalSampler conditional_survival_smooth(const FittedModel& model,
                                                         const CovariatePath& z) {
    return SmoothSurvivalSampler(model, z);
}

} // namespace cpcox
