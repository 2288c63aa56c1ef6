#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "cpcox/data.hpp"
#include "cpcox/likelihood.hpp"

// Independent reference implementations used as test oracles. These stay
// deliberately naive: direct sums over the definitions, no shared code with
// the engine they check.
namespace oracle {

using cpcox::ChangePointParams;
using cpcox::Dataset;
using cpcox::Subject;
using cpcox::Vec;

inline double naive_log_pl(const Dataset& data, const Vec& alpha, const Vec& beta, double zeta) {
    double ll = 0.0;
    for (const Subject& si : data.subjects) {
        if (!si.event) continue;
        const double t = si.observed_time;
        const Vec& coef = t <= zeta ? alpha : beta;
        double denom = 0.0;
        for (const Subject& sj : data.subjects) {
            if (sj.observed_time < t) continue;
            denom += std::exp(cpcox::dot(coef, sj.covariates.at(t)));
        }
        ll += cpcox::dot(coef, si.covariates.at(t)) - std::log(denom);
    }
    return ll;
}

// Maximize the naive log PL over one side's coefficient vector by
// coordinate-wise grid refinement inside the box [-bound, bound]^p. The
// other side's coefficient is held at zero; its contribution is a constant
// that does not move the maximizer.
inline Vec grid_maximize_side(const Dataset& data, double zeta, bool alpha_side, std::size_t p,
                              double bound = 50.0) {
    const Vec zero(p, 0.0);
    auto obj = [&](const Vec& g) {
        return alpha_side ? naive_log_pl(data, g, zero, zeta) : naive_log_pl(data, zero, g, zeta);
    };
    Vec best(p, 0.0);
    double best_v = obj(best);
    double width = bound;
    for (int round = 0; round < 45; ++round) {
        for (std::size_t c = 0; c < p; ++c) {
            Vec trial = best;
            for (int k = -8; k <= 8; ++k) {
                trial[c] = best[c] + width * static_cast<double>(k) / 8.0;
                if (std::fabs(trial[c]) > bound) continue;
                const double v = obj(trial);
                if (v > best_v) {
                    best_v = v;
                    best = trial;
                }
            }
        }
        width *= 0.5;
    }
    return best;
}

struct GridFit {
    double zeta = 0.0;
    double loglik = 0.0;
    Vec alpha, beta;
};

// Brute-force profile fit: same candidate grid as the estimator, per-side
// grid refinement, smallest argmax by ascending scan with strict improvement.
inline GridFit grid_profile_fit(const Dataset& data, double zeta_lo, double zeta_hi) {
    const std::size_t p = data.dim();
    std::vector<double> candidates{zeta_lo};
    for (double t : cpcox::event_times(data))
        if (t > zeta_lo && t <= zeta_hi) candidates.push_back(t);
    GridFit best;
    best.loglik = -std::numeric_limits<double>::infinity();
    for (double zeta : candidates) {
        const Vec a = grid_maximize_side(data, zeta, true, p);
        const Vec b = grid_maximize_side(data, zeta, false, p);
        const double ll = naive_log_pl(data, a, b, zeta);
        if (ll > best.loglik) best = {zeta, ll, a, b};
    }
    return best;
}

// Breslow jumps by a direct per-event loop.
inline std::pair<std::vector<double>, std::vector<double>> naive_breslow(
    const Dataset& data, const ChangePointParams& theta) {
    std::vector<double> times = cpcox::event_times(data);
    std::vector<double> jumps;
    for (double t : times) {
        double d = 0.0, denom = 0.0;
        for (const Subject& s : data.subjects) {
            if (s.event && s.observed_time == t) d += 1.0;
            if (s.observed_time >= t)
                denom += std::exp(cpcox::dot(theta.coef_at(t), s.covariates.at(t)));
        }
        jumps.push_back(d / denom);
    }
    return {times, jumps};
}

// Textbook product-limit estimator over explicit time/flag pairs.
inline double product_limit_at(std::vector<std::pair<double, bool>> obs, double t) {
    std::sort(obs.begin(), obs.end());
    double surv = 1.0;
    std::size_t i = 0, at_risk = obs.size();
    while (i < obs.size()) {
        const double u = obs[i].first;
        if (u > t) break;
        std::size_t d = 0, total = 0;
        while (i < obs.size() && obs[i].first == u) {
            d += obs[i].second ? 1 : 0;
            ++total;
            ++i;
        }
        surv *= 1.0 - static_cast<double>(d) / static_cast<double>(at_risk);
        at_risk -= total;
    }
    return surv;
}

} // namespace oracle
