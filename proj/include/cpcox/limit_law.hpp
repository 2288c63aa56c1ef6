#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "cpcox/linalg.hpp"
#include "cpcox/rng.hpp"
#include "cpcox/simulate.hpp"

namespace cpcox {

struct WindowExhaustedError : std::runtime_error {
    WindowExhaustedError()
        : std::runtime_error("limit-law window doubled 10 times without an interior argmax") {}
};

struct DiscreteLaw {
    std::vector<Vec> atoms;
    std::vector<double> probs;

    Vec mean() const {
        Vec m(atoms.empty() ? 0 : atoms.front().size(), 0.0);
        for (std::size_t i = 0; i < atoms.size(); ++i) axpy(probs[i], atoms[i], m);
        return m;
    }
};

// Parameters of the limiting process U(h). The h_zeta component is a
// two-sided compound Poisson walk: left jumps arrive at rate gamma_minus
// with increments log_r_left + delta'v-, right jumps at rate gamma_plus
// with increments log_r_right - delta'v+.
struct LimitLawConfig {
    double gamma_minus = 0.0;
    double gamma_plus = 0.0;
    double log_r_left = 0.0;  // log r(zeta0; alpha0, beta0)
    double log_r_right = 0.0; // log r(zeta0; beta0, alpha0)
    DiscreteLaw jump_minus;
    DiscreteLaw jump_plus;
    Vec delta; // beta0 - alpha0
    Mat info_alpha;
    Mat info_beta;
    double window_halfwidth = 0.0;

    double drift_left() const { return gamma_minus * (log_r_left + dot(delta, jump_minus.mean())); }
    double drift_right() const { return gamma_plus * (log_r_right - dot(delta, jump_plus.mean())); }

    void validate_for_sampling() const {
        if (!(gamma_minus > 0.0) || !(gamma_plus > 0.0))
            throw std::invalid_argument("limit law: jump intensities must be positive");
        if (!(drift_left() < 0.0) || !(drift_right() < 0.0))
            throw std::invalid_argument("limit law: one-sided drifts must be negative");
        Mat la = info_alpha, lb = info_beta;
        if (!cholesky(la) || !cholesky(lb))
            throw std::invalid_argument("limit law: information matrices must be positive definite");
    }
};

struct LimitDraw {
    Vec phi_alpha;
    Vec phi_beta;
    double phi_zeta = 0.0;
};

namespace detail {

struct Jump {
    double pos;       // |h| of the arrival, ascending
    double increment; // process increment carried by the jump
};

// Candidate scan for the smallest argmax of the two-sided step process:
// the supremum is attained among the jump locations and the origin; the
// scan is in ascending h with strict improvement, so ties resolve to the
// leftmost candidate.
inline double sargmax_step(const std::vector<Jump>& left, const std::vector<Jump>& right) {
    double best_h = 0.0;
    double best_v = -std::numeric_limits<double>::infinity();
    if (!left.empty()) {
        std::vector<double> cum(left.size());
        double acc = 0.0;
        for (std::size_t k = 0; k < left.size(); ++k) {
            acc += left[k].increment;
            cum[k] = acc;
        }
        for (std::size_t k = left.size(); k-- > 0;) {
            // value of U2 at h = -pos_k includes jumps 1..k
            if (cum[k] > best_v) {
                best_v = cum[k];
                best_h = -left[k].pos;
            }
        }
    }
    if (0.0 > best_v) {
        best_v = 0.0;
        best_h = 0.0;
    }
    double acc = 0.0;
    for (const Jump& j : right) {
        acc += j.increment;
        if (acc > best_v) {
            best_v = acc;
            best_h = j.pos;
        }
    }
    return best_h;
}

inline std::vector<Jump> sample_side(double intensity, double window, double base_increment,
                                     const DiscreteLaw& law, double law_sign, const Vec& delta,
                                     Rng& rng) {
    std::vector<Jump> jumps;
    double t = 0.0;
    for (;;) {
        t += rng.exponential(intensity);
        if (t > window) break;
        const Vec& v = law.atoms[rng.discrete(law.probs)];
        jumps.push_back({t, base_increment + law_sign * dot(delta, v)});
    }
    return jumps;
}

} // namespace detail

// One draw of phi = sargmax U. The Gaussian components use the Lemma
// closed forms; phi_zeta is simulated on [-H, H], doubling H whenever the
// argmax lands within H/2 of the boundary.
inline LimitDraw sample_limit(const LimitLawConfig& cfg, Rng& rng) {
    cfg.validate_for_sampling();
    LimitDraw out;
    const std::size_t p = cfg.delta.size();
    Mat chol_a = cfg.info_alpha, chol_b = cfg.info_beta;
    cholesky(chol_a);
    cholesky(chol_b);
    Vec g(p);
    for (std::size_t a = 0; a < p; ++a) g[a] = rng.normal();
    out.phi_alpha = sample_gaussian_inv(chol_a, g);
    for (std::size_t a = 0; a < p; ++a) g[a] = rng.normal();
    out.phi_beta = sample_gaussian_inv(chol_b, g);

    double window = cfg.window_halfwidth;
    for (int attempt = 0; attempt < 10; ++attempt) {
        const auto left =
            detail::sample_side(cfg.gamma_minus, window, cfg.log_r_left, cfg.jump_minus, 1.0,
                                cfg.delta, rng);
        const auto right =
            detail::sample_side(cfg.gamma_plus, window, cfg.log_r_right, cfg.jump_plus, -1.0,
                                cfg.delta, rng);
        const double h = detail::sargmax_step(left, right);
        if (std::fabs(h) <= 0.5 * window) {
            out.phi_zeta = h;
            return out;
        }
        window *= 2.0;
    }
    throw WindowExhaustedError();
}

// Closed-form limit parameters for a simulation scenario: covariates are
// discrete, T is piecewise exponential and C capped exponential, so every
// s_k(t;gamma) is an exact finite sum; the information integrals use the
// trapezoid rule with nodes forced at zeta0 and the baseline breakpoints.
inline LimitLawConfig derive_limit_config(const ScenarioConfig& cfg, double quadrature_step = 0.0) {
    cfg.validate();
    if (cfg.covariate_levels.empty())
        throw std::invalid_argument("limit law derivation needs a discrete covariate law");
    if (quadrature_step <= 0.0) quadrature_step = cfg.tau / 8192.0;
    const std::size_t p = cfg.dim();
    const std::size_t L = cfg.covariate_levels.size();

    auto surv_obs = [&](double t, std::size_t l) {
        // P(T-tilde >= t | level l) = S_T(t|z) S_C(t) on [0, tau]
        return survival(cfg, cfg.covariate_levels[l], t) * std::exp(-cfg.censoring_rate * t);
    };
    auto s_k = [&](double t, const Vec& gamma, int k) {
        double s0 = 0.0;
        Vec s1(p, 0.0);
        Mat s2(p, p);
        for (std::size_t l = 0; l < L; ++l) {
            const Vec& z = cfg.covariate_levels[l];
            const double w = cfg.covariate_probs[l] * std::exp(dot(gamma, z)) * surv_obs(t, l);
            s0 += w;
            if (k >= 1)
                for (std::size_t a = 0; a < p; ++a) s1[a] += w * z[a];
            if (k >= 2)
                for (std::size_t a = 0; a < p; ++a)
                    for (std::size_t b = 0; b < p; ++b) s2(a, b) += w * z[a] * z[b];
        }
        return std::tuple<double, Vec, Mat>{s0, std::move(s1), std::move(s2)};
    };
    auto q_weighted = [&](double t, const Vec& gamma) {
        // Q(t;gamma) s0(t;gamma) lambda0(t)
        auto [s0, s1, s2] = s_k(t, gamma, 2);
        Mat q(p, p);
        for (std::size_t a = 0; a < p; ++a)
            for (std::size_t b = 0; b < p; ++b)
                q(a, b) = (s2(a, b) / s0 - (s1[a] / s0) * (s1[b] / s0)) * s0 * cfg.baseline.value(t);
        return q;
    };
    auto integrate = [&](double lo, double hi, const Vec& gamma) {
        std::vector<double> nodes;
        const std::size_t m = std::max<std::size_t>(
            2, static_cast<std::size_t>(std::ceil((hi - lo) / quadrature_step)) + 1);
        for (std::size_t i = 0; i < m; ++i)
            nodes.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(m - 1));
        for (double b : cfg.baseline.breaks)
            if (b > lo && b < hi) nodes.push_back(b);
        std::sort(nodes.begin(), nodes.end());
        nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
        Mat acc(p, p);
        Mat prev = q_weighted(nodes.front(), gamma);
        for (std::size_t i = 1; i < nodes.size(); ++i) {
            Mat cur = q_weighted(nodes[i], gamma);
            const double w = 0.5 * (nodes[i] - nodes[i - 1]);
            for (std::size_t k = 0; k < acc.a.size(); ++k) acc.a[k] += w * (prev.a[k] + cur.a[k]);
            prev = std::move(cur);
        }
        return acc;
    };

    LimitLawConfig out;
    const double lam0 = cfg.baseline.value(cfg.zeta0);
    const double s0_a = std::get<0>(s_k(cfg.zeta0, cfg.alpha0, 0));
    const double s0_b = std::get<0>(s_k(cfg.zeta0, cfg.beta0, 0));
    out.gamma_minus = s0_a * lam0;
    out.gamma_plus = s0_b * lam0;
    out.log_r_left = std::log(s0_a / s0_b);
    out.log_r_right = std::log(s0_b / s0_a);
    out.delta.assign(p, 0.0);
    for (std::size_t a = 0; a < p; ++a) out.delta[a] = cfg.beta0[a] - cfg.alpha0[a];

    auto tilted = [&](const Vec& gamma, double s0) {
        DiscreteLaw law;
        for (std::size_t l = 0; l < L; ++l) {
            law.atoms.push_back(cfg.covariate_levels[l]);
            law.probs.push_back(cfg.covariate_probs[l] *
                                std::exp(dot(gamma, cfg.covariate_levels[l])) *
                                surv_obs(cfg.zeta0, l) / s0);
        }
        return law;
    };
    out.jump_minus = tilted(cfg.alpha0, s0_a);
    out.jump_plus = tilted(cfg.beta0, s0_b);

    out.info_alpha = integrate(0.0, cfg.zeta0, cfg.alpha0);
    out.info_beta = integrate(cfg.zeta0, cfg.tau, cfg.beta0);

    const double dl = out.drift_left(), dr = out.drift_right();
    const double worst = std::min(std::fabs(dl), std::fabs(dr));
    out.window_halfwidth = worst > 0.0 ? 20.0 / worst : 1.0;
    return out;
}

} // namespace cpcox
