#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <stdexcept>
#include <vector>

#include "cpcox/data.hpp"
#include "cpcox/linalg.hpp"

namespace cpcox {

struct ProfileFitConfig {
    double zeta_lo = 0.0;
    double zeta_hi = 0.0;
    double newton_tol = 1e-8;
    int newton_max_iter = 50;
    int step_halving_max = 30;
    double coef_bound = 50.0; // |coefficient| beyond this marks the candidate non-converged
};

struct ProfilePoint {
    double zeta = 0.0;
    double loglik = -std::numeric_limits<double>::infinity();
    Vec alpha;
    Vec beta;
    bool converged = false;
};

struct FitResult {
    ChangePointParams theta;
    double loglik = -std::numeric_limits<double>::infinity();
    std::vector<ProfilePoint> profile;
    bool converged = false;
};

// Risk-set moments S_{n,k}(t;gamma) = (1/n) sum_i Y_i(t) Z_i(t)^{ox k} e^{gamma'Z_i(t)}.
struct RiskMoments {
    double s0 = 0.0;
    Vec s1;
    Mat s2;
};

inline RiskMoments risk_moments(const Dataset& data, double t, const Vec& gamma) {
    const std::size_t p = gamma.size();
    RiskMoments m;
    m.s1.assign(p, 0.0);
    m.s2 = Mat(p, p);
    std::size_t at_risk = 0;
    for (const Subject& s : data.subjects) {
        if (s.observed_time < t) continue;
        ++at_risk;
        const Vec& z = s.covariates.at(t);
        const double w = std::exp(dot(gamma, z));
        m.s0 += w;
        for (std::size_t a = 0; a < p; ++a) {
            m.s1[a] += w * z[a];
            for (std::size_t b = 0; b < p; ++b) m.s2(a, b) += w * z[a] * z[b];
        }
    }
    if (at_risk == 0) throw EmptyRiskSetError(t);
    const double inv_n = 1.0 / static_cast<double>(data.size());
    m.s0 *= inv_n;
    for (double& v : m.s1) v *= inv_n;
    for (double& v : m.s2.a) v *= inv_n;
    return m;
}

inline double s_n0(const Dataset& d, double t, const Vec& g) { return risk_moments(d, t, g).s0; }
inline Vec s_n1(const Dataset& d, double t, const Vec& g) { return risk_moments(d, t, g).s1; }
inline Mat s_n2(const Dataset& d, double t, const Vec& g) { return risk_moments(d, t, g).s2; }

namespace detail {

struct SideEval {
    double loglik = 0.0;
    Vec grad;
    Mat hess; // of the log partial likelihood (negative semidefinite)
};

struct NewtonResult {
    Vec gamma;
    double loglik = 0.0;
    bool converged = false;
};

// Partial-likelihood evaluation over a contiguous range of distinct event
// times. When every covariate path is constant and the number of distinct
// covariate vectors is small (always the case for the resampling loops),
// risk-set sums collapse to per-level at-risk counts and one exp() per
// level suffices per Newton iteration.
class PLEngine {
public:
    explicit PLEngine(const Dataset& data) : data_(&data), p_(data.dim()) {
        for (const Subject& s : data.subjects)
            if (s.event) {
                times_.push_back(s.observed_time);
            }
        std::sort(times_.begin(), times_.end());
        times_.erase(std::unique(times_.begin(), times_.end()), times_.end());

        count_.assign(times_.size(), 0.0);
        zsum_.assign(times_.size(), Vec(p_, 0.0));
        for (const Subject& s : data.subjects) {
            if (!s.event) continue;
            const std::size_t e = index_of(s.observed_time);
            count_[e] += 1.0;
            const Vec& z = s.covariates.at(s.observed_time);
            for (std::size_t a = 0; a < p_; ++a) zsum_[e][a] += z[a];
        }

        fast_ = build_levels();
    }

    std::size_t num_event_times() const { return times_.size(); }
    double event_time(std::size_t e) const { return times_[e]; }
    std::size_t dim() const { return p_; }

    // number of distinct event times <= zeta
    std::size_t split_index(double zeta) const {
        return static_cast<std::size_t>(
            std::upper_bound(times_.begin(), times_.end(), zeta) - times_.begin());
    }

    double loglik(std::size_t e0, std::size_t e1, const Vec& gamma) const {
        double ll = 0.0;
        if (fast_) {
            const std::size_t nl = levels_.size();
            std::vector<double> w(nl);
            for (std::size_t l = 0; l < nl; ++l) w[l] = std::exp(dot(gamma, levels_[l]));
            for (std::size_t e = e0; e < e1; ++e) {
                double s0 = 0.0;
                for (std::size_t l = 0; l < nl; ++l) s0 += at_risk_[e * nl + l] * w[l];
                ll += dot(gamma, zsum_[e]) - count_[e] * std::log(s0);
            }
        } else {
            for (std::size_t e = e0; e < e1; ++e) {
                double s0 = 0.0;
                const double t = times_[e];
                for (const Subject& s : data_->subjects)
                    if (s.observed_time >= t) s0 += std::exp(dot(gamma, s.covariates.at(t)));
                ll += dot(gamma, zsum_[e]) - count_[e] * std::log(s0);
            }
        }
        return ll;
    }

    SideEval eval(std::size_t e0, std::size_t e1, const Vec& gamma) const {
        SideEval out;
        out.grad.assign(p_, 0.0);
        out.hess = Mat(p_, p_);
        Vec s1(p_);
        Mat s2(p_, p_);
        if (fast_) {
            const std::size_t nl = levels_.size();
            std::vector<double> w(nl);
            for (std::size_t l = 0; l < nl; ++l) w[l] = std::exp(dot(gamma, levels_[l]));
            for (std::size_t e = e0; e < e1; ++e) {
                double s0 = 0.0;
                std::fill(s1.begin(), s1.end(), 0.0);
                std::fill(s2.a.begin(), s2.a.end(), 0.0);
                for (std::size_t l = 0; l < nl; ++l) {
                    const double yw = at_risk_[e * nl + l] * w[l];
                    if (yw == 0.0) continue;
                    s0 += yw;
                    const Vec& z = levels_[l];
                    for (std::size_t a = 0; a < p_; ++a) {
                        s1[a] += yw * z[a];
                        for (std::size_t b = a; b < p_; ++b) s2(a, b) += yw * z[a] * z[b];
                    }
                }
                accumulate(out, e, gamma, s0, s1, s2);
            }
        } else {
            for (std::size_t e = e0; e < e1; ++e) {
                const double t = times_[e];
                double s0 = 0.0;
                std::fill(s1.begin(), s1.end(), 0.0);
                std::fill(s2.a.begin(), s2.a.end(), 0.0);
                for (const Subject& s : data_->subjects) {
                    if (s.observed_time < t) continue;
                    const Vec& z = s.covariates.at(t);
                    const double w = std::exp(dot(gamma, z));
                    s0 += w;
                    for (std::size_t a = 0; a < p_; ++a) {
                        s1[a] += w * z[a];
                        for (std::size_t b = a; b < p_; ++b) s2(a, b) += w * z[a] * z[b];
                    }
                }
                accumulate(out, e, gamma, s0, s1, s2);
            }
        }
        for (std::size_t a = 0; a < p_; ++a)
            for (std::size_t b = 0; b < a; ++b) out.hess(a, b) = out.hess(b, a);
        return out;
    }

    // Maximize the partial likelihood over the event range by Newton with
    // step halving; the objective is concave in gamma.
    NewtonResult newton(std::size_t e0, std::size_t e1, Vec gamma, const ProfileFitConfig& cfg) const {
        NewtonResult res;
        if (e0 >= e1) {
            res.gamma = std::move(gamma);
            res.loglik = 0.0;
            res.converged = true;
            return res;
        }
        SideEval ev = eval(e0, e1, gamma);
        if (!std::isfinite(ev.loglik)) return res;
        for (int iter = 0; iter <= cfg.newton_max_iter; ++iter) {
            if (max_abs(ev.grad) < cfg.newton_tol) {
                res.gamma = std::move(gamma);
                res.loglik = ev.loglik;
                res.converged = true;
                return res;
            }
            if (iter == cfg.newton_max_iter) break;
            Mat neg_h = ev.hess;
            for (double& v : neg_h.a) v = -v;
            Mat chol = neg_h;
            if (!cholesky(chol)) {
                double bump = 0.0;
                for (std::size_t a = 0; a < p_; ++a) bump = std::max(bump, neg_h(a, a));
                bump = bump * 1e-8 + 1e-12;
                for (std::size_t a = 0; a < p_; ++a) neg_h(a, a) += bump;
                chol = neg_h;
                if (!cholesky(chol)) return res;
            }
            const Vec step = chol_solve(chol, ev.grad);
            double scale = 1.0;
            Vec trial(p_);
            double ll_trial = -std::numeric_limits<double>::infinity();
            bool ok = false;
            for (int h = 0; h <= cfg.step_halving_max; ++h) {
                for (std::size_t a = 0; a < p_; ++a) trial[a] = gamma[a] + scale * step[a];
                ll_trial = loglik(e0, e1, trial);
                if (std::isfinite(ll_trial) && ll_trial >= ev.loglik - 1e-12) {
                    ok = true;
                    break;
                }
                scale *= 0.5;
            }
            if (!ok) return res;
            gamma = trial;
            for (double g : gamma)
                if (std::fabs(g) > cfg.coef_bound) return res;
            ev = eval(e0, e1, gamma);
            if (!std::isfinite(ev.loglik)) return res;
        }
        return res;
    }

private:
    std::size_t index_of(double t) const {
        return static_cast<std::size_t>(
            std::lower_bound(times_.begin(), times_.end(), t) - times_.begin());
    }

    void accumulate(SideEval& out, std::size_t e, const Vec& gamma,
                    double s0, const Vec& s1, const Mat& s2) const {
        out.loglik += dot(gamma, zsum_[e]) - count_[e] * std::log(s0);
        for (std::size_t a = 0; a < p_; ++a) {
            const double zbar_a = s1[a] / s0;
            out.grad[a] += zsum_[e][a] - count_[e] * zbar_a;
            for (std::size_t b = a; b < p_; ++b)
                out.hess(a, b) -= count_[e] * (s2(a, b) / s0 - zbar_a * (s1[b] / s0));
        }
    }

    bool build_levels() {
        constexpr std::size_t kMaxLevels = 64;
        std::map<Vec, std::size_t> seen;
        std::vector<std::size_t> subj_level(data_->size());
        for (std::size_t i = 0; i < data_->size(); ++i) {
            const CovariatePath& path = data_->subjects[i].covariates;
            if (!path.is_constant()) return false;
            const Vec& z = path.at(0.0);
            auto [it, inserted] = seen.emplace(z, levels_.size());
            if (inserted) {
                levels_.push_back(z);
                if (levels_.size() > kMaxLevels) return false;
            }
            subj_level[i] = it->second;
        }
        const std::size_t nl = levels_.size();
        at_risk_.assign(times_.size() * nl, 0.0);
        // at_risk_[e][l] = #{subjects of level l with observed_time >= times_[e]}
        for (std::size_t i = 0; i < data_->size(); ++i) {
            const double t = data_->subjects[i].observed_time;
            const std::size_t upto = static_cast<std::size_t>(
                std::upper_bound(times_.begin(), times_.end(), t) - times_.begin());
            for (std::size_t e = 0; e < upto; ++e) at_risk_[e * nl + subj_level[i]] += 1.0;
        }
        return true;
    }

    const Dataset* data_;
    std::size_t p_;
    std::vector<double> times_;  // distinct event times, ascending
    std::vector<double> count_;  // events per distinct time
    std::vector<Vec> zsum_;      // sum of event covariates per distinct time
    bool fast_ = false;
    std::vector<Vec> levels_;
    std::vector<double> at_risk_;
};

} // namespace detail

inline double log_partial_likelihood(const Dataset& data, const ChangePointParams& theta) {
    if (count_events(data) == 0) throw NoEventsError();
    detail::PLEngine engine(data);
    const std::size_t k = engine.split_index(theta.zeta);
    return engine.loglik(0, k, theta.alpha) + engine.loglik(k, engine.num_event_times(), theta.beta);
}

// Gradient and Hessian in (alpha, beta) at fixed zeta. The Hessian is
// block diagonal: events at or before zeta only involve alpha, the rest
// only beta.
inline std::pair<Vec, Mat> score_and_hessian(const Dataset& data, const ChangePointParams& theta) {
    if (count_events(data) == 0) throw NoEventsError();
    detail::PLEngine engine(data);
    const std::size_t p = engine.dim();
    const std::size_t k = engine.split_index(theta.zeta);
    const detail::SideEval ea = engine.eval(0, k, theta.alpha);
    const detail::SideEval eb = engine.eval(k, engine.num_event_times(), theta.beta);
    Vec grad(2 * p, 0.0);
    Mat hess(2 * p, 2 * p);
    for (std::size_t a = 0; a < p; ++a) {
        grad[a] = ea.grad[a];
        grad[p + a] = eb.grad[a];
        for (std::size_t b = 0; b < p; ++b) {
            hess(a, b) = ea.hess(a, b);
            hess(p + a, p + b) = eb.hess(a, b);
        }
    }
    return {std::move(grad), std::move(hess)};
}

// Profile MPLE: the log partial likelihood is a right-continuous step
// function of zeta, so maximizing over {zeta_lo} + event times inside the
// window is exhaustive. Ties go to the smallest candidate.
inline FitResult fit_mple(const Dataset& data, const ProfileFitConfig& cfg) {
    if (!(cfg.zeta_lo < cfg.zeta_hi)) throw std::invalid_argument("fit_mple: zeta window empty");
    if (count_events(data) == 0) throw NoEventsError();

    detail::PLEngine engine(data);
    const std::size_t E = engine.num_event_times();
    const std::size_t p = engine.dim();

    // reference fit with alpha = beta; used as warm start and as the
    // frozen value for one-sided (unidentified) candidates
    detail::NewtonResult std_fit = engine.newton(0, E, Vec(p, 0.0), cfg);
    const Vec gamma_std = std_fit.converged ? std_fit.gamma : Vec(p, 0.0);

    std::vector<double> candidates{cfg.zeta_lo};
    for (std::size_t e = 0; e < E; ++e) {
        const double t = engine.event_time(e);
        if (t > cfg.zeta_lo && t <= cfg.zeta_hi) candidates.push_back(t);
    }

    FitResult result;
    result.profile.reserve(candidates.size());
    Vec warm_a = gamma_std, warm_b = gamma_std;
    std::size_t best = candidates.size();
    double best_ll = -std::numeric_limits<double>::infinity();

    for (double zeta : candidates) {
        const std::size_t k = engine.split_index(zeta);
        ProfilePoint pt;
        pt.zeta = zeta;
        bool ok = true;
        double ll = 0.0;
        if (k == 0) {
            pt.alpha = gamma_std;
        } else {
            detail::NewtonResult r = engine.newton(0, k, warm_a, cfg);
            if (r.converged) {
                pt.alpha = r.gamma;
                warm_a = r.gamma;
                ll += r.loglik;
            } else {
                pt.alpha = warm_a;
                ok = false;
            }
        }
        if (k == E) {
            pt.beta = gamma_std;
        } else if (ok) {
            detail::NewtonResult r = engine.newton(k, E, warm_b, cfg);
            if (r.converged) {
                pt.beta = r.gamma;
                warm_b = r.gamma;
                ll += r.loglik;
            } else {
                pt.beta = warm_b;
                ok = false;
            }
        } else {
            pt.beta = warm_b;
        }
        pt.converged = ok;
        if (ok) {
            pt.loglik = ll;
            if (ll > best_ll) {
                best_ll = ll;
                best = result.profile.size();
            }
        }
        result.profile.push_back(std::move(pt));
    }

    if (best == candidates.size()) {
        // every candidate failed; report the first as a non-converged fit
        result.theta = {result.profile.front().alpha, result.profile.front().beta,
                        result.profile.front().zeta};
        result.converged = false;
        return result;
    }
    const ProfilePoint& win = result.profile[best];
    result.theta = {win.alpha, win.beta, win.zeta};
    result.loglik = win.loglik;
    result.converged = true;
    return result;
}

} // namespace cpcox
