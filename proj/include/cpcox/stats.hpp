#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

namespace cpcox {

// p-th empirical quantile with linear interpolation between order
// statistics (R type 7). Input must be sorted ascending.
inline double quantile_sorted(const std::vector<double>& x, double p) {
    if (x.empty()) throw std::invalid_argument("quantile of empty sample");
    if (p <= 0.0) return x.front();
    if (p >= 1.0) return x.back();
    const double h = p * static_cast<double>(x.size() - 1);
    const std::size_t i = static_cast<std::size_t>(h);
    const double frac = h - static_cast<double>(i);
    if (i + 1 >= x.size()) return x.back();
    return x[i] * (1.0 - frac) + x[i + 1] * frac;
}

inline double mean(const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

inline double sample_variance(const std::vector<double>& x) {
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return ss / static_cast<double>(x.size() - 1);
}

inline double median_sorted(const std::vector<double>& x) { return quantile_sorted(x, 0.5); }

// Wasserstein-1 distance between two empirical distributions, computed as
// the area between the empirical CDFs. Inputs must be sorted ascending.
inline double wasserstein1_sorted(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("wasserstein1 of empty sample");
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    std::size_t ia = 0, ib = 0;
    double dist = 0.0;
    double prev = std::min(a.front(), b.front());
    while (ia < a.size() || ib < b.size()) {
        const double xa = ia < a.size() ? a[ia] : std::numeric_limits<double>::infinity();
        const double xb = ib < b.size() ? b[ib] : std::numeric_limits<double>::infinity();
        const double x = std::min(xa, xb);
        dist += std::fabs(static_cast<double>(ia) / na - static_cast<double>(ib) / nb) * (x - prev);
        prev = x;
        while (ia < a.size() && a[ia] == x) ++ia;
        while (ib < b.size() && b[ib] == x) ++ib;
    }
    return dist;
}

// One-sample Kolmogorov-Smirnov statistic against a CDF functor; the
// sample must be sorted ascending.
template <typename Cdf>
double ks_statistic_sorted(const std::vector<double>& x, Cdf cdf) {
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = cdf(x[i]);
        d = std::max(d, std::fabs(static_cast<double>(i + 1) / n - f));
        d = std::max(d, std::fabs(f - static_cast<double>(i) / n));
    }
    return d;
}

} // namespace cpcox
