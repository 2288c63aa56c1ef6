#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace cpcox {

using Vec = std::vector<double>;

// Small dense row-major matrix. Dimensions here are the covariate
// dimension p (tiny), so no BLAS is warranted.
struct Mat {
    std::size_t rows = 0, cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

    static Mat identity(std::size_t n) {
        Mat m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
};

inline double dot(const Vec& x, const Vec& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

inline void axpy(double a, const Vec& x, Vec& y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline double max_abs(const Vec& x) {
    double m = 0.0;
    for (double v : x) m = std::max(m, std::fabs(v));
    return m;
}

// In-place lower Cholesky of an SPD matrix; returns false on failure.
inline bool cholesky(Mat& m) {
    const std::size_t n = m.rows;
    for (std::size_t j = 0; j < n; ++j) {
        double d = m(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= m(j, k) * m(j, k);
        if (!(d > 0.0) || !std::isfinite(d)) return false;
        const double l = std::sqrt(d);
        m(j, j) = l;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = m(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= m(i, k) * m(j, k);
            m(i, j) = s / l;
        }
        for (std::size_t k = j + 1; k < n; ++k) m(j, k) = 0.0;
    }
    return true;
}

inline Vec chol_solve(const Mat& L, Vec b) {
    const std::size_t n = L.rows;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < i; ++k) b[i] -= L(i, k) * b[k];
        b[i] /= L(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
        for (std::size_t k = i + 1; k < n; ++k) b[i] -= L(k, i) * b[k];
        b[i] /= L(i, i);
    }
    return b;
}

// Solve A x = b for SPD A; throws if A is not positive definite.
inline Vec solve_spd(Mat A, const Vec& b) {
    if (!cholesky(A)) throw std::runtime_error("solve_spd: matrix not positive definite");
    return chol_solve(A, b);
}

inline Mat invert_spd(Mat A) {
    const std::size_t n = A.rows;
    if (!cholesky(A)) throw std::runtime_error("invert_spd: matrix not positive definite");
    Mat inv(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        Vec e(n, 0.0);
        e[j] = 1.0;
        Vec x = chol_solve(A, e);
        for (std::size_t i = 0; i < n; ++i) inv(i, j) = x[i];
    }
    return inv;
}

// x ~ N(0, A^{-1}) from iid standard normals g: solve L' x = g with A = L L'.
inline Vec sample_gaussian_inv(const Mat& chol_lower, Vec g) {
    const std::size_t n = chol_lower.rows;
    for (std::size_t i = n; i-- > 0;) {
        for (std::size_t k = i + 1; k < n; ++k) g[i] -= chol_lower(k, i) * g[k];
        g[i] /= chol_lower(i, i);
    }
    return g;
}

} // namespace cpcox
