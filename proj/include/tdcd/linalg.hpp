#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "tdcd/errors.hpp"
#include "tdcd/matrix.hpp"

namespace tdcd {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm_sq(const std::vector<double>& a) { return dot(a, a); }

inline double l2_norm(const std::vector<double>& a) { return std::sqrt(norm_sq(a)); }

// Gram matrix scaled by `scale`: out = scale * X^T X  (cols x cols).
inline Matrix scaled_gram(const Matrix& x, double scale) {
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    Matrix g(d, d);
    for (std::size_t i = 0; i < n; ++i) {
        const double* xi = x.row(i);
        for (std::size_t a = 0; a < d; ++a) {
            const double xa = xi[a];
            for (std::size_t b = 0; b < d; ++b) g(a, b) += xa * xi[b];
        }
    }
    for (double& v : g.data()) v *= scale;
    return g;
}

// Largest eigenvalue of a symmetric PSD matrix by power iteration. The start
// vector is fixed (ones plus a small ramp) so the result is deterministic.
inline double lambda_max(const Matrix& a, double tol = 1e-12, int max_iters = 20000) {
    const std::size_t d = a.rows();
    if (d == 0 || a.cols() != d) throw ConfigError("lambda_max: matrix must be square");
    std::vector<double> v(d), av(d);
    for (std::size_t i = 0; i < d; ++i) v[i] = 1.0 + 1e-3 * static_cast<double>(i);
    double nv = l2_norm(v);
    for (double& x : v) x /= nv;

    double lambda = 0.0;
    for (int it = 0; it < max_iters; ++it) {
        for (std::size_t i = 0; i < d; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += a(i, j) * v[j];
            av[i] = s;
        }
        const double next = dot(v, av);
        const double na = l2_norm(av);
        if (na == 0.0) return 0.0; // zero matrix (or v in the null space of a PSD a)
        for (std::size_t i = 0; i < d; ++i) v[i] = av[i] / na;
        if (std::abs(next - lambda) <= tol * std::max(1.0, std::abs(next))) return next;
        lambda = next;
    }
    return lambda;
}

// Solve a x = b in place by Gaussian elimination with partial pivoting.
inline std::vector<double> solve_linear(Matrix a, std::vector<double> b) {
    const std::size_t d = a.rows();
    if (a.cols() != d || b.size() != d) throw ConfigError("solve_linear: shape mismatch");
    for (std::size_t col = 0; col < d; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < d; ++r)
            if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
        if (std::abs(a(pivot, col)) < 1e-300)
            throw NumericError("solve_linear: singular matrix");
        if (pivot != col) {
            for (std::size_t c = 0; c < d; ++c) std::swap(a(col, c), a(pivot, c));
            std::swap(b[col], b[pivot]);
        }
        const double inv = 1.0 / a(col, col);
        for (std::size_t r = col + 1; r < d; ++r) {
            const double f = a(r, col) * inv;
            if (f == 0.0) continue;
            for (std::size_t c = col; c < d; ++c) a(r, c) -= f * a(col, c);
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(d);
    for (std::size_t i = d; i-- > 0;) {
        double s = b[i];
        for (std::size_t j = i + 1; j < d; ++j) s -= a(i, j) * x[j];
        x[i] = s / a(i, i);
    }
    return x;
}

} // namespace tdcd
