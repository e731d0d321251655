#pragma once

// Test-only reference implementations. Everything here is deliberately
// independent of the library's production code paths so the two can be
// checked against each other.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "comp/matrix.hpp"
#include "comp/rng.hpp"

namespace oracles {

/// Naive triple-loop product.
inline comp::Matrix naive_matmul(const comp::Matrix& a, const comp::Matrix& b) {
    comp::Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    return c;
}

/// Welford's online variance, population form.
inline double welford_variance(const comp::Vector& v) {
    double mean = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < v.len(); ++i) {
        const double delta = v[i] - mean;
        mean += delta / static_cast<double>(i + 1);
        m2 += delta * (v[i] - mean);
    }
    return v.len() == 0 ? 0.0 : m2 / static_cast<double>(v.len());
}

struct JacobiResult {
    std::vector<double> values;  // ascending
    comp::Matrix vectors;        // column k pairs with values[k]
};

/// Cyclic Jacobi eigensolver for symmetric matrices. Test oracle only.
inline JacobiResult jacobi_eigensolve(const comp::Matrix& m) {
    const std::size_t n = m.rows();
    comp::Matrix a = m;
    comp::Matrix v = comp::Matrix::identity(n);
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) norm += a(i, j) * a(i, j);
    norm = std::sqrt(norm);

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
        if (std::sqrt(2.0 * off) <= 1e-14 * std::max(norm, 1e-300)) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });
    JacobiResult r;
    r.values.resize(n);
    r.vectors = comp::Matrix(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        r.values[k] = a(order[k], order[k]);
        for (std::size_t i = 0; i < n; ++i) r.vectors(i, k) = v(i, order[k]);
    }
    return r;
}

inline comp::Matrix random_matrix(comp::Rng& rng, std::size_t rows, std::size_t cols,
                                  double scale = 1.0) {
    comp::Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) m(i, j) = scale * rng.gaussian();
    return m;
}

inline comp::Vector random_vector(comp::Rng& rng, std::size_t len, double scale = 1.0) {
    comp::Vector v(len);
    for (std::size_t i = 0; i < len; ++i) v[i] = scale * rng.gaussian();
    return v;
}

/// Random orthogonal matrix by Gram-Schmidt on a Gaussian matrix.
inline comp::Matrix random_orthogonal(comp::Rng& rng, std::size_t n) {
    comp::Matrix q = random_matrix(rng, n, n);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < j; ++k) {
            double d = 0.0;
            for (std::size_t i = 0; i < n; ++i) d += q(i, j) * q(i, k);
            for (std::size_t i = 0; i < n; ++i) q(i, j) -= d * q(i, k);
        }
        double nn = 0.0;
        for (std::size_t i = 0; i < n; ++i) nn += q(i, j) * q(i, j);
        nn = std::sqrt(nn);
        for (std::size_t i = 0; i < n; ++i) q(i, j) /= (nn > 0 ? nn : 1.0);
    }
    return q;
}

/// SPD matrix Q D Q^T with the given eigenvalues.
inline comp::Matrix random_spd(comp::Rng& rng, const std::vector<double>& eigenvalues) {
    const std::size_t n = eigenvalues.size();
    comp::Matrix q = random_orthogonal(rng, n);
    comp::Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) s += q(i, k) * eigenvalues[k] * q(j, k);
            m(i, j) = s;
        }
    // Exact numerical symmetry keeps factorization preconditions out of the way.
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) m(j, i) = m(i, j);
    return m;
}

/// Log-uniform eigenvalues in [lo, hi].
inline std::vector<double> log_uniform_eigs(comp::Rng& rng, std::size_t n, double lo, double hi) {
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i)
        d[i] = std::exp(std::log(lo) + rng.uniform() * (std::log(hi) - std::log(lo)));
    std::sort(d.begin(), d.end());
    return d;
}

/// Normal matrix Diag(mask o x) W^T W Diag(mask o x) + eps I by naive products.
inline comp::Matrix normal_matrix_oracle(const comp::Matrix& w, const comp::Vector& x_mean,
                                         const comp::Vector& mask, double eps) {
    const std::size_t q = w.cols();
    comp::Matrix a(w.rows(), q);
    for (std::size_t i = 0; i < w.rows(); ++i)
        for (std::size_t j = 0; j < q; ++j) a(i, j) = w(i, j) * mask[j] * x_mean[j];
    comp::Matrix at(q, w.rows());
    for (std::size_t i = 0; i < w.rows(); ++i)
        for (std::size_t j = 0; j < q; ++j) at(j, i) = a(i, j);
    comp::Matrix m = naive_matmul(at, a);
    for (std::size_t j = 0; j < q; ++j) m(j, j) += eps;
    return m;
}

/// kappa through the Jacobi eigensolver: exact eigenvalue route.
inline double kappa_oracle(const comp::Matrix& w, const comp::Vector& x_mean,
                           const comp::Vector& mask, double eps) {
    auto jac = jacobi_eigensolve(normal_matrix_oracle(w, x_mean, mask, eps));
    return jac.values.back() / jac.values.front();
}

/// Central finite differences of kappa with respect to the mask.
inline comp::Vector fd_condition_gradient(const comp::Matrix& w, const comp::Vector& x_mean,
                                          const comp::Vector& mask, double eps,
                                          double step = 1e-5) {
    comp::Vector g(mask.len());
    for (std::size_t j = 0; j < mask.len(); ++j) {
        comp::Vector plus = mask, minus = mask;
        plus[j] += step;
        minus[j] -= step;
        g[j] = (kappa_oracle(w, x_mean, plus, eps) - kappa_oracle(w, x_mean, minus, eps)) /
               (2.0 * step);
    }
    return g;
}

/// Richardson-extrapolated central differences: cancels the O(step^2)
/// truncation term, so the step can stay large enough to dominate the
/// eigensolver's rounding noise when kappa is big.
inline comp::Vector fd_condition_gradient_rich(const comp::Matrix& w, const comp::Vector& x_mean,
                                               const comp::Vector& mask, double eps,
                                               double step = 2e-4) {
    comp::Vector coarse = fd_condition_gradient(w, x_mean, mask, eps, step);
    comp::Vector fine = fd_condition_gradient(w, x_mean, mask, eps, step / 2.0);
    comp::Vector g(mask.len());
    for (std::size_t j = 0; j < mask.len(); ++j) g[j] = (4.0 * fine[j] - coarse[j]) / 3.0;
    return g;
}

/// Step chosen from kappa itself: the oracle's rounding noise scales with
/// kappa / step while Richardson extrapolation has already cancelled the
/// leading truncation term, so ill-conditioned instances take a coarser
/// stencil.
inline comp::Vector fd_condition_gradient_auto(const comp::Matrix& w, const comp::Vector& x_mean,
                                               const comp::Vector& mask, double eps) {
    const double kappa = kappa_oracle(w, x_mean, mask, eps);
    const double step = 1e-4 * std::max(1.0, std::sqrt(kappa / 1e4));
    return fd_condition_gradient_rich(w, x_mean, mask, eps, step);
}

/// Ridge least squares on the explicitly stacked mask-tuning system, solved
/// through the Jacobi eigendecomposition (pseudo-inverse route). Returns the
/// full-length tuned mask and reports the ridge value used.
inline comp::Vector pinv_tune_oracle(const comp::Matrix& w, const comp::Matrix& x,
                                     const comp::Vector& mask, double eps_rel,
                                     double* eps_out = nullptr) {
    const std::size_t p = w.rows();
    const std::size_t q = w.cols();
    const std::size_t t_len = x.cols();
    std::vector<std::size_t> retained;
    for (std::size_t j = 0; j < q; ++j)
        if (mask[j] != 0.0) retained.push_back(j);
    const std::size_t qr = retained.size();

    comp::Matrix stacked(p * t_len, qr);
    comp::Vector y(p * t_len);
    for (std::size_t t = 0; t < t_len; ++t)
        for (std::size_t i = 0; i < p; ++i) {
            const std::size_t row = t * p + i;
            for (std::size_t r = 0; r < qr; ++r)
                stacked(row, r) = w(i, retained[r]) * x(retained[r], t);
            double target = 0.0;
            for (std::size_t j = 0; j < q; ++j) target += w(i, j) * x(j, t);
            y[row] = target;
        }

    comp::Matrix ata(qr, qr);
    for (std::size_t a = 0; a < qr; ++a)
        for (std::size_t b = 0; b < qr; ++b) {
            double s = 0.0;
            for (std::size_t row = 0; row < p * t_len; ++row) s += stacked(row, a) * stacked(row, b);
            ata(a, b) = s;
        }
    double trace = 0.0;
    for (std::size_t a = 0; a < qr; ++a) trace += ata(a, a);
    double eps = 0.0;
    if (eps_rel > 0.0) eps = std::max(eps_rel * trace / static_cast<double>(qr), 1e-10);
    if (eps_out) *eps_out = eps;
    for (std::size_t a = 0; a < qr; ++a) ata(a, a) += eps;

    comp::Vector aty(qr);
    for (std::size_t a = 0; a < qr; ++a) {
        double s = 0.0;
        for (std::size_t row = 0; row < p * t_len; ++row) s += stacked(row, a) * y[row];
        aty[a] = s;
    }

    auto jac = jacobi_eigensolve(ata);
    comp::Vector sol_r(qr);
    for (std::size_t k = 0; k < qr; ++k) {
        double proj = 0.0;
        for (std::size_t a = 0; a < qr; ++a) proj += jac.vectors(a, k) * aty[a];
        proj /= jac.values[k];
        for (std::size_t a = 0; a < qr; ++a) sol_r[a] += jac.vectors(a, k) * proj;
    }
    comp::Vector sol(q);
    for (std::size_t r = 0; r < qr; ++r) sol[retained[r]] = sol_r[r];
    return sol;
}

}  // namespace oracles
