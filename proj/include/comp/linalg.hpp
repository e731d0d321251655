#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "comp/errors.hpp"
#include "comp/matrix.hpp"

namespace comp::linalg {

inline double dot(const Vector& a, const Vector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.len(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const Vector& v) { return std::sqrt(dot(v, v)); }

inline double frobenius_norm(const Matrix& m) {
    double s = 0.0;
    const double* p = m.data();
    for (std::size_t i = 0; i < m.size(); ++i) s += p[i] * p[i];
    return std::sqrt(s);
}

/// Standard product with deterministic accumulation: for each output entry
/// the sum runs over k in ascending order, identical to the naive triple loop.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: " + std::to_string(a.rows()) + "x" +
                             std::to_string(a.cols()) + " * " + std::to_string(b.rows()) + "x" +
                             std::to_string(b.cols()));
    }
    Matrix c(a.rows(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* ci = c.row(i);
        const double* ai = a.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = ai[k];
            const double* bk = b.row(k);
            for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

inline Vector matvec(const Matrix& a, const Vector& x) {
    if (a.cols() != x.len()) {
        throw DimensionError("matvec: " + std::to_string(a.rows()) + "x" +
                             std::to_string(a.cols()) + " * " + std::to_string(x.len()));
    }
    Vector y(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* ai = a.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) s += ai[j] * x[j];
        y[i] = s;
    }
    return y;
}

/// y = A^T x without materializing the transpose.
inline Vector matvec_t(const Matrix& a, const Vector& x) {
    if (a.rows() != x.len()) {
        throw DimensionError("matvec_t: " + std::to_string(a.rows()) + "x" +
                             std::to_string(a.cols()) + "^T * " + std::to_string(x.len()));
    }
    Vector y(a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* ai = a.row(i);
        const double xi = x[i];
        for (std::size_t j = 0; j < a.cols(); ++j) y[j] += ai[j] * xi;
    }
    return y;
}

inline Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
    return t;
}

namespace detail {

inline double max_abs(const Matrix& m) {
    double best = 0.0;
    const double* p = m.data();
    for (std::size_t i = 0; i < m.size(); ++i) best = std::max(best, std::abs(p[i]));
    return best;
}

inline void check_square(const Matrix& m, const char* who) {
    if (m.rows() != m.cols()) {
        throw DimensionError(std::string(who) + ": matrix is " + std::to_string(m.rows()) + "x" +
                             std::to_string(m.cols()) + ", expected square");
    }
}

}  // namespace detail

/// Lower-triangular L with L L^T = m. The input is checked for symmetry to
/// 1e-9 relative and symmetrized as (M + M^T)/2 before factorization to
/// absorb accumulation noise.
inline Matrix cholesky_factor(const Matrix& m) {
    detail::check_square(m, "cholesky_factor");
    const std::size_t n = m.rows();
    const double scale = detail::max_abs(m);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (std::abs(m(i, j) - m(j, i)) > 1e-9 * std::max(scale, 1e-300)) {
                throw Error("cholesky_factor: matrix is not symmetric at (" + std::to_string(i) +
                            "," + std::to_string(j) + ")");
            }
        }
    }
    Matrix a(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) a(i, j) = 0.5 * (m(i, j) + m(j, i));

    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = a(j, j);
        const double* lj = l.row(j);
        for (std::size_t k = 0; k < j; ++k) d -= lj[k] * lj[k];
        if (!(d > 0.0)) {
            throw NotPositiveDefiniteError(
                "cholesky_factor: not positive definite, pivot " + std::to_string(j) + " = " +
                    std::to_string(d),
                j);
        }
        const double ljj = std::sqrt(d);
        l(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a(i, j);
            const double* li = l.row(i);
            for (std::size_t k = 0; k < j; ++k) s -= li[k] * lj[k];
            l(i, j) = s / ljj;
        }
    }
    return l;
}

/// Solves (L L^T) x = rhs by forward then back substitution.
inline Vector cholesky_solve(const Matrix& l, const Vector& rhs) {
    detail::check_square(l, "cholesky_solve");
    const std::size_t n = l.rows();
    if (rhs.len() != n) {
        throw DimensionError("cholesky_solve: rhs length " + std::to_string(rhs.len()) +
                             " != " + std::to_string(n));
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (l(i, i) == 0.0) {
            throw SingularError("cholesky_solve: zero diagonal at " + std::to_string(i));
        }
    }
    Vector y(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = rhs[i];
        const double* li = l.row(i);
        for (std::size_t k = 0; k < i; ++k) s -= li[k] * y[k];
        y[i] = s / li[i];
    }
    Vector x(n);
    for (std::size_t ii = n; ii-- > 0;) {
        double s = y[ii];
        for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x[k];
        x[ii] = s / l(ii, ii);
    }
    return x;
}

enum class Extreme { Max, Min };

struct EigPair {
    double value = 0.0;
    Vector vector;
    std::size_t iterations = 0;
    double residual = 0.0;
};

/// Extreme eigenpair of a symmetric positive definite matrix: the largest by
/// power iteration, the smallest by inverse iteration through the Cholesky
/// factor. The start vector is all-ones normalized, so results are
/// deterministic. Convergence: ||Mv - lambda v|| <= tol * lambda_max, where in
/// Min mode the largest diagonal entry stands in as a lower bound on
/// lambda_max (a stricter test than the contract requires).
inline EigPair extreme_eigpair(const Matrix& m, Extreme which, double tol = 1e-10,
                               std::size_t max_iter = 0) {
    detail::check_square(m, "extreme_eigpair");
    const std::size_t n = m.rows();
    if (n == 0) throw DimensionError("extreme_eigpair: empty matrix");
    if (max_iter == 0) max_iter = 10 * n;

    Vector v(n, 1.0 / std::sqrt(static_cast<double>(n)));
    Matrix l;
    double scale_ref = 0.0;
    if (which == Extreme::Min) {
        l = cholesky_factor(m);
        for (std::size_t i = 0; i < n; ++i) scale_ref = std::max(scale_ref, m(i, i));
    }

    double lambda = 0.0;
    double res = 0.0;
    for (std::size_t it = 1; it <= max_iter; ++it) {
        if (which == Extreme::Min) {
            Vector w = cholesky_solve(l, v);
            const double wn = norm2(w);
            if (wn == 0.0) throw SingularError("extreme_eigpair: inverse iteration collapsed");
            for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / wn;
        }
        Vector mv = matvec(m, v);
        lambda = dot(v, mv);
        double rs = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = mv[i] - lambda * v[i];
            rs += d * d;
        }
        res = std::sqrt(rs);
        const double ref = (which == Extreme::Max) ? lambda : scale_ref;
        if (res <= tol * ref) {
            return EigPair{lambda, v, it, res};
        }
        if (which == Extreme::Max) {
            const double mn = norm2(mv);
            if (mn == 0.0) throw SingularError("extreme_eigpair: power iteration collapsed");
            for (std::size_t i = 0; i < n; ++i) v[i] = mv[i] / mn;
        }
    }
    throw ConvergenceError("extreme_eigpair: no convergence after " + std::to_string(max_iter) +
                               " iterations, residual " + std::to_string(res),
                           max_iter, res);
}

/// Rough estimate of the next-extreme eigenvalue by iterating orthogonally to
/// a known extreme eigenvector. Used to detect near-degenerate extremes; only
/// order-of-magnitude accuracy is needed, so the iteration count is capped.
inline double deflated_extreme_estimate(const Matrix& m, const EigPair& known, Extreme which,
                                        std::size_t iters = 256) {
    const std::size_t n = m.rows();
    if (n < 2) return known.value;
    Matrix l;
    if (which == Extreme::Min) l = cholesky_factor(m);
    Vector v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = 1.0 / std::sqrt(static_cast<double>(n)) + 1e-3 * static_cast<double>(i % 7);
    auto orth = [&](Vector& x) {
        const double c = dot(x, known.vector);
        for (std::size_t i = 0; i < n; ++i) x[i] -= c * known.vector[i];
        const double nn = norm2(x);
        if (nn > 0.0)
            for (std::size_t i = 0; i < n; ++i) x[i] /= nn;
    };
    orth(v);
    double lambda = known.value;
    for (std::size_t it = 0; it < iters; ++it) {
        Vector w = (which == Extreme::Min) ? cholesky_solve(l, v) : matvec(m, v);
        orth(w);
        const double wn = norm2(w);
        if (wn == 0.0) break;
        for (std::size_t i = 0; i < n; ++i) v[i] = w[i];
        Vector mv = matvec(m, v);
        lambda = dot(v, mv);
    }
    return lambda;
}

namespace detail {

/// Operator access used by the damped least-squares solver: dense matrices
/// and matrix-free operators (e.g. the stacked mask-tuning system) share it.
struct DenseOp {
    const Matrix& a;
    std::size_t rows() const { return a.rows(); }
    std::size_t cols() const { return a.cols(); }
    Vector apply(const Vector& x) const { return matvec(a, x); }
    Vector apply_t(const Vector& y) const { return matvec_t(a, y); }
};

}  // namespace detail

struct LsqResult {
    Vector x;
    std::size_t iterations = 0;
    double normal_residual = 0.0;
};

/// LSMR (Golub-Kahan bidiagonalization) for min ||Ax - y||^2 + damping ||x||^2.
/// Convergence is declared only after an explicit check of the normal-equation
/// residual ||A^T(Ax - y) + damping x|| <= tol ||A^T y||.
template <typename Op>
LsqResult lsmr_solve(const Op& op, const Vector& y, double damping, double tol,
                     std::size_t max_iter) {
    const std::size_t rows = op.rows();
    const std::size_t cols = op.cols();
    if (y.len() != rows) {
        throw DimensionError("lsmr_solve: rhs length " + std::to_string(y.len()) +
                             " != " + std::to_string(rows));
    }
    if (damping < 0.0) throw Error("lsmr_solve: negative damping");
    const double sqrt_damp = std::sqrt(damping);
    if (max_iter == 0) max_iter = std::max<std::size_t>(8 * cols + 50, 400);

    Vector x(cols);
    const Vector aty = op.apply_t(y);
    const double normal_scale = norm2(aty);
    if (normal_scale == 0.0) {
        return LsqResult{x, 0, 0.0};  // x = 0 is exactly stationary
    }
    auto normal_residual = [&](const Vector& xx) {
        Vector r = op.apply(xx);
        for (std::size_t i = 0; i < rows; ++i) r[i] -= y[i];
        Vector g = op.apply_t(r);
        for (std::size_t j = 0; j < cols; ++j) g[j] += damping * xx[j];
        return norm2(g);
    };

    // Golub-Kahan initialization.
    Vector u = y;
    double beta = norm2(u);
    for (std::size_t i = 0; i < rows; ++i) u[i] /= beta;
    Vector v = op.apply_t(u);
    double alpha = norm2(v);
    if (alpha == 0.0) return LsqResult{x, 0, normal_residual(x)};
    for (std::size_t j = 0; j < cols; ++j) v[j] /= alpha;

    double alpha_bar = alpha;
    double zeta_bar = alpha * beta;
    double rho = 1.0, rho_bar = 1.0, c_bar = 1.0, s_bar = 0.0;
    Vector h = v;
    Vector h_bar(cols);

    double last_nr = zeta_bar;
    for (std::size_t it = 1; it <= max_iter; ++it) {
        // Continue bidiagonalization.
        Vector av = op.apply(v);
        for (std::size_t i = 0; i < rows; ++i) u[i] = av[i] - alpha * u[i];
        beta = norm2(u);
        if (beta > 0.0) {
            for (std::size_t i = 0; i < rows; ++i) u[i] /= beta;
            Vector atu = op.apply_t(u);
            for (std::size_t j = 0; j < cols; ++j) v[j] = atu[j] - beta * v[j];
            alpha = norm2(v);
            if (alpha > 0.0)
                for (std::size_t j = 0; j < cols; ++j) v[j] /= alpha;
        } else {
            alpha = 0.0;
        }

        // Fold in the damping rotation, then the QR rotations.
        const double alpha_hat = std::hypot(alpha_bar, sqrt_damp);
        const double c_hat = alpha_bar / alpha_hat;
        (void)c_hat;
        const double rho_old = rho;
        rho = std::hypot(alpha_hat, beta);
        const double c = alpha_hat / rho;
        const double s = beta / rho;
        const double theta_new = s * alpha;
        alpha_bar = c * alpha;

        const double rho_bar_old = rho_bar;
        const double theta_bar = s_bar * rho;
        const double c_rho = c_bar * rho;
        rho_bar = std::hypot(c_rho, theta_new);
        c_bar = c_rho / rho_bar;
        s_bar = theta_new / rho_bar;
        const double zeta = c_bar * zeta_bar;
        zeta_bar = -s_bar * zeta_bar;

        // Update the solution.
        const double hb_coeff = theta_bar * rho / (rho_old * rho_bar_old);
        for (std::size_t j = 0; j < cols; ++j) h_bar[j] = h[j] - hb_coeff * h_bar[j];
        const double x_coeff = zeta / (rho * rho_bar);
        for (std::size_t j = 0; j < cols; ++j) x[j] += x_coeff * h_bar[j];
        const double h_coeff = theta_new / rho;
        for (std::size_t j = 0; j < cols; ++j) h[j] = v[j] - h_coeff * h[j];

        // |zeta_bar| estimates the normal residual; verify explicitly before
        // declaring victory, and when the Krylov space is exhausted.
        if (std::abs(zeta_bar) <= tol * normal_scale || beta == 0.0 || alpha == 0.0) {
            last_nr = normal_residual(x);
            if (last_nr <= tol * normal_scale) {
                return LsqResult{x, it, last_nr};
            }
            if (beta == 0.0 || alpha == 0.0) break;
        }
    }
    const double final_nr = normal_residual(x);
    if (final_nr <= tol * normal_scale) {
        return LsqResult{x, max_iter, final_nr};
    }
    throw ConvergenceError("lsmr_solve: no convergence after " + std::to_string(max_iter) +
                               " iterations, normal residual " + std::to_string(final_nr) +
                               " (target " + std::to_string(tol * normal_scale) + ")",
                           max_iter, final_nr);
}

/// Damped iterative least squares on a dense matrix.
inline Vector lsq_solve_iterative(const Matrix& a, const Vector& y, double damping,
                                  double tol = 1e-10, std::size_t max_iter = 0) {
    if (a.rows() < 1) throw DimensionError("lsq_solve_iterative: empty system");
    return lsmr_solve(detail::DenseOp{a}, y, damping, tol, max_iter).x;
}

/// Population variance (divide by len). A single element has variance zero.
inline double sample_variance(const Vector& v) {
    if (v.len() == 0) throw Error("sample_variance: empty vector");
    const std::size_t n = v.len();
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += v[i];
    mean /= static_cast<double>(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = v[i] - mean;
        acc += d * d;
    }
    return acc / static_cast<double>(n);
}

}  // namespace comp::linalg
