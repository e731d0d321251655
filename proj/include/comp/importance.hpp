#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "comp/errors.hpp"
#include "comp/linalg.hpp"
#include "comp/matrix.hpp"
#include "comp/model.hpp"

namespace comp {

// ---------------------------------------------------------------------------
// Layer importance: one minus the mean token cosine between a layer's input
// and output. A near-pass-through layer has redundancy close to one and
// importance close to zero.
// ---------------------------------------------------------------------------

struct LayerScore {
    std::size_t layer = 0;
    double redundancy = 0.0;   // mean cosine, in [-1, 1]
    double importance = 0.0;   // 1 - redundancy, in [0, 2]
    std::size_t tokens_used = 0;
};

inline LayerScore layer_importance(const ActivationTrace& trace, std::size_t l) {
    const Matrix& in = trace.layer_input(l);
    const Matrix& out = trace.layer_output(l);
    double acc = 0.0;
    std::size_t used = 0;
    for (std::size_t t = 0; t < in.cols(); ++t) {
        double nin = 0.0, nout = 0.0, dot = 0.0;
        for (std::size_t i = 0; i < in.rows(); ++i) {
            const double a = in(i, t);
            const double b = out(i, t);
            nin += a * a;
            nout += b * b;
            dot += a * b;
        }
        if (nin == 0.0 || nout == 0.0) continue;  // zero-norm token: skipped
        acc += dot / (std::sqrt(nin) * std::sqrt(nout));
        ++used;
    }
    if (used == 0) {
        throw Error("layer_importance: all tokens have zero norm at layer " + std::to_string(l));
    }
    const double redundancy = acc / static_cast<double>(used);
    return LayerScore{l, redundancy, 1.0 - redundancy, used};
}

// ---------------------------------------------------------------------------
// Condition-number neuron importance.
// ---------------------------------------------------------------------------

/// A fixed absolute regularizer is meaningless across weight scales, so the
/// knob is relative to the mean diagonal of the unregularized normal matrix,
/// with a tiny absolute floor.
inline double effective_epsilon(double trace_sum, std::size_t dim, double eps_rel) {
    if (eps_rel <= 0.0) return 0.0;
    const double scaled = eps_rel * trace_sum / static_cast<double>(dim == 0 ? 1 : dim);
    return std::max(scaled, 1e-10);
}

struct NormalMatrixContext {
    Matrix a;        // W Diag(mask o x_mean), p x q
    Matrix s;        // W^T W, cached for the gradient
    Matrix normal;   // A^T A + eps I, q x q
    Vector u;        // mask o x_mean
    Vector x_mean;
    Vector mask;
    double epsilon = 0.0;
    linalg::EigPair emax, emin;
    /// lambda_min sits at the regularization floor: A has a null space, so the
    /// smallest eigenvalue is constant in the mask and its derivative is zero.
    bool min_at_regularization = false;
};

/// Builds the regularized normal matrix of A = W Diag(mask o x_mean) and its
/// extreme eigenpairs. epsilon is the absolute value added to the diagonal.
inline NormalMatrixContext build_normal_context(const DenseLayer& dense, const Vector& x_mean,
                                                double epsilon, double eig_tol = 1e-10,
                                                std::size_t eig_max_iter = 0) {
    const std::size_t q = dense.in_dim();
    if (x_mean.len() != q) {
        throw DimensionError("build_normal_context: x_mean length " +
                             std::to_string(x_mean.len()) + " != " + std::to_string(q));
    }
    if (epsilon <= 0.0) throw Error("build_normal_context: epsilon must be positive");

    NormalMatrixContext ctx;
    ctx.x_mean = x_mean;
    ctx.mask = dense.binary_mask;
    ctx.u = Vector(q);
    for (std::size_t j = 0; j < q; ++j) ctx.u[j] = dense.binary_mask[j] * x_mean[j];

    ctx.a = Matrix(dense.out_dim(), q);
    for (std::size_t i = 0; i < dense.out_dim(); ++i)
        for (std::size_t j = 0; j < q; ++j) ctx.a(i, j) = dense.weight(i, j) * ctx.u[j];

    ctx.s = linalg::matmul(linalg::transpose(dense.weight), dense.weight);
    ctx.normal = Matrix(q, q);
    for (std::size_t i = 0; i < q; ++i) {
        for (std::size_t j = 0; j < q; ++j) ctx.normal(i, j) = ctx.u[i] * ctx.u[j] * ctx.s(i, j);
        ctx.normal(i, i) += epsilon;
    }
    ctx.epsilon = epsilon;

    if (eig_max_iter == 0) eig_max_iter = std::max<std::size_t>(200 * q, 4000);
    ctx.emax = linalg::extreme_eigpair(ctx.normal, linalg::Extreme::Max, eig_tol, eig_max_iter);
    ctx.emin = linalg::extreme_eigpair(ctx.normal, linalg::Extreme::Min, eig_tol, eig_max_iter);
    ctx.min_at_regularization = ctx.emin.value <= epsilon * (1.0 + 1e-6);
    return ctx;
}

/// kappa = lambda_max / lambda_min of the regularized normal matrix.
inline double condition_number(const NormalMatrixContext& ctx) {
    return ctx.emax.value / ctx.emin.value;
}

/// Closed-form d kappa / d mask via first-order eigenvalue perturbation:
/// d lambda(v)_j = 2 x_mean_j v_j (S (u o v))_j with S = W^T W, u = mask o x_mean.
inline Vector condition_gradient(const NormalMatrixContext& ctx, const Vector& x_mean) {
    const std::size_t q = ctx.u.len();
    if (x_mean.len() != q) throw DimensionError("condition_gradient: x_mean length mismatch");

    auto eig_derivative = [&](const Vector& v) {
        Vector uv(q);
        for (std::size_t j = 0; j < q; ++j) uv[j] = ctx.u[j] * v[j];
        Vector suv = linalg::matvec(ctx.s, uv);
        Vector d(q);
        for (std::size_t j = 0; j < q; ++j) d[j] = 2.0 * x_mean[j] * v[j] * suv[j];
        return d;
    };

    Vector dmax = eig_derivative(ctx.emax.vector);
    Vector dmin(q);
    if (!ctx.min_at_regularization) dmin = eig_derivative(ctx.emin.vector);

    const double lmax = ctx.emax.value;
    const double lmin = ctx.emin.value;
    Vector g(q);
    for (std::size_t j = 0; j < q; ++j)
        g[j] = (dmax[j] * lmin - lmax * dmin[j]) / (lmin * lmin);
    return g;
}

struct NeuronScores {
    Vector importance;  // +inf at already-pruned positions
    Vector gradient;
    double kappa0 = 0.0;
    bool used_fallback = false;  // finite differences instead of perturbation form
};

/// Fisher-diagonal importance: I_f = -g_f + g_f^2 / 2. Pruned neurons get an
/// infinite sentinel so they are never reselected.
inline NeuronScores neuron_importance(const NormalMatrixContext& ctx, const Vector& g) {
    const std::size_t q = g.len();
    NeuronScores scores;
    scores.gradient = g;
    scores.kappa0 = condition_number(ctx);
    scores.importance = Vector(q);
    for (std::size_t j = 0; j < q; ++j) {
        if (ctx.mask[j] == 0.0) {
            scores.importance[j] = std::numeric_limits<double>::infinity();
        } else {
            scores.importance[j] = -g[j] + 0.5 * g[j] * g[j];
        }
    }
    return scores;
}

/// Ascending by importance; ties break toward the lower index. Sentinel
/// entries sort last.
inline std::vector<std::size_t> rank_neurons(const NeuronScores& scores) {
    std::vector<std::size_t> order(scores.importance.len());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores.importance[a] < scores.importance[b];
    });
    return order;
}

// ---------------------------------------------------------------------------
// Dense-level scoring with degenerate-spectrum fallback.
// ---------------------------------------------------------------------------

struct DenseScoreOptions {
    double eps_rel = 1e-6;
    double eig_tol = 1e-10;
    std::size_t eig_max_iter = 0;
    double degenerate_gap_ratio = 1e-6;  // gap threshold relative to lambda_max
    double fd_step = 1e-5;
    bool force_fallback = false;
};

namespace detail {

/// kappa of the normal matrix for an arbitrary mask vector, eigenvalues only.
inline double kappa_for_mask(const Matrix& s, const Vector& x_mean, const Vector& mask,
                             double epsilon, double tol, std::size_t max_iter) {
    const std::size_t q = x_mean.len();
    Matrix normal(q, q);
    for (std::size_t i = 0; i < q; ++i) {
        const double ui = mask[i] * x_mean[i];
        for (std::size_t j = 0; j < q; ++j)
            normal(i, j) = ui * (mask[j] * x_mean[j]) * s(i, j);
        normal(i, i) += epsilon;
    }
    const auto mx = linalg::extreme_eigpair(normal, linalg::Extreme::Max, tol, max_iter);
    const auto mn = linalg::extreme_eigpair(normal, linalg::Extreme::Min, tol, max_iter);
    return mx.value / mn.value;
}

}  // namespace detail

/// Central-difference gradient of kappa with respect to the mask. Used when
/// the extreme eigenvalues are too close for the perturbation form.
inline Vector condition_gradient_fd(const NormalMatrixContext& ctx, double step = 1e-5,
                                    double eig_tol = 1e-9, std::size_t eig_max_iter = 0) {
    const std::size_t q = ctx.u.len();
    if (eig_max_iter == 0) eig_max_iter = std::max<std::size_t>(400 * q, 8000);
    Vector g(q);
    for (std::size_t j = 0; j < q; ++j) {
        if (ctx.mask[j] == 0.0) continue;  // sentinel importance, value unused
        Vector plus = ctx.mask, minus = ctx.mask;
        plus[j] += step;
        minus[j] -= step;
        const double kp =
            detail::kappa_for_mask(ctx.s, ctx.x_mean, plus, ctx.epsilon, eig_tol, eig_max_iter);
        const double km =
            detail::kappa_for_mask(ctx.s, ctx.x_mean, minus, ctx.epsilon, eig_tol, eig_max_iter);
        g[j] = (kp - km) / (2.0 * step);
    }
    return g;
}

/// Full per-dense scoring: builds the context, checks the extreme eigenvalue
/// gaps, and falls back to finite differences near degeneracy.
inline NeuronScores score_dense_neurons(const DenseLayer& dense, const Vector& x_mean,
                                        const DenseScoreOptions& opt = {}) {
    double trace_sum = 0.0;
    for (std::size_t i = 0; i < dense.out_dim(); ++i)
        for (std::size_t j = 0; j < dense.in_dim(); ++j) {
            const double a = dense.weight(i, j) * dense.binary_mask[j] * x_mean[j];
            trace_sum += a * a;
        }
    const double eps = effective_epsilon(trace_sum, dense.in_dim(), opt.eps_rel);

    bool fallback = opt.force_fallback;
    NormalMatrixContext ctx;
    try {
        ctx = build_normal_context(dense, x_mean, eps, opt.eig_tol, opt.eig_max_iter);
    } catch (const ConvergenceError&) {
        // Slow power iteration signals clustered extremes; rebuild leniently
        // and use finite differences.
        ctx = build_normal_context(dense, x_mean, eps, 1e-6,
                                   std::max<std::size_t>(400 * dense.in_dim(), 8000));
        fallback = true;
    }

    if (!fallback) {
        const double lmax = ctx.emax.value;
        const double second_max =
            linalg::deflated_extreme_estimate(ctx.normal, ctx.emax, linalg::Extreme::Max);
        if (lmax - second_max < opt.degenerate_gap_ratio * lmax) fallback = true;
        if (!fallback && !ctx.min_at_regularization) {
            const double second_min =
                linalg::deflated_extreme_estimate(ctx.normal, ctx.emin, linalg::Extreme::Min);
            if (second_min - ctx.emin.value < opt.degenerate_gap_ratio * lmax) {
                if (ctx.emin.value <= 10.0 * eps) {
                    // The bottom of the spectrum is a regularization-dominated
                    // cluster (near-zero mean-input coordinates). Its true
                    // mask-derivative is O(lambda_min - eps), far below what
                    // finite differences could resolve at this kappa, so the
                    // min side is treated as constant and the max-side
                    // perturbation form stays in charge.
                    ctx.min_at_regularization = true;
                } else {
                    fallback = true;
                }
            }
        }
    }

    Vector g = fallback ? condition_gradient_fd(ctx, opt.fd_step)
                        : condition_gradient(ctx, x_mean);
    NeuronScores scores = neuron_importance(ctx, g);
    scores.used_fallback = fallback;
    return scores;
}

}  // namespace comp
