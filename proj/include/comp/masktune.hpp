#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "comp/errors.hpp"
#include "comp/importance.hpp"
#include "comp/linalg.hpp"
#include "comp/matrix.hpp"
#include "comp/model.hpp"

namespace comp {

enum class TuneSolver { Direct, Iterative };

inline std::string to_string(TuneSolver s) {
    return s == TuneSolver::Direct ? "direct" : "iterative";
}

/// Restricted regularized least squares for one dense: reconstruct the
/// original outputs W X_t from the retained input neurons. The inputs X are
/// the original model's activations; the target never depends on the mask.
struct TuneProblem {
    const Matrix* weight = nullptr;  // W, p x q
    const Matrix* inputs = nullptr;  // X, q x T
    Vector binary_mask;              // q, entries in {0, 1}
    double eps_rel = 1e-6;           // ridge, relative to the normal-matrix scale
    TuneSolver solver = TuneSolver::Direct;
    double iter_tol = 1e-10;
    std::size_t iter_max_iter = 0;

    // Optional caches shared across repeated tunes of the same dense.
    const Matrix* s_cache = nullptr;  // W^T W
    const Matrix* c_cache = nullptr;  // X X^T
    const Matrix* y_cache = nullptr;  // W X
};

struct TuneResult {
    Vector tuned_mask;   // zero at pruned positions
    Vector binary_mask;
    double residual_rms = 0.0;  // RMS over all p*T entries of W Diag(m_hat) X - W X
    double variance = 0.0;      // population variance of the retained entries
    std::size_t solver_iterations = 0;
    bool used_iterative_fallback = false;
    bool kept_binary = false;  // least-squares step did not beat the plain mask
    double objective = 0.0;    // residual^2 + eps * ||m_hat||^2
    double epsilon_abs = 0.0;
};

namespace detail {

/// Squared Frobenius residual ||W (m o X) - W X||_F^2 evaluated directly.
inline double brute_residual_sq(const Matrix& w, const Matrix& x, const Vector& m) {
    const std::size_t q = x.rows();
    const std::size_t t_len = x.cols();
    Matrix delta(q, t_len);
    for (std::size_t j = 0; j < q; ++j) {
        const double f = m[j] - 1.0;
        if (f == 0.0) continue;
        const double* src = x.row(j);
        double* dst = delta.row(j);
        for (std::size_t t = 0; t < t_len; ++t) dst[t] = f * src[t];
    }
    Matrix e = linalg::matmul(w, delta);
    double s = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) s += e.data()[i] * e.data()[i];
    return s;
}

/// Matrix-free view of the stacked T p x q_retained least-squares system.
struct StackedTuneOp {
    const Matrix& w;                          // p x q
    const Matrix& x;                          // q x T
    const std::vector<std::size_t>& retained;

    std::size_t rows() const { return w.rows() * x.cols(); }
    std::size_t cols() const { return retained.size(); }

    Vector apply(const Vector& v) const {
        const std::size_t t_len = x.cols();
        const std::size_t p = w.rows();
        Vector out(p * t_len);
        // out_{t p + i} = sum_r W(i, retained[r]) * X(retained[r], t) * v_r
        for (std::size_t r = 0; r < retained.size(); ++r) {
            const std::size_t j = retained[r];
            const double vr = v[r];
            if (vr == 0.0) continue;
            const double* xj = x.row(j);
            for (std::size_t i = 0; i < p; ++i) {
                const double wij = w(i, j) * vr;
                if (wij == 0.0) continue;
                double* o = out.data() + i;
                for (std::size_t t = 0; t < t_len; ++t) o[t * p] += wij * xj[t];
            }
        }
        return out;
    }

    Vector apply_t(const Vector& u) const {
        const std::size_t t_len = x.cols();
        const std::size_t p = w.rows();
        Vector out(retained.size());
        for (std::size_t r = 0; r < retained.size(); ++r) {
            const std::size_t j = retained[r];
            const double* xj = x.row(j);
            double acc = 0.0;
            for (std::size_t i = 0; i < p; ++i) {
                const double wij = w(i, j);
                if (wij == 0.0) continue;
                const double* ui = u.data() + i;
                double dot = 0.0;
                for (std::size_t t = 0; t < t_len; ++t) dot += ui[t * p] * xj[t];
                acc += wij * dot;
            }
            out[r] = acc;
        }
        return out;
    }
};

}  // namespace detail

/// Population variance of the retained entries of a tuned mask.
inline double mask_variance(const Vector& tuned, const Vector& binary) {
    std::vector<double> retained;
    retained.reserve(tuned.len());
    for (std::size_t j = 0; j < tuned.len(); ++j)
        if (binary[j] != 0.0) retained.push_back(tuned[j]);
    if (retained.empty()) throw Error("mask_variance: no retained entries");
    return linalg::sample_variance(Vector::from_data(std::move(retained)));
}

inline double mask_variance(const TuneResult& result) {
    return mask_variance(result.tuned_mask, result.binary_mask);
}

/// Solves the tuning problem. The direct path assembles the exact normal
/// equations M = (W^T W) o (X X^T) restricted to retained coordinates plus a
/// ridge, and factorizes them; the iterative path runs the damped
/// least-squares solver on the stacked system. A solution that fails to beat
/// the plain binary mask on raw residual is discarded in favor of the binary
/// mask, so tuning never hurts on the calibration data.
inline TuneResult tune_mask(const TuneProblem& p) {
    const Matrix& w = *p.weight;
    const Matrix& x = *p.inputs;
    const std::size_t q = w.cols();
    const std::size_t t_len = x.cols();
    if (x.rows() != q) {
        throw DimensionError("tune_mask: inputs have " + std::to_string(x.rows()) +
                             " rows, dense expects " + std::to_string(q));
    }
    if (p.binary_mask.len() != q) throw DimensionError("tune_mask: mask length mismatch");

    std::vector<std::size_t> retained;
    retained.reserve(q);
    for (std::size_t j = 0; j < q; ++j)
        if (p.binary_mask[j] != 0.0) retained.push_back(j);
    if (retained.empty()) throw Error("tune_mask: no retained neurons");
    const std::size_t qr = retained.size();

    Matrix s_local, c_local;
    const Matrix* s = p.s_cache;
    const Matrix* c = p.c_cache;
    if (!s) {
        s_local = linalg::matmul(linalg::transpose(w), w);
        s = &s_local;
    }
    if (!c) {
        c_local = linalg::matmul(x, linalg::transpose(x));
        c = &c_local;
    }

    // Ridge scale from the retained diagonal of the unregularized normal matrix.
    double trace_sum = 0.0;
    for (std::size_t j : retained) trace_sum += (*s)(j, j) * (*c)(j, j);
    const double eps = effective_epsilon(trace_sum, qr, p.eps_rel);

    // Right-hand side: full row sums of (S o C), restricted to retained rows.
    Vector rhs(qr);
    for (std::size_t r = 0; r < qr; ++r) {
        const std::size_t i = retained[r];
        double acc = 0.0;
        for (std::size_t j = 0; j < q; ++j) acc += (*s)(i, j) * (*c)(i, j);
        rhs[r] = acc;
    }

    Vector solution(qr);
    std::size_t iterations = 0;
    bool used_fallback = false;
    bool solved = false;

    if (p.solver == TuneSolver::Direct) {
        try {
            Matrix normal(qr, qr);
            for (std::size_t r = 0; r < qr; ++r) {
                for (std::size_t cc = 0; cc < qr; ++cc)
                    normal(r, cc) = (*s)(retained[r], retained[cc]) * (*c)(retained[r], retained[cc]);
                normal(r, r) += eps;
            }
            Matrix l = linalg::cholesky_factor(normal);
            solution = linalg::cholesky_solve(l, rhs);
            solved = true;
        } catch (const Error&) {
            used_fallback = true;  // fall through to the iterative path
        }
    }
    if (!solved) {
        detail::StackedTuneOp op{w, x, retained};
        Vector y(op.rows());
        if (p.y_cache) {
            const Matrix& wx = *p.y_cache;
            for (std::size_t i = 0; i < w.rows(); ++i)
                for (std::size_t t = 0; t < t_len; ++t) y[t * w.rows() + i] = wx(i, t);
        } else {
            Matrix wx = linalg::matmul(w, x);
            for (std::size_t i = 0; i < w.rows(); ++i)
                for (std::size_t t = 0; t < t_len; ++t) y[t * w.rows() + i] = wx(i, t);
        }
        try {
            auto res = linalg::lsmr_solve(op, y, eps, p.iter_tol,
                                          p.iter_max_iter ? p.iter_max_iter
                                                          : std::max<std::size_t>(40 * qr, 2000));
            solution = res.x;
            iterations = res.iterations;
        } catch (const ConvergenceError& e) {
            throw SolverError("tune_mask: direct and iterative solvers both failed (" +
                              std::string(e.what()) + ")");
        }
    }

    TuneResult result;
    result.binary_mask = p.binary_mask;
    result.tuned_mask = Vector(q);
    for (std::size_t r = 0; r < qr; ++r) result.tuned_mask[retained[r]] = solution[r];
    result.solver_iterations = iterations;
    result.used_iterative_fallback = used_fallback;
    result.epsilon_abs = eps;

    // Keep whichever of {tuned, binary} has the smaller raw residual.
    const double resid_tuned = detail::brute_residual_sq(w, x, result.tuned_mask);
    const double resid_binary = detail::brute_residual_sq(w, x, p.binary_mask);
    double resid_sq = resid_tuned;
    if (resid_binary < resid_tuned) {
        result.tuned_mask = p.binary_mask;
        result.kept_binary = true;
        resid_sq = resid_binary;
    }
    double norm_sq = 0.0;
    for (std::size_t j = 0; j < q; ++j) norm_sq += result.tuned_mask[j] * result.tuned_mask[j];
    result.objective = resid_sq + eps * norm_sq;
    result.residual_rms = std::sqrt(resid_sq / static_cast<double>(w.rows() * t_len));
    result.variance = mask_variance(result.tuned_mask, result.binary_mask);
    return result;
}

/// RMS discrepancy between the masked dense output and the original output.
inline double reconstruction_error(const DenseLayer& dense, const Matrix& x,
                                   const Vector& m_hat) {
    if (m_hat.len() != dense.in_dim() || x.rows() != dense.in_dim()) {
        throw DimensionError("reconstruction_error: shape mismatch");
    }
    Vector effective(m_hat.len());
    for (std::size_t j = 0; j < m_hat.len(); ++j)
        effective[j] = m_hat[j] * dense.binary_mask[j];
    const double resid_sq = detail::brute_residual_sq(dense.weight, x, effective);
    return std::sqrt(resid_sq / static_cast<double>(dense.out_dim() * x.cols()));
}

}  // namespace comp
