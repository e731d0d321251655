#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "comp/errors.hpp"
#include "comp/model.hpp"

namespace comp {

namespace detail {

inline double log_sum_exp_column(const Matrix& logits, std::size_t t) {
    double mx = logits(0, t);
    for (std::size_t i = 1; i < logits.rows(); ++i) mx = std::max(mx, logits(i, t));
    double s = 0.0;
    for (std::size_t i = 0; i < logits.rows(); ++i) s += std::exp(logits(i, t) - mx);
    return mx + std::log(s);
}

}  // namespace detail

/// Mean next-token cross entropy (nats) of one sequence.
inline double cross_entropy(const Model& m, std::span<const int> tokens) {
    if (tokens.size() < 2) throw Error("cross_entropy: need at least 2 tokens");
    Matrix logits = forward(m, tokens);
    double total = 0.0;
    for (std::size_t t = 0; t + 1 < tokens.size(); ++t) {
        const double lse = detail::log_sum_exp_column(logits, t);
        total += lse - logits(static_cast<std::size_t>(tokens[t + 1]), t);
    }
    return total / static_cast<double>(tokens.size() - 1);
}

inline double cross_entropy(const Model& m, const Batch& batch) {
    if (batch.n_samples == 0 || batch.seq_len < 2) {
        throw Error("cross_entropy: need a batch with sequences of >= 2 tokens");
    }
    double total = 0.0;
    for (std::size_t s = 0; s < batch.n_samples; ++s) total += cross_entropy(m, batch.row(s));
    return total / static_cast<double>(batch.n_samples);
}

/// exp of the mean next-token cross entropy.
inline double perplexity(const Model& m, std::span<const int> tokens) {
    return std::exp(cross_entropy(m, tokens));
}

inline double perplexity(const Model& m, const Batch& batch) {
    return std::exp(cross_entropy(m, batch));
}

struct Fidelity {
    double mean_kl = 0.0;        // KL(p_a || p_b), mean over token positions
    double mean_logit_mse = 0.0; // mean over positions and vocabulary entries
};

/// Output agreement between two models over the same batch.
inline Fidelity fidelity(const Model& a, const Model& b, const Batch& batch) {
    if (a.config.vocab != b.config.vocab) {
        throw Error("fidelity: vocabulary sizes differ");
    }
    if (batch.n_samples == 0) throw Error("fidelity: empty batch");
    const std::size_t vocab = a.config.vocab;
    double kl_total = 0.0;
    double mse_total = 0.0;
    std::size_t positions = 0;
    std::vector<double> log_pa(vocab), log_pb(vocab);
    for (std::size_t s = 0; s < batch.n_samples; ++s) {
        Matrix la = forward(a, batch.row(s));
        Matrix lb = forward(b, batch.row(s));
        for (std::size_t t = 0; t < batch.seq_len; ++t) {
            const double lse_a = detail::log_sum_exp_column(la, t);
            const double lse_b = detail::log_sum_exp_column(lb, t);
            double kl = 0.0, mse = 0.0;
            for (std::size_t i = 0; i < vocab; ++i) {
                log_pa[i] = la(i, t) - lse_a;
                log_pb[i] = lb(i, t) - lse_b;
                kl += std::exp(log_pa[i]) * (log_pa[i] - log_pb[i]);
                const double d = la(i, t) - lb(i, t);
                mse += d * d;
            }
            kl_total += kl;
            mse_total += mse / static_cast<double>(vocab);
            ++positions;
        }
    }
    return Fidelity{kl_total / static_cast<double>(positions),
                    mse_total / static_cast<double>(positions)};
}

}  // namespace comp
