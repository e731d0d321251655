#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "comp/errors.hpp"
#include "comp/eval.hpp"
#include "comp/linalg.hpp"
#include "comp/model.hpp"
#include "comp/rng.hpp"
#include "comp/tokenizer.hpp"

namespace comp {

// Default sequence length covers the model's full context so every
// positional embedding row trains; calibration later samples whole windows.
struct TrainConfig {
    std::size_t steps = 2000;
    double lr = 1e-3;
    std::size_t batch_size = 4;
    std::size_t seq_len = 128;
    std::uint64_t seed = 0;
    double grad_clip = 1.0;
    std::size_t warmup_steps = 50;
    double holdout_fraction = 0.1;
    std::size_t log_every = 100;
};

struct TrainCurvePoint {
    std::size_t step;
    double loss;
};

struct TrainResult {
    Model model;
    std::vector<TrainCurvePoint> curve;
    double final_loss = 0.0;
    double holdout_cross_entropy = 0.0;
    double holdout_bits_per_byte = 0.0;
};

namespace detail {

// C += A * B^T, with A (m x t) and B (n x t). Works on a transposed copy of
// B so the inner loop is a contiguous FMA sweep instead of a reduction.
inline void add_matmul_nt(Matrix& c, const Matrix& a, const Matrix& b) {
    const Matrix bt = linalg::transpose(b);  // t x n
    const std::size_t n = bt.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* ai = a.row(i);
        double* ci = c.row(i);
        for (std::size_t t = 0; t < a.cols(); ++t) {
            const double ait = ai[t];
            const double* btr = bt.row(t);
            for (std::size_t j = 0; j < n; ++j) ci[j] += ait * btr[j];
        }
    }
}

// out = W^T * y without materializing the transpose.
inline Matrix matmul_tn(const Matrix& w, const Matrix& y) {
    Matrix out(w.cols(), y.cols());
    for (std::size_t i = 0; i < w.rows(); ++i) {
        const double* wi = w.row(i);
        const double* yi = y.row(i);
        for (std::size_t j = 0; j < w.cols(); ++j) {
            const double wij = wi[j];
            double* oj = out.row(j);
            for (std::size_t t = 0; t < y.cols(); ++t) oj[t] += wij * yi[t];
        }
    }
    return out;
}

struct DenseGrads {
    Matrix weight;
    Vector bias;
};

struct LayerGrads {
    Vector ln1_scale, ln1_shift, ln2_scale, ln2_shift;
    DenseGrads q, k, v, o, gate, up, down;
};

struct ModelGrads {
    Matrix embedding, pos_embedding;
    std::vector<LayerGrads> layers;
    Vector fn_scale, fn_shift;
    DenseGrads head;
};

inline DenseGrads zeros_like(const DenseLayer& d) {
    return DenseGrads{Matrix(d.weight.rows(), d.weight.cols()), Vector(d.bias.len())};
}

inline ModelGrads make_grads(const Model& m) {
    ModelGrads g;
    g.embedding = Matrix(m.embedding.rows(), m.embedding.cols());
    g.pos_embedding = Matrix(m.pos_embedding.rows(), m.pos_embedding.cols());
    for (const auto& l : m.layers) {
        LayerGrads lg;
        lg.ln1_scale = Vector(l.ln1.scale.len());
        lg.ln1_shift = Vector(l.ln1.shift.len());
        lg.ln2_scale = Vector(l.ln2.scale.len());
        lg.ln2_shift = Vector(l.ln2.shift.len());
        lg.q = zeros_like(l.q_proj);
        lg.k = zeros_like(l.k_proj);
        lg.v = zeros_like(l.v_proj);
        lg.o = zeros_like(l.o_proj);
        lg.gate = zeros_like(l.gate_proj);
        lg.up = zeros_like(l.up_proj);
        lg.down = zeros_like(l.down_proj);
        g.layers.push_back(std::move(lg));
    }
    g.fn_scale = Vector(m.final_norm.scale.len());
    g.fn_shift = Vector(m.final_norm.shift.len());
    g.head = zeros_like(m.lm_head);
    return g;
}

/// Visits every trainable tensor of model and grads in one fixed order.
template <typename Fn>
void for_each_param(Model& m, ModelGrads& g, Fn&& fn) {
    fn(m.embedding.data(), g.embedding.data(), m.embedding.size());
    fn(m.pos_embedding.data(), g.pos_embedding.data(), m.pos_embedding.size());
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        auto& layer = m.layers[l];
        auto& lg = g.layers[l];
        fn(layer.ln1.scale.data(), lg.ln1_scale.data(), layer.ln1.scale.len());
        fn(layer.ln1.shift.data(), lg.ln1_shift.data(), layer.ln1.shift.len());
        auto dense = [&](DenseLayer& d, DenseGrads& dg) {
            fn(d.weight.data(), dg.weight.data(), d.weight.size());
            fn(d.bias.data(), dg.bias.data(), d.bias.len());
        };
        dense(layer.q_proj, lg.q);
        dense(layer.k_proj, lg.k);
        dense(layer.v_proj, lg.v);
        dense(layer.o_proj, lg.o);
        if (m.config.ffn_kind == FfnKind::Gated) dense(layer.gate_proj, lg.gate);
        dense(layer.up_proj, lg.up);
        dense(layer.down_proj, lg.down);
        fn(layer.ln2.scale.data(), lg.ln2_scale.data(), layer.ln2.scale.len());
        fn(layer.ln2.shift.data(), lg.ln2_shift.data(), layer.ln2.shift.len());
    }
    fn(m.final_norm.scale.data(), g.fn_scale.data(), m.final_norm.scale.len());
    fn(m.final_norm.shift.data(), g.fn_shift.data(), m.final_norm.shift.len());
    fn(m.lm_head.weight.data(), g.head.weight.data(), m.lm_head.weight.size());
    fn(m.lm_head.bias.data(), g.head.bias.data(), m.lm_head.bias.len());
}

struct LnCache {
    Matrix input;          // pre-norm input
    std::vector<double> mean, inv_std;
};

inline Matrix ln_forward(const Matrix& x, const LayerNormParams& p, LnCache& cache) {
    const std::size_t d = x.rows();
    Matrix out(d, x.cols());
    cache.input = x;
    cache.mean.resize(x.cols());
    cache.inv_std.resize(x.cols());
    for (std::size_t t = 0; t < x.cols(); ++t) {
        double mean = 0.0;
        for (std::size_t i = 0; i < d; ++i) mean += x(i, t);
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double c = x(i, t) - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        cache.mean[t] = mean;
        cache.inv_std[t] = inv;
        for (std::size_t i = 0; i < d; ++i)
            out(i, t) = (x(i, t) - mean) * inv * p.scale[i] + p.shift[i];
    }
    return out;
}

inline Matrix ln_backward(const Matrix& dy, const LayerNormParams& p, const LnCache& cache,
                          Vector& dscale, Vector& dshift) {
    const std::size_t d = dy.rows();
    Matrix dx(d, dy.cols());
    for (std::size_t t = 0; t < dy.cols(); ++t) {
        const double mean = cache.mean[t];
        const double inv = cache.inv_std[t];
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double xhat = (cache.input(i, t) - mean) * inv;
            const double dyv = dy(i, t);
            dshift[i] += dyv;
            dscale[i] += dyv * xhat;
            const double dxhat = dyv * p.scale[i];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
        }
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t i = 0; i < d; ++i) {
            const double xhat = (cache.input(i, t) - mean) * inv;
            const double dxhat = dy(i, t) * p.scale[i];
            dx(i, t) = inv * (dxhat - inv_d * sum_dxhat - xhat * inv_d * sum_dxhat_xhat);
        }
    }
    return dx;
}

inline Matrix masked_input(const DenseLayer& d, const Matrix& x) {
    Matrix mx(x.rows(), x.cols());
    for (std::size_t j = 0; j < x.rows(); ++j) {
        const double m = d.tuned_mask[j];
        const double* s = x.row(j);
        double* o = mx.row(j);
        for (std::size_t t = 0; t < x.cols(); ++t) o[t] = m * s[t];
    }
    return mx;
}

/// dy -> (dW, db accumulated) and dx through W (m_hat o x) + b.
inline Matrix dense_backward(const DenseLayer& d, const Matrix& x, const Matrix& dy,
                             DenseGrads& g) {
    Matrix mx = masked_input(d, x);
    add_matmul_nt(g.weight, dy, mx);
    for (std::size_t i = 0; i < dy.rows(); ++i) {
        const double* r = dy.row(i);
        double s = 0.0;
        for (std::size_t t = 0; t < dy.cols(); ++t) s += r[t];
        g.bias[i] += s;
    }
    Matrix dx = matmul_tn(d.weight, dy);
    for (std::size_t j = 0; j < dx.rows(); ++j) {
        const double m = d.tuned_mask[j];
        double* r = dx.row(j);
        for (std::size_t t = 0; t < dx.cols(); ++t) r[t] *= m;
    }
    return dx;
}

struct LayerCaches {
    LnCache ln1, ln2;
    Matrix attn_in, q, k, v, qt, kt, vt, ctx, mid, ffn_in, gate, up, act;
    std::vector<Matrix> probs;  // per head, T x T lower-triangular attention weights
};

/// Forward for training: caches everything the backward pass needs.
inline Matrix train_layer_forward(const TransformerLayer& layer, FfnKind kind,
                                  std::size_t n_heads, const Matrix& x, LayerCaches& c) {
    c.attn_in = ln_forward(x, layer.ln1, c.ln1);
    c.q = layer.q_proj.apply(c.attn_in);
    c.k = layer.k_proj.apply(c.attn_in);
    c.v = layer.v_proj.apply(c.attn_in);

    const std::size_t d = x.rows();
    const std::size_t t_len = x.cols();
    const std::size_t dh = d / n_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    c.qt = linalg::transpose(c.q);
    c.kt = linalg::transpose(c.k);
    c.vt = linalg::transpose(c.v);
    Matrix ctx_t(t_len, d);
    c.probs.assign(n_heads, Matrix(t_len, t_len));
    for (std::size_t h = 0; h < n_heads; ++h) {
        const std::size_t r0 = h * dh;
        Matrix& p = c.probs[h];
        for (std::size_t i = 0; i < t_len; ++i) {
            const double* qi = c.qt.row(i) + r0;
            double mx = -1e300;
            for (std::size_t j = 0; j <= i; ++j) {
                const double* kj = c.kt.row(j) + r0;
                double s = 0.0;
                for (std::size_t r = 0; r < dh; ++r) s += qi[r] * kj[r];
                p(i, j) = s * inv_sqrt;
                mx = std::max(mx, p(i, j));
            }
            double denom = 0.0;
            for (std::size_t j = 0; j <= i; ++j) {
                p(i, j) = std::exp(p(i, j) - mx);
                denom += p(i, j);
            }
            double* ci = ctx_t.row(i) + r0;
            for (std::size_t j = 0; j <= i; ++j) {
                p(i, j) /= denom;
                const double w = p(i, j);
                const double* vj = c.vt.row(j) + r0;
                for (std::size_t r = 0; r < dh; ++r) ci[r] += w * vj[r];
            }
        }
    }
    c.ctx = linalg::transpose(ctx_t);
    Matrix attn_out = layer.o_proj.apply(c.ctx);

    c.mid = Matrix(d, t_len);
    for (std::size_t i = 0; i < x.size(); ++i)
        c.mid.data()[i] = x.data()[i] + attn_out.data()[i];

    c.ffn_in = ln_forward(c.mid, layer.ln2, c.ln2);
    if (kind == FfnKind::Gated) {
        c.gate = layer.gate_proj.apply(c.ffn_in);
        c.up = layer.up_proj.apply(c.ffn_in);
        c.act = Matrix(c.gate.rows(), c.gate.cols());
        for (std::size_t i = 0; i < c.act.size(); ++i)
            c.act.data()[i] = silu(c.gate.data()[i]) * c.up.data()[i];
    } else {
        c.up = layer.up_proj.apply(c.ffn_in);
        c.act = Matrix(c.up.rows(), c.up.cols());
        for (std::size_t i = 0; i < c.act.size(); ++i) c.act.data()[i] = gelu(c.up.data()[i]);
    }
    Matrix ffn_out = layer.down_proj.apply(c.act);

    Matrix out(d, t_len);
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data()[i] = c.mid.data()[i] + ffn_out.data()[i];
    return out;
}

inline Matrix train_layer_backward(const TransformerLayer& layer, FfnKind kind,
                                   std::size_t n_heads, const Matrix& dout, LayerCaches& c,
                                   LayerGrads& g) {
    const std::size_t d = dout.rows();
    const std::size_t t_len = dout.cols();
    const std::size_t dh = d / n_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    // FFN branch.
    Matrix dact = dense_backward(layer.down_proj, c.act, dout, g.down);
    Matrix dffn_in;
    if (kind == FfnKind::Gated) {
        Matrix dgate(c.gate.rows(), c.gate.cols());
        Matrix dup(c.up.rows(), c.up.cols());
        for (std::size_t i = 0; i < dact.size(); ++i) {
            const double gv = c.gate.data()[i];
            const double sig = 1.0 / (1.0 + std::exp(-gv));
            const double sg = gv * sig;
            dup.data()[i] = dact.data()[i] * sg;
            dgate.data()[i] = dact.data()[i] * c.up.data()[i] * (sig * (1.0 + gv * (1.0 - sig)));
        }
        dffn_in = dense_backward(layer.gate_proj, c.ffn_in, dgate, g.gate);
        Matrix dffn_in2 = dense_backward(layer.up_proj, c.ffn_in, dup, g.up);
        for (std::size_t i = 0; i < dffn_in.size(); ++i)
            dffn_in.data()[i] += dffn_in2.data()[i];
    } else {
        Matrix dup(c.up.rows(), c.up.cols());
        const double cc = 0.7978845608028654;
        for (std::size_t i = 0; i < dact.size(); ++i) {
            const double xv = c.up.data()[i];
            const double t = std::tanh(cc * (xv + 0.044715 * xv * xv * xv));
            const double dt = (1.0 - t * t) * cc * (1.0 + 3.0 * 0.044715 * xv * xv);
            dup.data()[i] = dact.data()[i] * (0.5 * (1.0 + t) + 0.5 * xv * dt);
        }
        dffn_in = dense_backward(layer.up_proj, c.ffn_in, dup, g.up);
    }
    Matrix dmid = ln_backward(dffn_in, layer.ln2, c.ln2, g.ln2_scale, g.ln2_shift);
    for (std::size_t i = 0; i < dmid.size(); ++i) dmid.data()[i] += dout.data()[i];

    // Attention branch.
    Matrix dctx = dense_backward(layer.o_proj, c.ctx, dmid, g.o);
    const Matrix dctx_t = linalg::transpose(dctx);
    Matrix dq_t(t_len, d), dk_t(t_len, d), dv_t(t_len, d);
    std::vector<double> dp(t_len), ds(t_len);
    for (std::size_t h = 0; h < n_heads; ++h) {
        const std::size_t r0 = h * dh;
        const Matrix& p = c.probs[h];
        for (std::size_t i = 0; i < t_len; ++i) {
            const double* dci = dctx_t.row(i) + r0;
            double dot = 0.0;
            for (std::size_t j = 0; j <= i; ++j) {
                const double* vj = c.vt.row(j) + r0;
                double sum = 0.0;
                for (std::size_t r = 0; r < dh; ++r) sum += dci[r] * vj[r];
                dp[j] = sum;
                dot += p(i, j) * sum;
            }
            double* dqi = dq_t.row(i) + r0;
            for (std::size_t j = 0; j <= i; ++j) {
                ds[j] = p(i, j) * (dp[j] - dot) * inv_sqrt;
                const double pij = p(i, j);
                const double dsj = ds[j];
                const double* kj = c.kt.row(j) + r0;
                const double* qi = c.qt.row(i) + r0;
                double* dvj = dv_t.row(j) + r0;
                double* dkj = dk_t.row(j) + r0;
                for (std::size_t r = 0; r < dh; ++r) {
                    dvj[r] += pij * dci[r];
                    dqi[r] += dsj * kj[r];
                    dkj[r] += dsj * qi[r];
                }
            }
        }
    }
    Matrix dq = linalg::transpose(dq_t);
    Matrix dk = linalg::transpose(dk_t);
    Matrix dv = linalg::transpose(dv_t);
    Matrix dattn_in = dense_backward(layer.q_proj, c.attn_in, dq, g.q);
    Matrix tmp = dense_backward(layer.k_proj, c.attn_in, dk, g.k);
    for (std::size_t i = 0; i < dattn_in.size(); ++i) dattn_in.data()[i] += tmp.data()[i];
    tmp = dense_backward(layer.v_proj, c.attn_in, dv, g.v);
    for (std::size_t i = 0; i < dattn_in.size(); ++i) dattn_in.data()[i] += tmp.data()[i];

    Matrix dx = ln_backward(dattn_in, layer.ln1, c.ln1, g.ln1_scale, g.ln1_shift);
    for (std::size_t i = 0; i < dx.size(); ++i) dx.data()[i] += dmid.data()[i];
    return dx;
}

/// Loss and parameter gradients for one sequence. Returns the mean
/// next-token cross entropy.
inline double sequence_loss_and_grads(Model& m, std::span<const int> tokens, ModelGrads& g) {
    const std::size_t t_len = tokens.size();
    const std::size_t n_layers = m.layers.size();
    Matrix x = embed_tokens(m, tokens);

    std::vector<LayerCaches> caches(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) {
        x = train_layer_forward(m.layers[l], m.config.ffn_kind, m.config.n_heads, x, caches[l]);
    }
    LnCache fn_cache;
    Matrix xf = ln_forward(x, m.final_norm, fn_cache);
    Matrix logits = m.lm_head.apply(xf);

    const std::size_t n_pred = t_len - 1;
    double loss = 0.0;
    Matrix dlogits(logits.rows(), logits.cols());
    for (std::size_t t = 0; t < n_pred; ++t) {
        double mx = logits(0, t);
        for (std::size_t i = 1; i < logits.rows(); ++i) mx = std::max(mx, logits(i, t));
        double denom = 0.0;
        for (std::size_t i = 0; i < logits.rows(); ++i) denom += std::exp(logits(i, t) - mx);
        const auto target = static_cast<std::size_t>(tokens[t + 1]);
        loss += (mx + std::log(denom)) - logits(target, t);
        const double inv_n = 1.0 / static_cast<double>(n_pred);
        for (std::size_t i = 0; i < logits.rows(); ++i)
            dlogits(i, t) = std::exp(logits(i, t) - mx) / denom * inv_n;
        dlogits(target, t) -= inv_n;
    }
    loss /= static_cast<double>(n_pred);

    Matrix dxf = dense_backward(m.lm_head, xf, dlogits, g.head);
    Matrix dx = ln_backward(dxf, m.final_norm, fn_cache, g.fn_scale, g.fn_shift);
    for (std::size_t l = n_layers; l-- > 0;) {
        dx = train_layer_backward(m.layers[l], m.config.ffn_kind, m.config.n_heads, dx, caches[l],
                                  g.layers[l]);
        caches[l] = LayerCaches{};  // release memory as we go
    }
    // Embedding gradients.
    for (std::size_t t = 0; t < t_len; ++t) {
        const auto tok = static_cast<std::size_t>(tokens[t]);
        for (std::size_t i = 0; i < m.config.d_model; ++i) {
            g.embedding(tok, i) += dx(i, t);
            g.pos_embedding(t, i) += dx(i, t);
        }
    }
    return loss;
}

}  // namespace detail

/// Trains a fresh toy model on a byte corpus with Adam. Fully deterministic
/// per seed. The last holdout_fraction of the corpus never feeds training and
/// provides the held-out cross entropy.
inline TrainResult train_toy(const ModelConfig& model_config, const std::vector<std::uint8_t>& corpus,
                             const TrainConfig& cfg) {
    if (corpus.size() < 64 * 1024) {
        throw Error("corpus too small: " + std::to_string(corpus.size()) +
                    " bytes < 64 KiB minimum");
    }
    const std::size_t train_len =
        static_cast<std::size_t>(static_cast<double>(corpus.size()) * (1.0 - cfg.holdout_fraction));
    if (train_len < cfg.seq_len + 1) throw Error("training split shorter than a sequence");
    std::vector<std::uint8_t> train_bytes(corpus.begin(),
                                          corpus.begin() + static_cast<std::ptrdiff_t>(train_len));
    std::vector<std::uint8_t> holdout_bytes(corpus.begin() + static_cast<std::ptrdiff_t>(train_len),
                                            corpus.end());

    Rng init_rng = Rng(cfg.seed).derive("init");
    Model m = build_model(model_config, init_rng);
    detail::ModelGrads grads = detail::make_grads(m);
    detail::ModelGrads adam_m = detail::make_grads(m);
    detail::ModelGrads adam_v = detail::make_grads(m);

    Rng batch_rng = Rng(cfg.seed).derive("batches");
    const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

    TrainResult result;
    double loss = 0.0;
    for (std::size_t step = 1; step <= cfg.steps; ++step) {
        Batch batch = byte_tokenize(train_bytes, cfg.seq_len, cfg.batch_size, batch_rng.next_u64());

        detail::for_each_param(m, grads, [](double*, double* gp, std::size_t n) {
            for (std::size_t i = 0; i < n; ++i) gp[i] = 0.0;
        });
        loss = 0.0;
        for (std::size_t s = 0; s < batch.n_samples; ++s)
            loss += detail::sequence_loss_and_grads(m, batch.row(s), grads);
        loss /= static_cast<double>(batch.n_samples);
        if (!std::isfinite(loss)) {
            throw DivergenceError("training diverged at step " + std::to_string(step));
        }

        const double scale = 1.0 / static_cast<double>(batch.n_samples);
        double sq_norm = 0.0;
        detail::for_each_param(m, grads, [&](double*, double* gp, std::size_t n) {
            for (std::size_t i = 0; i < n; ++i) {
                gp[i] *= scale;
                sq_norm += gp[i] * gp[i];
            }
        });
        const double gnorm = std::sqrt(sq_norm);
        const double clip_scale = (cfg.grad_clip > 0.0 && gnorm > cfg.grad_clip)
                                      ? cfg.grad_clip / gnorm
                                      : 1.0;

        double lr = cfg.lr;
        if (cfg.warmup_steps > 0 && step < cfg.warmup_steps)
            lr *= static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));

        // Three parallel traversals share the same fixed order, so zip their
        // buffers via pointers captured per tensor.
        struct Slot {
            double* p;
            double* g;
            std::size_t n;
        };
        std::vector<Slot> slots;
        detail::for_each_param(m, grads, [&](double* p, double* gp, std::size_t n) {
            slots.push_back({p, gp, n});
        });
        std::vector<Slot> mslots, vslots;
        detail::for_each_param(m, adam_m, [&](double*, double* gp, std::size_t n) {
            mslots.push_back({nullptr, gp, n});
        });
        detail::for_each_param(m, adam_v, [&](double*, double* gp, std::size_t n) {
            vslots.push_back({nullptr, gp, n});
        });
        for (std::size_t si = 0; si < slots.size(); ++si) {
            double* p = slots[si].p;
            double* gp = slots[si].g;
            double* mp = mslots[si].g;
            double* vp = vslots[si].g;
            for (std::size_t i = 0; i < slots[si].n; ++i) {
                const double gi = gp[i] * clip_scale;
                mp[i] = beta1 * mp[i] + (1.0 - beta1) * gi;
                vp[i] = beta2 * vp[i] + (1.0 - beta2) * gi * gi;
                const double mhat = mp[i] / bc1;
                const double vhat = vp[i] / bc2;
                p[i] -= lr * mhat / (std::sqrt(vhat) + adam_eps);
            }
        }

        if (step == 1 || step % cfg.log_every == 0 || step == cfg.steps) {
            result.curve.push_back({step, loss});
        }
    }

    result.final_loss = loss;
    if (holdout_bytes.size() >= cfg.seq_len) {
        Batch hb = byte_tokenize(holdout_bytes, cfg.seq_len, 16,
                                 Rng(cfg.seed).derive("holdout").next_u64());
        result.holdout_cross_entropy = cross_entropy(m, hb);
        result.holdout_bits_per_byte = result.holdout_cross_entropy / std::log(2.0);
    }
    result.model = std::move(m);
    return result;
}

}  // namespace comp
