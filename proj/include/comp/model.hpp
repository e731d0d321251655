#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "comp/errors.hpp"
#include "comp/linalg.hpp"
#include "comp/matrix.hpp"
#include "comp/rng.hpp"

namespace comp {

enum class FfnKind { Gated, Plain };

inline std::string to_string(FfnKind k) { return k == FfnKind::Gated ? "gated" : "plain"; }

inline FfnKind ffn_kind_from_string(const std::string& s) {
    if (s == "gated") return FfnKind::Gated;
    if (s == "plain") return FfnKind::Plain;
    throw Error("unknown ffn kind: " + s);
}

struct ModelConfig {
    std::size_t n_layers = 8;
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t d_ff = 176;
    std::size_t vocab = 256;
    std::size_t max_seq = 128;
    FfnKind ffn_kind = FfnKind::Gated;

    void validate() const {
        if (d_model == 0 || n_heads == 0 || d_ff == 0 || vocab == 0 || max_seq == 0) {
            throw Error("model config: zero dimension");
        }
        if (d_model % n_heads != 0) {
            throw Error("model config: d_model " + std::to_string(d_model) +
                        " not divisible by n_heads " + std::to_string(n_heads));
        }
        if (n_layers < 4) {
            throw Error("model config: need at least 4 layers, got " +
                        std::to_string(n_layers));
        }
    }
};

/// One linear map together with its prune state. The forward path always
/// computes W (tuned_mask o x) + b, so masks are honored everywhere.
struct DenseLayer {
    std::string name;
    Matrix weight;       // p x q
    Vector bias;         // p
    Vector binary_mask;  // q, entries in {0, 1}
    Vector tuned_mask;   // q, zero exactly where binary_mask is zero

    std::size_t out_dim() const { return weight.rows(); }
    std::size_t in_dim() const { return weight.cols(); }

    std::size_t pruned_columns() const {
        std::size_t c = 0;
        for (std::size_t j = 0; j < binary_mask.len(); ++j)
            if (binary_mask[j] == 0.0) ++c;
        return c;
    }

    /// Weight + bias parameters.
    std::size_t param_count() const { return weight.size() + bias.len(); }

    /// Parameters removed by the current binary mask (one column per neuron).
    std::size_t pruned_param_count() const { return out_dim() * pruned_columns(); }

    Matrix apply(const Matrix& x) const {
        if (x.rows() != in_dim()) {
            throw DimensionError("dense " + name + ": input rows " + std::to_string(x.rows()) +
                                 " != " + std::to_string(in_dim()));
        }
        Matrix masked(x.rows(), x.cols());
        for (std::size_t j = 0; j < x.rows(); ++j) {
            const double m = tuned_mask[j];
            const double* src = x.row(j);
            double* dst = masked.row(j);
            for (std::size_t t = 0; t < x.cols(); ++t) dst[t] = m * src[t];
        }
        Matrix out = linalg::matmul(weight, masked);
        for (std::size_t i = 0; i < out.rows(); ++i) {
            const double b = bias[i];
            double* r = out.row(i);
            for (std::size_t t = 0; t < out.cols(); ++t) r[t] += b;
        }
        return out;
    }
};

inline DenseLayer make_dense(std::string name, std::size_t out_dim, std::size_t in_dim) {
    DenseLayer d;
    d.name = std::move(name);
    d.weight = Matrix(out_dim, in_dim);
    d.bias = Vector(out_dim);
    d.binary_mask = Vector::ones(in_dim);
    d.tuned_mask = Vector::ones(in_dim);
    return d;
}

struct LayerNormParams {
    Vector scale;
    Vector shift;
};

inline constexpr double kLayerNormEps = 1e-5;

struct TransformerLayer {
    std::size_t original_index = 0;
    LayerNormParams ln1, ln2;
    DenseLayer q_proj, k_proj, v_proj, o_proj;
    DenseLayer gate_proj;  // unused when the FFN is plain
    DenseLayer up_proj, down_proj;

    std::vector<DenseLayer*> denses(FfnKind kind) {
        std::vector<DenseLayer*> out{&q_proj, &k_proj, &v_proj, &o_proj};
        if (kind == FfnKind::Gated) out.push_back(&gate_proj);
        out.push_back(&up_proj);
        out.push_back(&down_proj);
        return out;
    }
    std::vector<const DenseLayer*> denses(FfnKind kind) const {
        std::vector<const DenseLayer*> out{&q_proj, &k_proj, &v_proj, &o_proj};
        if (kind == FfnKind::Gated) out.push_back(&gate_proj);
        out.push_back(&up_proj);
        out.push_back(&down_proj);
        return out;
    }

    std::size_t dense_param_count(FfnKind kind) const {
        std::size_t n = 0;
        for (const DenseLayer* d : denses(kind)) n += d->param_count();
        return n;
    }
    std::size_t param_count(FfnKind kind) const {
        return dense_param_count(kind) + ln1.scale.len() + ln1.shift.len() + ln2.scale.len() +
               ln2.shift.len();
    }
};

struct Model {
    ModelConfig config;
    Matrix embedding;      // vocab x d_model
    Matrix pos_embedding;  // max_seq x d_model
    std::vector<TransformerLayer> layers;
    LayerNormParams final_norm;
    DenseLayer lm_head;  // vocab x d_model

    std::size_t param_count() const {
        std::size_t n = embedding.size() + pos_embedding.size();
        for (const auto& l : layers) n += l.param_count(config.ffn_kind);
        n += final_norm.scale.len() + final_norm.shift.len();
        n += lm_head.param_count();
        return n;
    }

    /// Parameters currently removed: whole pruned layers are already gone from
    /// the layer list, so this counts masked-out dense columns.
    std::size_t pruned_param_count() const {
        std::size_t n = 0;
        for (const auto& l : layers)
            for (const DenseLayer* d : l.denses(config.ffn_kind)) n += d->pruned_param_count();
        return n;
    }
};

namespace detail {

inline void init_dense(DenseLayer& d, Rng& rng, double std_dev) {
    for (std::size_t i = 0; i < d.weight.size(); ++i) d.weight.data()[i] = std_dev * rng.gaussian();
}

}  // namespace detail

/// Fresh model with GPT-style initialization: N(0, 0.02) weights, residual
/// output projections scaled down by sqrt(2 L), unit norms, zero biases.
inline Model build_model(const ModelConfig& config, Rng& rng) {
    config.validate();
    Model m;
    m.config = config;
    const double base_std = 0.02;
    const double resid_std = base_std / std::sqrt(2.0 * static_cast<double>(config.n_layers));

    m.embedding = Matrix(config.vocab, config.d_model);
    for (std::size_t i = 0; i < m.embedding.size(); ++i)
        m.embedding.data()[i] = base_std * rng.gaussian();
    m.pos_embedding = Matrix(config.max_seq, config.d_model);
    for (std::size_t i = 0; i < m.pos_embedding.size(); ++i)
        m.pos_embedding.data()[i] = base_std * rng.gaussian();

    for (std::size_t l = 0; l < config.n_layers; ++l) {
        TransformerLayer layer;
        layer.original_index = l;
        layer.ln1 = {Vector::ones(config.d_model), Vector(config.d_model)};
        layer.ln2 = {Vector::ones(config.d_model), Vector(config.d_model)};
        layer.q_proj = make_dense("q_proj", config.d_model, config.d_model);
        layer.k_proj = make_dense("k_proj", config.d_model, config.d_model);
        layer.v_proj = make_dense("v_proj", config.d_model, config.d_model);
        layer.o_proj = make_dense("o_proj", config.d_model, config.d_model);
        layer.gate_proj = make_dense("gate_proj", config.ffn_kind == FfnKind::Gated ? config.d_ff : 0,
                                     config.ffn_kind == FfnKind::Gated ? config.d_model : 0);
        layer.up_proj = make_dense("up_proj", config.d_ff, config.d_model);
        layer.down_proj = make_dense("down_proj", config.d_model, config.d_ff);
        detail::init_dense(layer.q_proj, rng, base_std);
        detail::init_dense(layer.k_proj, rng, base_std);
        detail::init_dense(layer.v_proj, rng, base_std);
        detail::init_dense(layer.o_proj, rng, resid_std);
        if (config.ffn_kind == FfnKind::Gated) detail::init_dense(layer.gate_proj, rng, base_std);
        detail::init_dense(layer.up_proj, rng, base_std);
        detail::init_dense(layer.down_proj, rng, resid_std);
        m.layers.push_back(std::move(layer));
    }

    m.final_norm = {Vector::ones(config.d_model), Vector(config.d_model)};
    m.lm_head = make_dense("lm_head", config.vocab, config.d_model);
    detail::init_dense(m.lm_head, rng, base_std);
    return m;
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

/// Column-wise LayerNorm (classic, with scale and shift).
inline Matrix layer_norm(const Matrix& x, const LayerNormParams& p) {
    const std::size_t d = x.rows();
    Matrix out(d, x.cols());
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
        for (std::size_t i = 0; i < d; ++i)
            out(i, t) = (x(i, t) - mean) * inv * p.scale[i] + p.shift[i];
    }
    return out;
}

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }

inline double gelu(double x) {
    // tanh approximation keeps the implementation self-contained
    const double c = 0.7978845608028654;  // sqrt(2/pi)
    return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

/// Causal multi-head attention on d_model x T inputs. Heads are processed on
/// token-major copies so the per-head inner loops run over contiguous memory.
inline Matrix causal_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                               std::size_t n_heads) {
    const std::size_t d = q.rows();
    const std::size_t t_len = q.cols();
    const std::size_t dh = d / n_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    const Matrix qt = linalg::transpose(q);
    const Matrix kt = linalg::transpose(k);
    const Matrix vt = linalg::transpose(v);
    Matrix ctx_t(t_len, d);
    std::vector<double> scores(t_len);
    for (std::size_t h = 0; h < n_heads; ++h) {
        const std::size_t r0 = h * dh;
        for (std::size_t i = 0; i < t_len; ++i) {
            const double* qi = qt.row(i) + r0;
            double mx = -1e300;
            for (std::size_t j = 0; j <= i; ++j) {
                const double* kj = kt.row(j) + r0;
                double s = 0.0;
                for (std::size_t r = 0; r < dh; ++r) s += qi[r] * kj[r];
                scores[j] = s * inv_sqrt;
                mx = std::max(mx, scores[j]);
            }
            double denom = 0.0;
            for (std::size_t j = 0; j <= i; ++j) {
                scores[j] = std::exp(scores[j] - mx);
                denom += scores[j];
            }
            double* ci = ctx_t.row(i) + r0;
            for (std::size_t j = 0; j <= i; ++j) {
                const double w = scores[j] / denom;
                const double* vj = vt.row(j) + r0;
                for (std::size_t r = 0; r < dh; ++r) ci[r] += w * vj[r];
            }
        }
    }
    return linalg::transpose(ctx_t);
}

/// Captured activations of one layer: inputs of every dense, keyed by role.
struct LayerActivations {
    Matrix attn_in;   // input of q/k/v projections
    Matrix attn_ctx;  // input of o_proj
    Matrix ffn_in;    // input of gate/up projections
    Matrix ffn_act;   // input of down_proj
};

/// One layer's forward. When `cap` is non-null the dense inputs are recorded.
inline Matrix layer_forward(const TransformerLayer& layer, FfnKind kind, std::size_t n_heads,
                            const Matrix& x, LayerActivations* cap = nullptr) {
    Matrix attn_in = layer_norm(x, layer.ln1);
    Matrix q = layer.q_proj.apply(attn_in);
    Matrix k = layer.k_proj.apply(attn_in);
    Matrix v = layer.v_proj.apply(attn_in);
    Matrix ctx = causal_attention(q, k, v, n_heads);
    Matrix attn_out = layer.o_proj.apply(ctx);

    Matrix mid(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i)
        mid.data()[i] = x.data()[i] + attn_out.data()[i];

    Matrix ffn_in = layer_norm(mid, layer.ln2);
    Matrix act;
    if (kind == FfnKind::Gated) {
        Matrix gate = layer.gate_proj.apply(ffn_in);
        Matrix up = layer.up_proj.apply(ffn_in);
        act = Matrix(gate.rows(), gate.cols());
        for (std::size_t i = 0; i < act.size(); ++i)
            act.data()[i] = silu(gate.data()[i]) * up.data()[i];
    } else {
        Matrix up = layer.up_proj.apply(ffn_in);
        act = Matrix(up.rows(), up.cols());
        for (std::size_t i = 0; i < act.size(); ++i) act.data()[i] = gelu(up.data()[i]);
    }
    Matrix ffn_out = layer.down_proj.apply(act);

    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i)
        out.data()[i] = mid.data()[i] + ffn_out.data()[i];

    if (cap) {
        cap->attn_in = std::move(attn_in);
        cap->attn_ctx = std::move(ctx);
        cap->ffn_in = std::move(ffn_in);
        cap->ffn_act = std::move(act);
    }
    return out;
}

struct SequenceActivations {
    std::vector<Matrix> layer_io;  // L + 1 boundary matrices, d_model x T
    std::vector<LayerActivations> layers;
};

inline Matrix embed_tokens(const Model& m, std::span<const int> tokens) {
    const std::size_t d = m.config.d_model;
    if (tokens.size() > m.config.max_seq) {
        throw Error("sequence length " + std::to_string(tokens.size()) + " exceeds max_seq " +
                    std::to_string(m.config.max_seq));
    }
    Matrix x(d, tokens.size());
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        const int tok = tokens[t];
        if (tok < 0 || static_cast<std::size_t>(tok) >= m.config.vocab) {
            throw Error("token " + std::to_string(tok) + " out of range (vocab " +
                        std::to_string(m.config.vocab) + ")");
        }
        for (std::size_t i = 0; i < d; ++i)
            x(i, t) = m.embedding(static_cast<std::size_t>(tok), i) + m.pos_embedding(t, i);
    }
    return x;
}

/// Logits (vocab x T) for one token sequence; optionally captures activations.
inline Matrix forward_seq(const Model& m, std::span<const int> tokens,
                          SequenceActivations* cap = nullptr) {
    Matrix x = embed_tokens(m, tokens);
    if (cap) {
        cap->layer_io.clear();
        cap->layers.resize(m.layers.size());
        cap->layer_io.push_back(x);
    }
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        x = layer_forward(m.layers[l], m.config.ffn_kind, m.config.n_heads, x,
                          cap ? &cap->layers[l] : nullptr);
        if (cap) cap->layer_io.push_back(x);
    }
    Matrix xf = layer_norm(x, m.final_norm);
    Matrix logits = m.lm_head.apply(xf);
    logits.ensure_finite("logits");
    return logits;
}

inline Matrix forward(const Model& m, std::span<const int> tokens) {
    return forward_seq(m, tokens);
}

// ---------------------------------------------------------------------------
// Batches and capture
// ---------------------------------------------------------------------------

struct Batch {
    std::size_t n_samples = 0;
    std::size_t seq_len = 0;
    std::vector<int> tokens;  // row-major n_samples x seq_len

    std::span<const int> row(std::size_t i) const {
        return std::span<const int>(tokens.data() + i * seq_len, seq_len);
    }
    std::size_t total_tokens() const { return n_samples * seq_len; }
};

/// Activation capture over a calibration batch. Token count T is
/// n_samples x seq_len; matrices hold one column per token, sequences
/// concatenated in batch order.
struct ActivationTrace {
    std::size_t tokens = 0;
    std::vector<Matrix> layer_io;  // n_layers + 1 boundary matrices
    std::vector<LayerActivations> layers;

    const Matrix& layer_input(std::size_t l) const { return layer_io.at(l); }
    const Matrix& layer_output(std::size_t l) const { return layer_io.at(l + 1); }

    const Matrix& dense_input(std::size_t layer, std::string_view dense_name) const {
        const LayerActivations& a = layers.at(layer);
        if (dense_name == "q_proj" || dense_name == "k_proj" || dense_name == "v_proj")
            return a.attn_in;
        if (dense_name == "o_proj") return a.attn_ctx;
        if (dense_name == "gate_proj" || dense_name == "up_proj") return a.ffn_in;
        if (dense_name == "down_proj") return a.ffn_act;
        throw Error("unknown dense name: " + std::string(dense_name));
    }

    /// Token-mean input of a dense (the expectation over calibration tokens).
    Vector dense_input_mean(std::size_t layer, std::string_view dense_name) const {
        const Matrix& x = dense_input(layer, dense_name);
        Vector mean(x.rows());
        for (std::size_t i = 0; i < x.rows(); ++i) {
            const double* r = x.row(i);
            double s = 0.0;
            for (std::size_t t = 0; t < x.cols(); ++t) s += r[t];
            mean[i] = s / static_cast<double>(x.cols());
        }
        return mean;
    }
};

namespace detail {

inline void copy_columns(Matrix& dst, const Matrix& src, std::size_t col_offset) {
    for (std::size_t i = 0; i < src.rows(); ++i) {
        const double* s = src.row(i);
        double* d = dst.row(i) + col_offset;
        for (std::size_t t = 0; t < src.cols(); ++t) d[t] = s[t];
    }
}

}  // namespace detail

/// Forward over a batch with full activation capture. Logits come back as one
/// vocab x T matrix with sequences concatenated, matching the trace layout.
inline std::pair<Matrix, ActivationTrace> forward_capture(const Model& m, const Batch& batch) {
    if (batch.n_samples == 0) throw Error("forward_capture: empty batch");
    const std::size_t t_total = batch.total_tokens();
    const std::size_t n_layers = m.layers.size();
    const std::size_t d = m.config.d_model;

    ActivationTrace trace;
    trace.tokens = t_total;
    trace.layer_io.assign(n_layers + 1, Matrix(d, t_total));
    trace.layers.resize(n_layers);
    const std::size_t ff_act_rows = m.config.d_ff;
    for (auto& la : trace.layers) {
        la.attn_in = Matrix(d, t_total);
        la.attn_ctx = Matrix(d, t_total);
        la.ffn_in = Matrix(d, t_total);
        la.ffn_act = Matrix(ff_act_rows, t_total);
    }
    Matrix logits(m.config.vocab, t_total);

    for (std::size_t s = 0; s < batch.n_samples; ++s) {
        SequenceActivations seq;
        Matrix seq_logits = forward_seq(m, batch.row(s), &seq);
        const std::size_t off = s * batch.seq_len;
        detail::copy_columns(logits, seq_logits, off);
        for (std::size_t l = 0; l <= n_layers; ++l)
            detail::copy_columns(trace.layer_io[l], seq.layer_io[l], off);
        for (std::size_t l = 0; l < n_layers; ++l) {
            detail::copy_columns(trace.layers[l].attn_in, seq.layers[l].attn_in, off);
            detail::copy_columns(trace.layers[l].attn_ctx, seq.layers[l].attn_ctx, off);
            detail::copy_columns(trace.layers[l].ffn_in, seq.layers[l].ffn_in, off);
            detail::copy_columns(trace.layers[l].ffn_act, seq.layers[l].ffn_act, off);
        }
    }
    for (const auto& io : trace.layer_io) io.ensure_finite("trace layer io");
    return {std::move(logits), std::move(trace)};
}

// ---------------------------------------------------------------------------
// Structural edits
// ---------------------------------------------------------------------------

inline void remove_layer(Model& m, std::size_t l) {
    if (l >= m.layers.size()) {
        throw Error("remove_layer: index " + std::to_string(l) + " out of range (" +
                    std::to_string(m.layers.size()) + " layers)");
    }
    m.layers.erase(m.layers.begin() + static_cast<std::ptrdiff_t>(l));
    m.config.n_layers = m.layers.size();
}

/// Folds each tuned mask into the weight columns and resets the masks to the
/// binary pattern. Forward outputs are preserved up to rounding.
inline void fold_masks(Model& m) {
    for (auto& layer : m.layers) {
        for (DenseLayer* d : layer.denses(m.config.ffn_kind)) {
            for (std::size_t j = 0; j < d->in_dim(); ++j) {
                const double f = d->tuned_mask[j];
                if (f == 1.0) continue;
                for (std::size_t i = 0; i < d->out_dim(); ++i) d->weight(i, j) *= f;
            }
            d->tuned_mask = d->binary_mask;
        }
    }
}

}  // namespace comp
