#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "comp/errors.hpp"
#include "comp/eval.hpp"
#include "comp/importance.hpp"
#include "comp/masktune.hpp"
#include "comp/matrix.hpp"
#include "comp/model.hpp"
#include "comp/rng.hpp"
#include "comp/tokenizer.hpp"

namespace comp {

enum class Strategy { Comp, LayerOnly, NeuronOnly };

inline std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::Comp: return "comp";
        case Strategy::LayerOnly: return "layer";
        default: return "neuron";
    }
}

inline Strategy strategy_from_string(const std::string& s) {
    if (s == "comp") return Strategy::Comp;
    if (s == "layer") return Strategy::LayerOnly;
    if (s == "neuron") return Strategy::NeuronOnly;
    throw Error("unknown strategy: " + s);
}

enum class InputPolicy { Identical, Propagated };

inline std::string to_string(InputPolicy p) {
    return p == InputPolicy::Identical ? "identical" : "propagated";
}

struct CalibrationSpec {
    std::size_t n_samples = 10;
    std::size_t seq_len = 128;
};

struct PruneConfig {
    double target_ratio = 0.2;
    long removed_layers = -1;  // negative: derive from the ratio
    double eps_rel = 1e-6;
    double var_step = 1e-3;       // threshold increment per round
    std::size_t neuron_step = 0;  // columns per growth step; 0: max(1, q/64)
    std::size_t exempt_head = 2;  // leading layers never touched
    std::size_t exempt_tail = 1;  // trailing layers never touched
    double dense_cap = 0.95;      // max prunable fraction of a dense's inputs
    TuneSolver solver = TuneSolver::Direct;
    std::uint64_t seed = 0;
    CalibrationSpec calib{10, 128};
    CalibrationSpec eval{16, 128};
    InputPolicy input_policy = InputPolicy::Identical;
    bool recompute_importance = false;
    DenseScoreOptions score_options{};

    std::size_t effective_neuron_step(std::size_t q) const {
        if (neuron_step > 0) return neuron_step;
        return std::max<std::size_t>(1, q / 64);
    }
};

// ---------------------------------------------------------------------------
// Report structures
// ---------------------------------------------------------------------------

struct DenseRecord {
    std::size_t layer_original = 0;
    std::string dense;
    std::size_t in_dim = 0, out_dim = 0;
    std::size_t pruned = 0;     // pruned input neurons (columns)
    std::size_t cap = 0;        // maximum prunable columns
    double variance = 0.0;      // Var of retained tuned-mask entries
    double reconstruction_rms = 0.0;
    double kappa0 = 0.0;
    bool importance_fallback = false;
    bool tune_kept_binary = false;
    std::size_t tune_calls = 0;
};

struct LayerNeuronRecord {
    std::size_t layer_original = 0;
    double importance = 0.0;
    double weight = 0.0;       // allocation weight w_l
    double budget = 0.0;       // parameters to prune in this layer
    double ratio = 0.0;        // budget / dense parameter count
    std::size_t achieved = 0;  // parameters actually pruned
    bool shortfall = false;
    double final_var_threshold = 0.0;
    std::size_t rounds = 0;
    std::vector<DenseRecord> denses;
};

struct LayerPhaseRecord {
    // One score vector per removal iteration, keyed by original layer index.
    std::vector<std::vector<LayerScore>> history;
    std::vector<std::size_t> removed_original_indices;
};

struct PruneReport {
    std::string strategy;
    std::string input_policy;
    double target_ratio = 0.0;
    long removed_layers_requested = 0;
    std::size_t removed_layers = 0;
    std::size_t params_total = 0;
    std::size_t removal_credit = 0;      // parameters removed with whole layers
    double neuron_budget_total = 0.0;
    std::size_t neuron_pruned_total = 0;
    double achieved_ratio = 0.0;
    bool shortfall = false;
    LayerPhaseRecord layer_phase;
    std::vector<LayerNeuronRecord> neuron_phase;
    double perplexity_before = 0.0;
    double perplexity_after = 0.0;
    double fidelity_kl = 0.0;
    double fidelity_logit_mse = 0.0;
};

// ---------------------------------------------------------------------------
// Layer phase
// ---------------------------------------------------------------------------

/// Exemption applies to original positions: the first exempt_head and the
/// last exempt_tail layers of the unpruned model are never touched.
inline bool layer_exempt(std::size_t original_index, std::size_t original_n_layers,
                         const PruneConfig& cfg) {
    if (original_index < cfg.exempt_head) return true;
    if (original_index + cfg.exempt_tail >= original_n_layers) return true;
    return false;
}

/// Scores every current layer from one capture of the current model.
inline std::vector<LayerScore> score_all_layers(const Model& m, const Batch& calib) {
    auto [logits, trace] = forward_capture(m, calib);
    (void)logits;
    std::vector<LayerScore> scores;
    scores.reserve(m.layers.size());
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        LayerScore s = layer_importance(trace, l);
        s.layer = m.layers[l].original_index;
        scores.push_back(s);
    }
    return scores;
}

/// Removes n layers one at a time. Each iteration re-captures the current
/// model, scores every layer, and drops the least important removable one
/// (ties toward the lower index).
inline LayerPhaseRecord iterative_layer_prune(Model& m, const Batch& calib, std::size_t n,
                                              const PruneConfig& cfg,
                                              std::size_t original_n_layers) {
    LayerPhaseRecord record;
    for (std::size_t iter = 0; iter < n; ++iter) {
        std::vector<LayerScore> scores = score_all_layers(m, calib);
        record.history.push_back(scores);
        std::size_t best = m.layers.size();
        double best_importance = std::numeric_limits<double>::infinity();
        for (std::size_t l = 0; l < m.layers.size(); ++l) {
            if (layer_exempt(m.layers[l].original_index, original_n_layers, cfg)) continue;
            if (scores[l].importance < best_importance) {
                best_importance = scores[l].importance;
                best = l;
            }
        }
        if (best == m.layers.size()) {
            throw InfeasibleError("iterative_layer_prune: no removable layer left");
        }
        record.removed_original_indices.push_back(m.layers[best].original_index);
        remove_layer(m, best);
    }
    return record;
}

/// One-shot variant: a single scoring pass on the full model picks all n
/// victims at once. Used by the layer-ordering ablation.
inline std::vector<std::size_t> one_shot_layer_order(const Model& m, const Batch& calib,
                                                     std::size_t n, const PruneConfig& cfg) {
    std::vector<LayerScore> scores = score_all_layers(m, calib);
    std::vector<std::size_t> candidates;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        if (!layer_exempt(m.layers[l].original_index, m.layers.size(), cfg))
            candidates.push_back(l);
    }
    std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
        return scores[a].importance < scores[b].importance;
    });
    if (candidates.size() < n) {
        throw InfeasibleError("one_shot_layer_order: not enough removable layers");
    }
    std::vector<std::size_t> order(candidates.begin(),
                                   candidates.begin() + static_cast<std::ptrdiff_t>(n));
    std::vector<std::size_t> originals;
    for (std::size_t l : order) originals.push_back(m.layers[l].original_index);
    return originals;
}

// ---------------------------------------------------------------------------
// Ratio allocation
// ---------------------------------------------------------------------------

struct RatioPlanEntry {
    std::size_t current_index = 0;
    std::size_t original_index = 0;
    double importance = 0.0;
    double weight = 0.0;
    double budget = 0.0;  // parameters to prune
    double ratio = 0.0;   // budget relative to the layer's dense parameters
    std::size_t cap = 0;  // maximum prunable parameters
};

struct RatioPlan {
    double neuron_budget_total = 0.0;
    std::vector<RatioPlanEntry> layers;
};

/// Inverse-importance weights over the remaining non-exempt layers: less
/// important layers absorb more of the remaining budget. Budgets above a
/// layer's cap are clipped and redistributed proportionally.
inline RatioPlan allocate_ratios(const Model& m, const std::vector<LayerScore>& scores,
                                 double neuron_budget_total, const PruneConfig& cfg,
                                 std::size_t original_n_layers) {
    RatioPlan plan;
    plan.neuron_budget_total = neuron_budget_total;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        if (layer_exempt(m.layers[l].original_index, original_n_layers, cfg)) continue;
        RatioPlanEntry e;
        e.current_index = l;
        e.original_index = m.layers[l].original_index;
        e.importance = std::max(scores[l].importance, 1e-12);
        std::size_t cap = 0;
        for (const DenseLayer* d : m.layers[l].denses(m.config.ffn_kind)) {
            cap += d->out_dim() *
                   static_cast<std::size_t>(std::floor(cfg.dense_cap *
                                                       static_cast<double>(d->in_dim())));
        }
        e.cap = cap;
        plan.layers.push_back(e);
    }
    // No prunable layers (every layer exempt) degrades to an identity run;
    // the caller reports the shortfall.
    if (neuron_budget_total <= 0.0 || plan.layers.empty()) return plan;

    double cap_total = 0.0;
    for (const auto& e : plan.layers) cap_total += static_cast<double>(e.cap);
    if (neuron_budget_total > cap_total) {
        throw InfeasibleError("allocate_ratios: budget of " + std::to_string(neuron_budget_total) +
                              " parameters exceeds the prunable capacity " +
                              std::to_string(cap_total) +
                              "; raise the removed-layer count or lower the ratio");
    }

    double inv_sum = 0.0;
    for (const auto& e : plan.layers) inv_sum += 1.0 / e.importance;
    for (auto& e : plan.layers) e.weight = (1.0 / e.importance) / inv_sum;

    // Proportional clipping to per-layer caps until a fixpoint.
    std::vector<bool> clipped(plan.layers.size(), false);
    std::vector<double> budget(plan.layers.size(), 0.0);
    double remaining = neuron_budget_total;
    bool changed = true;
    while (changed) {
        changed = false;
        double free_weight = 0.0;
        for (std::size_t i = 0; i < plan.layers.size(); ++i)
            if (!clipped[i]) free_weight += plan.layers[i].weight;
        if (free_weight <= 0.0) break;
        for (std::size_t i = 0; i < plan.layers.size(); ++i) {
            if (clipped[i]) continue;
            budget[i] = remaining * plan.layers[i].weight / free_weight;
            if (budget[i] > static_cast<double>(plan.layers[i].cap)) {
                budget[i] = static_cast<double>(plan.layers[i].cap);
                clipped[i] = true;
                remaining -= budget[i];
                changed = true;
                // restart the proportional split among the still-open layers
                for (std::size_t k = 0; k < plan.layers.size(); ++k)
                    if (!clipped[k]) budget[k] = 0.0;
                break;
            }
        }
    }
    for (std::size_t i = 0; i < plan.layers.size(); ++i) {
        plan.layers[i].budget = budget[i];
        std::size_t dense_params = 0;
        for (const DenseLayer* d : m.layers[plan.layers[i].current_index].denses(m.config.ffn_kind))
            dense_params += d->param_count();
        plan.layers[i].ratio = budget[i] / static_cast<double>(dense_params);
    }
    return plan;
}

// ---------------------------------------------------------------------------
// Neuron phase
// ---------------------------------------------------------------------------

namespace detail {

struct DenseTuneState {
    DenseLayer* dense = nullptr;
    const Matrix* inputs = nullptr;  // policy-trace activations for this dense
    Vector x_mean;
    std::vector<std::size_t> ranking;
    std::size_t rank_pos = 0;   // how many ranking entries are consumed
    std::size_t cap = 0;        // max prunable columns
    double variance = 0.0;      // Var of the current tuned mask
    Matrix s_cache, c_cache, y_cache;
    DenseRecord record;
    bool ranked = false;
};

inline void rank_state(DenseTuneState& st, const PruneConfig& cfg) {
    NeuronScores scores = score_dense_neurons(*st.dense, st.x_mean, cfg.score_options);
    st.ranking = rank_neurons(scores);
    st.rank_pos = 0;  // already-pruned entries are skipped during consumption
    st.record.kappa0 = scores.kappa0;
    st.record.importance_fallback |= scores.used_fallback;
    st.ranked = true;
}

inline TuneResult retune(DenseTuneState& st, const PruneConfig& cfg) {
    TuneProblem p;
    p.weight = &st.dense->weight;
    p.inputs = st.inputs;
    p.binary_mask = st.dense->binary_mask;
    p.eps_rel = cfg.eps_rel;
    p.solver = cfg.solver;
    p.s_cache = &st.s_cache;
    p.c_cache = &st.c_cache;
    p.y_cache = &st.y_cache;
    TuneResult r = tune_mask(p);
    st.dense->tuned_mask = r.tuned_mask;
    st.variance = r.variance;
    st.record.variance = r.variance;
    st.record.reconstruction_rms = r.residual_rms;
    st.record.tune_kept_binary = r.kept_binary;
    st.record.tune_calls += 1;
    return r;
}

}  // namespace detail

/// Variance-threshold loop for one layer. The threshold starts at zero and
/// rises by var_step per round; within a round each dense, in the fixed order
/// q,k,v,o,gate,up,down, grows its pruned set along the cached importance
/// ranking while the tuned-mask variance stays below the threshold, retuning
/// after every growth step. Ends when the layer's pruned-parameter count
/// reaches the budget or every dense is capped (reported as shortfall).
inline LayerNeuronRecord prune_layer_neurons(Model& m, std::size_t layer_index,
                                             const ActivationTrace& trace,
                                             std::size_t trace_layer_index, double budget,
                                             const PruneConfig& cfg) {
    TransformerLayer& layer = m.layers[layer_index];
    LayerNeuronRecord rec;
    rec.layer_original = layer.original_index;
    rec.budget = budget;

    std::vector<detail::DenseTuneState> states;
    for (DenseLayer* d : layer.denses(m.config.ffn_kind)) {
        detail::DenseTuneState st;
        st.dense = d;
        st.inputs = &trace.dense_input(trace_layer_index, d->name);
        st.x_mean = trace.dense_input_mean(trace_layer_index, d->name);
        st.cap = static_cast<std::size_t>(
            std::floor(cfg.dense_cap * static_cast<double>(d->in_dim())));
        st.record.layer_original = layer.original_index;
        st.record.dense = d->name;
        st.record.in_dim = d->in_dim();
        st.record.out_dim = d->out_dim();
        st.record.cap = st.cap;
        st.s_cache = linalg::matmul(linalg::transpose(d->weight), d->weight);
        st.c_cache = linalg::matmul(*st.inputs, linalg::transpose(*st.inputs));
        st.y_cache = linalg::matmul(d->weight, *st.inputs);
        states.push_back(std::move(st));
    }

    auto layer_pruned_params = [&]() {
        std::size_t total = 0;
        for (const auto& st : states) total += st.dense->pruned_param_count();
        return total;
    };
    const std::size_t initial_pruned = layer_pruned_params();

    double v_threshold = 0.0;
    std::size_t rounds = 0;
    const std::size_t max_rounds = 2000000;
    while (static_cast<double>(layer_pruned_params() - initial_pruned) < budget) {
        bool any_open = false;
        for (auto& st : states) {
            const std::size_t p_out = st.dense->out_dim();
            while (st.dense->pruned_columns() < st.cap && st.variance < v_threshold &&
                   static_cast<double>(layer_pruned_params() - initial_pruned) < budget) {
                if (!st.ranked || cfg.recompute_importance) detail::rank_state(st, cfg);
                const double missing =
                    budget - static_cast<double>(layer_pruned_params() - initial_pruned);
                std::size_t grow = std::min(
                    cfg.effective_neuron_step(st.dense->in_dim()),
                    static_cast<std::size_t>(
                        std::ceil(missing / static_cast<double>(p_out))));
                grow = std::min(grow, st.cap - st.dense->pruned_columns());
                std::size_t taken = 0;
                while (taken < grow && st.rank_pos < st.ranking.size()) {
                    const std::size_t victim = st.ranking[st.rank_pos++];
                    if (st.dense->binary_mask[victim] == 0.0) continue;
                    st.dense->binary_mask[victim] = 0.0;
                    st.dense->tuned_mask[victim] = 0.0;
                    ++taken;
                }
                if (taken == 0) break;
                detail::retune(st, cfg);
            }
            if (st.dense->pruned_columns() < st.cap) any_open = true;
        }
        if (static_cast<double>(layer_pruned_params() - initial_pruned) >= budget) break;
        if (!any_open) break;  // every dense capped: shortfall
        v_threshold += cfg.var_step;
        if (++rounds > max_rounds) {
            throw Error("prune_layer_neurons: variance threshold loop did not terminate");
        }
    }

    rec.achieved = layer_pruned_params() - initial_pruned;
    rec.shortfall = static_cast<double>(rec.achieved) < budget;
    rec.final_var_threshold = v_threshold;
    rec.rounds = rounds;
    for (auto& st : states) {
        st.record.pruned = st.dense->pruned_columns();
        rec.denses.push_back(st.record);
    }
    return rec;
}

// ---------------------------------------------------------------------------
// Full pipelines
// ---------------------------------------------------------------------------

namespace detail {

inline std::size_t full_layer_params(const Model& m, std::size_t layer_index) {
    return m.layers[layer_index].param_count(m.config.ffn_kind);
}

inline double mean_layer_params(const Model& m) {
    double total = 0.0;
    for (std::size_t l = 0; l < m.layers.size(); ++l)
        total += static_cast<double>(full_layer_params(m, l));
    return total / static_cast<double>(m.layers.size());
}

inline std::size_t removable_layers(const Model& m, const PruneConfig& cfg) {
    const std::size_t exempt = std::min(m.layers.size(),
                                        cfg.exempt_head + cfg.exempt_tail);
    return m.layers.size() - exempt;
}

}  // namespace detail

/// Default removed-layer count when the caller does not pin one: as many
/// whole layers as fit under the target, mirroring the coarse-then-fine phase
/// order; the neuron phase absorbs the remainder.
inline std::size_t derive_removed_layers(const Model& m, double ratio, const PruneConfig& cfg) {
    const double n_mean = detail::mean_layer_params(m);
    const double n_total = static_cast<double>(m.param_count());
    const auto n = static_cast<std::size_t>(std::floor(ratio * n_total / n_mean));
    return std::min(n, detail::removable_layers(m, cfg));
}

struct PruneOutcome {
    Model model;
    PruneReport report;
};

/// The hybrid pipeline: iterative layer removal, inverse-importance ratio
/// allocation, then the per-layer variance-threshold neuron loop with mask
/// tuning, mask folding, and evaluation.
inline PruneOutcome run_comp(const Model& input_model, const std::vector<std::uint8_t>& corpus,
                             const PruneConfig& cfg) {
    if (cfg.target_ratio <= 0.0 || cfg.target_ratio >= 1.0) {
        throw InfeasibleError("run_comp: ratio must be in (0, 1)");
    }
    Model model = input_model;
    const Model& original = input_model;
    const std::size_t original_n_layers = model.layers.size();
    const std::size_t n_total = model.param_count();

    std::size_t n_remove;
    if (cfg.removed_layers < 0) {
        n_remove = derive_removed_layers(model, cfg.target_ratio, cfg);
    } else {
        n_remove = static_cast<std::size_t>(cfg.removed_layers);
    }
    if (n_remove > detail::removable_layers(model, cfg)) {
        throw InfeasibleError("run_comp: cannot remove " + std::to_string(n_remove) +
                              " layers; only " +
                              std::to_string(detail::removable_layers(model, cfg)) +
                              " are removable");
    }
    if (static_cast<double>(n_remove) * detail::mean_layer_params(model) >
        cfg.target_ratio * static_cast<double>(n_total) * (1.0 + 1e-9)) {
        throw InfeasibleError("run_comp: layer phase alone overshoots the target ratio; "
                              "lower the removed-layer count");
    }

    Batch calib = byte_tokenize(corpus, cfg.calib.seq_len, cfg.calib.n_samples, cfg.seed);
    Batch eval_batch = byte_tokenize(corpus, cfg.eval.seq_len, cfg.eval.n_samples,
                                     Rng(cfg.seed).derive("eval").next_u64());

    PruneReport report;
    report.strategy = to_string(Strategy::Comp);
    report.input_policy = to_string(cfg.input_policy);
    report.target_ratio = cfg.target_ratio;
    report.removed_layers_requested = static_cast<long>(n_remove);
    report.params_total = n_total;
    report.perplexity_before = perplexity(original, eval_batch);

    // Phase 1: layer-grained pruning on the live model.
    report.layer_phase = iterative_layer_prune(model, calib, n_remove, cfg, original_n_layers);
    report.removed_layers = n_remove;
    std::size_t removal_credit = 0;
    {
        std::size_t before = original.param_count();
        std::size_t after = model.param_count();
        removal_credit = before - after;
    }
    report.removal_credit = removal_credit;

    const double budget_total = std::max(
        0.0, std::round(cfg.target_ratio * static_cast<double>(n_total)) -
                 static_cast<double>(removal_credit));

    // Phase 2: allocation from fresh scores of the layer-pruned model.
    std::vector<LayerScore> scores_now = score_all_layers(model, calib);
    RatioPlan plan = allocate_ratios(model, scores_now, budget_total, cfg, original_n_layers);
    report.neuron_budget_total = plan.neuron_budget_total;

    // Phase 3: neuron-grained pruning. Dense inputs come from one capture of
    // the original full model (identical-input policy) or are re-captured
    // from the evolving model before each layer (propagated policy).
    ActivationTrace identical_trace;
    if (cfg.input_policy == InputPolicy::Identical && !plan.layers.empty()) {
        identical_trace = forward_capture(original, calib).second;
    }
    for (const RatioPlanEntry& entry : plan.layers) {
        if (entry.budget <= 0.0) continue;
        LayerNeuronRecord rec;
        if (cfg.input_policy == InputPolicy::Identical) {
            rec = prune_layer_neurons(model, entry.current_index, identical_trace,
                                      entry.original_index, entry.budget, cfg);
        } else {
            ActivationTrace propagated = forward_capture(model, calib).second;
            rec = prune_layer_neurons(model, entry.current_index, propagated,
                                      entry.current_index, entry.budget, cfg);
        }
        rec.importance = entry.importance;
        rec.weight = entry.weight;
        rec.ratio = entry.ratio;
        report.neuron_phase.push_back(rec);
    }

    fold_masks(model);

    for (const auto& rec : report.neuron_phase) {
        report.neuron_pruned_total += rec.achieved;
        report.shortfall |= rec.shortfall;
    }
    if (budget_total > 0.0 && plan.layers.empty()) report.shortfall = true;
    report.achieved_ratio =
        static_cast<double>(removal_credit + report.neuron_pruned_total) /
        static_cast<double>(n_total);
    report.perplexity_after = perplexity(model, eval_batch);
    Fidelity fid = fidelity(original, model, eval_batch);
    report.fidelity_kl = fid.mean_kl;
    report.fidelity_logit_mse = fid.mean_logit_mse;
    return PruneOutcome{std::move(model), std::move(report)};
}

/// Layer pruning only: floor(r N / mean layer size) whole layers by the same
/// iterative ordering, no neuron phase.
inline PruneOutcome strategy_layer_only(const Model& input_model,
                                        const std::vector<std::uint8_t>& corpus,
                                        const PruneConfig& cfg) {
    Model model = input_model;
    const Model& original = input_model;
    const std::size_t original_n_layers = model.layers.size();
    const std::size_t n_total = model.param_count();

    auto n_remove = static_cast<std::size_t>(
        std::floor(cfg.target_ratio * static_cast<double>(n_total) /
                   detail::mean_layer_params(model)));
    bool clamped = false;
    if (n_remove > detail::removable_layers(model, cfg)) {
        n_remove = detail::removable_layers(model, cfg);
        clamped = true;
    }

    Batch calib = byte_tokenize(corpus, cfg.calib.seq_len, cfg.calib.n_samples, cfg.seed);
    Batch eval_batch = byte_tokenize(corpus, cfg.eval.seq_len, cfg.eval.n_samples,
                                     Rng(cfg.seed).derive("eval").next_u64());

    PruneReport report;
    report.strategy = to_string(Strategy::LayerOnly);
    report.input_policy = to_string(cfg.input_policy);
    report.target_ratio = cfg.target_ratio;
    report.removed_layers_requested = static_cast<long>(n_remove);
    report.params_total = n_total;
    report.perplexity_before = perplexity(original, eval_batch);

    report.layer_phase = iterative_layer_prune(model, calib, n_remove, cfg, original_n_layers);
    report.removed_layers = n_remove;
    report.removal_credit = n_total - model.param_count();
    report.achieved_ratio =
        static_cast<double>(report.removal_credit) / static_cast<double>(n_total);
    // Rounding down (or running out of removable layers) leaves a shortfall;
    // a ratio below one layer's mass makes the whole run a flagged no-op.
    report.shortfall = clamped || n_remove == 0 ||
                       report.achieved_ratio < cfg.target_ratio - 0.01;

    report.perplexity_after = perplexity(model, eval_batch);
    Fidelity fid = fidelity(original, model, eval_batch);
    report.fidelity_kl = fid.mean_kl;
    report.fidelity_logit_mse = fid.mean_logit_mse;
    return PruneOutcome{std::move(model), std::move(report)};
}

/// Neuron pruning only: the same rounded fraction of input neurons from every
/// dense of every layer (no exemptions, no variance loop), one tune per dense.
inline PruneOutcome strategy_neuron_only(const Model& input_model,
                                         const std::vector<std::uint8_t>& corpus,
                                         const PruneConfig& cfg) {
    Model model = input_model;
    const Model& original = input_model;
    const std::size_t n_total = model.param_count();

    Batch calib = byte_tokenize(corpus, cfg.calib.seq_len, cfg.calib.n_samples, cfg.seed);
    Batch eval_batch = byte_tokenize(corpus, cfg.eval.seq_len, cfg.eval.n_samples,
                                     Rng(cfg.seed).derive("eval").next_u64());

    PruneReport report;
    report.strategy = to_string(Strategy::NeuronOnly);
    report.input_policy = to_string(cfg.input_policy);
    report.target_ratio = cfg.target_ratio;
    report.removed_layers_requested = 0;
    report.params_total = n_total;
    report.perplexity_before = perplexity(original, eval_batch);

    ActivationTrace trace = forward_capture(original, calib).second;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        LayerNeuronRecord rec;
        rec.layer_original = model.layers[l].original_index;
        for (DenseLayer* d : model.layers[l].denses(model.config.ffn_kind)) {
            const std::size_t q = d->in_dim();
            auto c = static_cast<std::size_t>(
                std::llround(cfg.target_ratio * static_cast<double>(q)));
            const auto cap = static_cast<std::size_t>(
                std::floor(cfg.dense_cap * static_cast<double>(q)));
            const std::size_t count = std::min(c, cap);

            detail::DenseTuneState st;
            st.dense = d;
            st.inputs = &trace.dense_input(l, d->name);
            st.x_mean = trace.dense_input_mean(l, d->name);
            st.record.layer_original = rec.layer_original;
            st.record.dense = d->name;
            st.record.in_dim = q;
            st.record.out_dim = d->out_dim();
            st.record.cap = cap;
            detail::rank_state(st, cfg);
            std::size_t taken = 0;
            for (std::size_t pos = 0; pos < st.ranking.size() && taken < count; ++pos) {
                const std::size_t victim = st.ranking[pos];
                if (d->binary_mask[victim] == 0.0) continue;
                d->binary_mask[victim] = 0.0;
                d->tuned_mask[victim] = 0.0;
                ++taken;
            }
            if (taken > 0) {
                st.s_cache = linalg::matmul(linalg::transpose(d->weight), d->weight);
                st.c_cache = linalg::matmul(*st.inputs, linalg::transpose(*st.inputs));
                st.y_cache = linalg::matmul(d->weight, *st.inputs);
                detail::retune(st, cfg);
            }
            st.record.pruned = d->pruned_columns();
            rec.achieved += d->pruned_param_count();
            rec.denses.push_back(st.record);
        }
        report.neuron_pruned_total += rec.achieved;
        report.neuron_phase.push_back(rec);
    }

    fold_masks(model);
    report.achieved_ratio =
        static_cast<double>(report.neuron_pruned_total) / static_cast<double>(n_total);
    report.shortfall = report.achieved_ratio < cfg.target_ratio - 0.01;
    report.perplexity_after = perplexity(model, eval_batch);
    Fidelity fid = fidelity(original, model, eval_batch);
    report.fidelity_kl = fid.mean_kl;
    report.fidelity_logit_mse = fid.mean_logit_mse;
    return PruneOutcome{std::move(model), std::move(report)};
}

inline PruneOutcome run_strategy(Strategy s, const Model& m,
                                 const std::vector<std::uint8_t>& corpus,
                                 const PruneConfig& cfg) {
    switch (s) {
        case Strategy::Comp: return run_comp(m, corpus, cfg);
        case Strategy::LayerOnly: return strategy_layer_only(m, corpus, cfg);
        default: return strategy_neuron_only(m, corpus, cfg);
    }
}

// ---------------------------------------------------------------------------
// Ablations
// ---------------------------------------------------------------------------

struct IdenticalInputAblation {
    PruneReport identical;
    PruneReport propagated;
};

/// Runs the full pipeline twice: once tuning against original-model inputs,
/// once against inputs re-captured from the partially pruned model.
inline IdenticalInputAblation ablation_identical_input(const Model& m,
                                                       const std::vector<std::uint8_t>& corpus,
                                                       const PruneConfig& cfg) {
    PruneConfig a = cfg;
    a.input_policy = InputPolicy::Identical;
    PruneConfig b = cfg;
    b.input_policy = InputPolicy::Propagated;
    IdenticalInputAblation out;
    out.identical = run_comp(m, corpus, a).report;
    out.propagated = run_comp(m, corpus, b).report;
    return out;
}

struct LayerOrderAblation {
    std::vector<std::size_t> iterative_order;  // original indices, removal order
    std::vector<std::size_t> one_shot_order;
    bool orders_identical = false;
    double iterative_perplexity = 0.0;
    double one_shot_perplexity = 0.0;
};

/// Iterative versus one-shot layer ordering at a fixed removal count.
inline LayerOrderAblation ablation_layer_order(const Model& input_model,
                                               const std::vector<std::uint8_t>& corpus,
                                               std::size_t n, const PruneConfig& cfg) {
    if (n > detail::removable_layers(input_model, cfg)) {
        throw InfeasibleError("ablation_layer_order: not enough removable layers");
    }
    Batch calib = byte_tokenize(corpus, cfg.calib.seq_len, cfg.calib.n_samples, cfg.seed);
    Batch eval_batch = byte_tokenize(corpus, cfg.eval.seq_len, cfg.eval.n_samples,
                                     Rng(cfg.seed).derive("eval").next_u64());
    LayerOrderAblation out;

    Model iter_model = input_model;
    LayerPhaseRecord rec =
        iterative_layer_prune(iter_model, calib, n, cfg, input_model.layers.size());
    out.iterative_order = rec.removed_original_indices;
    out.iterative_perplexity = perplexity(iter_model, eval_batch);

    out.one_shot_order = one_shot_layer_order(input_model, calib, n, cfg);
    Model once_model = input_model;
    for (std::size_t original : out.one_shot_order) {
        for (std::size_t l = 0; l < once_model.layers.size(); ++l) {
            if (once_model.layers[l].original_index == original) {
                remove_layer(once_model, l);
                break;
            }
        }
    }
    out.one_shot_perplexity = perplexity(once_model, eval_batch);
    out.orders_identical = out.iterative_order == out.one_shot_order;
    return out;
}

}  // namespace comp
