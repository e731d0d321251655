#include <catch2/catch.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "comp/eval.hpp"
#include "comp/model.hpp"
#include "comp/rng.hpp"
#include "comp/train.hpp"

using namespace comp;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.n_layers = 4;
    c.d_model = 16;
    c.n_heads = 2;
    c.d_ff = 24;
    c.vocab = 256;
    c.max_seq = 64;
    return c;
}

/// ~80 KiB of synthetic English-like bytes for trainer smoke tests.
std::vector<std::uint8_t> synthetic_corpus() {
    const std::string words[] = {"the", "quick", "brown", "fox",  "jumps", "over",
                                 "lazy", "dog",   "stone", "river", "light", "dark"};
    std::string text;
    Rng rng(2024);
    while (text.size() < 80 * 1024) {
        text += words[rng.uniform_below(12)];
        text += (rng.uniform() < 0.12) ? ". " : " ";
    }
    return std::vector<std::uint8_t>(text.begin(), text.end());
}

Batch random_byte_batch(Rng& rng, std::size_t n, std::size_t len) {
    Batch b;
    b.n_samples = n;
    b.seq_len = len;
    b.tokens.resize(n * len);
    for (auto& t : b.tokens) t = static_cast<int>(rng.uniform_below(256));
    return b;
}

}  // namespace

TEST_CASE("untrained model has perplexity near the vocabulary size") {
    Rng rng(61);
    Model m = build_model(tiny_config(), rng);
    Batch b = random_byte_batch(rng, 4, 32);
    const double ppl = perplexity(m, b);
    REQUIRE(ppl == Approx(256.0).epsilon(0.05));
}

TEST_CASE("uniform model has perplexity exactly vocab") {
    Rng rng(63);
    Model m = build_model(tiny_config(), rng);
    // Zero everything: logits collapse to the (zero) output bias.
    for (auto& l : m.layers)
        for (DenseLayer* d : l.denses(m.config.ffn_kind))
            for (std::size_t i = 0; i < d->weight.size(); ++i) d->weight.data()[i] = 0.0;
    for (std::size_t i = 0; i < m.lm_head.weight.size(); ++i) m.lm_head.weight.data()[i] = 0.0;
    for (std::size_t i = 0; i < m.embedding.size(); ++i) m.embedding.data()[i] = 0.0;
    for (std::size_t i = 0; i < m.pos_embedding.size(); ++i) m.pos_embedding.data()[i] = 0.0;
    Batch b = random_byte_batch(rng, 2, 16);
    REQUIRE(perplexity(m, b) == Approx(256.0).epsilon(1e-9));
}

TEST_CASE("near-certain model has perplexity near one") {
    Rng rng(67);
    Model m = build_model(tiny_config(), rng);
    for (auto& l : m.layers)
        for (DenseLayer* d : l.denses(m.config.ffn_kind))
            for (std::size_t i = 0; i < d->weight.size(); ++i) d->weight.data()[i] = 0.0;
    for (std::size_t i = 0; i < m.lm_head.weight.size(); ++i) m.lm_head.weight.data()[i] = 0.0;
    m.lm_head.bias[static_cast<std::size_t>('a')] = 60.0;  // p('a') ~ 1
    std::vector<int> all_a(24, 'a');
    REQUIRE(perplexity(m, all_a) == Approx(1.0).margin(1e-9));
}

TEST_CASE("perplexity matches an explicit softmax oracle") {
    Rng rng(71);
    Model m = build_model(tiny_config(), rng);
    Batch b = random_byte_batch(rng, 3, 20);

    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t s = 0; s < b.n_samples; ++s) {
        Matrix logits = forward(m, b.row(s));
        for (std::size_t t = 0; t + 1 < b.seq_len; ++t) {
            double mx = logits(0, t);
            for (std::size_t i = 1; i < logits.rows(); ++i) mx = std::max(mx, logits(i, t));
            double denom = 0.0;
            for (std::size_t i = 0; i < logits.rows(); ++i)
                denom += std::exp(logits(i, t) - mx);
            const double p =
                std::exp(logits(static_cast<std::size_t>(b.row(s)[t + 1]), t) - mx) / denom;
            total += -std::log(p);
            ++count;
        }
    }
    const double want = std::exp(total / static_cast<double>(count));
    REQUIRE(perplexity(m, b) == Approx(want).epsilon(1e-9));

    std::vector<int> one{1};
    REQUIRE_THROWS_AS(perplexity(m, one), Error);
}

TEST_CASE("fidelity: self comparison is exactly zero, KL is nonnegative") {
    Rng rng(73);
    Model a = build_model(tiny_config(), rng);
    Batch b = random_byte_batch(rng, 2, 12);
    Fidelity self = fidelity(a, a, b);
    REQUIRE(self.mean_kl == 0.0);
    REQUIRE(self.mean_logit_mse == 0.0);

    for (int trial = 0; trial < 10; ++trial) {
        Rng other_rng = rng.derive("f" + std::to_string(trial));
        Model m2 = build_model(tiny_config(), other_rng);
        Fidelity f = fidelity(a, m2, b);
        REQUIRE(f.mean_kl >= 0.0);
        REQUIRE(f.mean_logit_mse >= 0.0);
    }
}

TEST_CASE("fidelity matches a brute-force per-position oracle") {
    Rng rng(79);
    Model a = build_model(tiny_config(), rng);
    Rng other_rng = rng.derive("other");
    Model b = build_model(tiny_config(), other_rng);
    Batch batch = random_byte_batch(rng, 2, 10);

    double kl_total = 0.0, mse_total = 0.0;
    std::size_t positions = 0;
    for (std::size_t s = 0; s < batch.n_samples; ++s) {
        Matrix la = forward(a, batch.row(s));
        Matrix lb = forward(b, batch.row(s));
        for (std::size_t t = 0; t < batch.seq_len; ++t) {
            std::vector<double> pa(a.config.vocab), pb(a.config.vocab);
            double sa = 0.0, sb = 0.0;
            for (std::size_t i = 0; i < a.config.vocab; ++i) {
                pa[i] = std::exp(la(i, t));
                pb[i] = std::exp(lb(i, t));
                sa += pa[i];
                sb += pb[i];
            }
            double kl = 0.0, mse = 0.0;
            for (std::size_t i = 0; i < a.config.vocab; ++i) {
                pa[i] /= sa;
                pb[i] /= sb;
                kl += pa[i] * std::log(pa[i] / pb[i]);
                mse += (la(i, t) - lb(i, t)) * (la(i, t) - lb(i, t));
            }
            kl_total += kl;
            mse_total += mse / static_cast<double>(a.config.vocab);
            ++positions;
        }
    }
    Fidelity f = fidelity(a, b, batch);
    REQUIRE(f.mean_kl == Approx(kl_total / positions).epsilon(1e-9));
    REQUIRE(f.mean_logit_mse == Approx(mse_total / positions).epsilon(1e-9));
}

TEST_CASE("trainer reduces loss, is deterministic, and rejects tiny corpora") {
    ModelConfig mc = tiny_config();
    auto corpus = synthetic_corpus();

    TrainConfig tc;
    tc.steps = 40;
    tc.lr = 2e-3;
    tc.batch_size = 4;
    tc.seq_len = 32;
    tc.seed = 7;
    tc.log_every = 10;

    TrainResult r1 = train_toy(mc, corpus, tc);
    REQUIRE(r1.curve.front().loss > r1.final_loss);
    REQUIRE(r1.final_loss < std::log(256.0));

    TrainResult r2 = train_toy(mc, corpus, tc);
    REQUIRE(r1.final_loss == r2.final_loss);
    REQUIRE(r1.holdout_cross_entropy == r2.holdout_cross_entropy);

    std::vector<std::uint8_t> tiny(1024, 'x');
    REQUIRE_THROWS_AS(train_toy(mc, tiny, tc), Error);
}
