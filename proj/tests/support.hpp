#pragma once

// Shared fixtures: small models, stub language models and statistics helpers.

#include <cmath>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "film/infill.hpp"
#include "film/model.hpp"

namespace film::test {

inline ModelConfig tiny_config(std::size_t vocab, std::size_t n_max, AttentionMode mode, std::uint64_t seed = 7) {
    ModelConfig c;
    c.vocab_size = vocab;
    c.n_max = n_max;
    c.d_model = 16;
    c.n_layers = 2;
    c.n_heads = 2;
    c.d_ff = 32;
    c.attention = mode;
    c.seed = seed;
    return c;
}

/// Random untrained transformer. Weights are scaled up from the usual init so
/// predictions depend visibly on context.
inline TransformerLM<double> random_model(std::size_t vocab, std::size_t n_max, AttentionMode mode,
                                          std::uint64_t seed = 7, double scale = 20.0) {
    Parameters<double> p = init_parameters<double>(tiny_config(vocab, n_max, mode, seed));
    p.visit([&](const std::string&, Tensor<double>& t) {
        if (t.rank() == 2) {
            for (double& v : t.data) v *= scale;
        }
    });
    return TransformerLM<double>(std::move(p));
}

/// LanguageModel backed by a callback.
class StubModel final : public LanguageModel {
public:
    using Fn = std::function<Logits(std::span<const TokenId>)>;

    StubModel(std::size_t vocab, std::size_t n_max, AttentionMode mode, Fn fn)
        : vocab_(vocab), n_max_(n_max), mode_(mode), fn_(std::move(fn)) {}

    std::size_t vocab_size() const override { return vocab_; }
    std::size_t max_length() const override { return n_max_; }
    AttentionMode attention() const override { return mode_; }
    Logits logits(std::span<const TokenId> ids) const override {
        ++calls;
        return fn_(ids);
    }

    mutable std::size_t calls = 0;

private:
    std::size_t vocab_, n_max_;
    AttentionMode mode_;
    Fn fn_;
};

inline Logits constant_logits(std::size_t rows, std::size_t cols, double value = 0.0) {
    return Logits{rows, cols, std::vector<double>(rows * cols, value)};
}

/// Logits with `peak` on the chosen token of every row and 0 elsewhere.
inline Logits peaked_logits(std::span<const TokenId> targets, std::size_t cols, double peak = 50.0) {
    Logits l = constant_logits(targets.size(), cols);
    for (std::size_t r = 0; r < targets.size(); ++r) l.data[r * cols + static_cast<std::size_t>(targets[r])] = peak;
    return l;
}

/// Fill-in oracle: predicts the gold sequence consistent with every unmasked
/// position of the input (first match wins).
inline StubModel fill_oracle(std::vector<std::vector<TokenId>> gold, std::size_t vocab, std::size_t n_max) {
    return StubModel(vocab, n_max, AttentionMode::Bidirectional, [gold, vocab](std::span<const TokenId> ids) {
        for (const auto& g : gold) {
            if (g.size() != ids.size()) continue;
            bool ok = true;
            for (std::size_t i = 0; i < ids.size() && ok; ++i) ok = ids[i] == kMaskId || ids[i] == g[i];
            if (ok) return peaked_logits(g, vocab);
        }
        return constant_logits(ids.size(), vocab);
    });
}

/// Causal oracle over full target sequences (begin marker included): predicts
/// the continuation of whichever target the input prefixes.
inline StubModel causal_oracle(std::vector<std::vector<TokenId>> targets, std::size_t vocab, std::size_t n_max) {
    return StubModel(vocab, n_max, AttentionMode::Causal, [targets, vocab](std::span<const TokenId> ids) {
        for (const auto& t : targets) {
            if (t.size() <= ids.size() || !std::equal(ids.begin(), ids.end(), t.begin())) continue;
            return peaked_logits(std::span<const TokenId>(t).subspan(1, ids.size()), vocab);
        }
        return constant_logits(ids.size(), vocab);
    });
}

/// Upper-tail p-value of Pearson's statistic for observed counts against expected counts.
inline double chi_square_p(std::span<const double> observed, std::span<const double> expected) {
    double stat = 0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        stat += (observed[i] - expected[i]) * (observed[i] - expected[i]) / expected[i];
    }
    const boost::math::chi_squared dist(static_cast<double>(observed.size() - 1));
    return boost::math::cdf(boost::math::complement(dist, stat));
}

/// Every sequence of length n over tokens [first, first + k).
inline std::vector<std::vector<TokenId>> all_sequences(std::size_t n, TokenId first, std::size_t k) {
    std::vector<std::vector<TokenId>> out{{}};
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::vector<TokenId>> next;
        for (const auto& s : out) {
            for (std::size_t t = 0; t < k; ++t) {
                auto e = s;
                e.push_back(first + static_cast<TokenId>(t));
                next.push_back(std::move(e));
            }
        }
        out = std::move(next);
    }
    return out;
}

}  // namespace film::test
