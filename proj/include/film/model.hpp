#pragma once

// Pre-layer-norm transformer over token ids. One set of weights serves both
// the fill-in model (bidirectional attention) and the causal baseline.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "film/common.hpp"
#include "film/tensor.hpp"

namespace film {

struct ModelConfig {
    std::size_t vocab_size = 0;
    std::size_t n_max = 64;
    std::size_t d_model = 64;
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t d_ff = 256;
    double dropout_p = 0.0;
    AttentionMode attention = AttentionMode::Bidirectional;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

/// Closed-form number of scalar parameters for a config.
std::size_t parameter_count(const ModelConfig& config);

template <typename T>
struct LayerParams {
    Tensor<T> ln1_gain, ln1_bias;
    Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor<T> ln2_gain, ln2_bias;
    Tensor<T> w1, b1, w2, b2;

    template <typename Self, typename F>
    static void visit(Self& self, const std::string& prefix, F&& f) {
        f(prefix + "ln1.gain", self.ln1_gain);
        f(prefix + "ln1.bias", self.ln1_bias);
        f(prefix + "attn.wq", self.wq);
        f(prefix + "attn.bq", self.bq);
        f(prefix + "attn.wk", self.wk);
        f(prefix + "attn.bk", self.bk);
        f(prefix + "attn.wv", self.wv);
        f(prefix + "attn.bv", self.bv);
        f(prefix + "attn.wo", self.wo);
        f(prefix + "attn.bo", self.bo);
        f(prefix + "ln2.gain", self.ln2_gain);
        f(prefix + "ln2.bias", self.ln2_bias);
        f(prefix + "mlp.w1", self.w1);
        f(prefix + "mlp.b1", self.b1);
        f(prefix + "mlp.w2", self.w2);
        f(prefix + "mlp.b2", self.b2);
    }
};

/// Weight store. The output projection is tied to the token embedding.
template <typename T>
struct Parameters {
    ModelConfig config;
    Tensor<T> token_embedding;     // [vocab, d_model]
    Tensor<T> position_embedding;  // [n_max, d_model]
    std::vector<LayerParams<T>> layers;
    Tensor<T> final_gain, final_bias;
    Tensor<T> output_bias;  // [vocab]

    /// Calls f(name, tensor) for every block in a fixed canonical order.
    template <typename F>
    void visit(F&& f) {
        visit_impl(*this, f);
    }
    template <typename F>
    void visit(F&& f) const {
        visit_impl(*this, f);
    }

    std::size_t count() const;
    void zero_grad();

private:
    template <typename Self, typename F>
    static void visit_impl(Self& self, F& f) {
        f(std::string("token_embedding"), self.token_embedding);
        f(std::string("position_embedding"), self.position_embedding);
        for (std::size_t i = 0; i < self.layers.size(); ++i) {
            LayerParams<T>::visit(self.layers[i], "layers." + std::to_string(i) + ".", f);
        }
        f(std::string("final_norm.gain"), self.final_gain);
        f(std::string("final_norm.bias"), self.final_bias);
        f(std::string("output_bias"), self.output_bias);
    }
};

/// Allocates every block for the config with zero weights and unit gains.
template <typename T>
Parameters<T> allocate_parameters(const ModelConfig& config);

/// Scaled-normal (std 0.02) weights from config.seed, unit gains, zero biases.
template <typename T>
Parameters<T> init_parameters(const ModelConfig& config);

template <typename To, typename From>
Parameters<To> convert_parameters(const Parameters<From>& from);

/// Records the forward pass for `batch` equal-length sequences packed row-major
/// in ids. Returns logits shaped [batch * n, vocab]; parameters are trainable
/// leaves. Dropout is applied only when dropout_rng is non-null.
template <typename T>
Var forward(Graph<T>& graph, Parameters<T>& params, std::span<const TokenId> ids, std::size_t batch,
            Rng* dropout_rng = nullptr);

/// Inference forward pass; returns logits shaped [batch, n, vocab].
template <typename T>
Tensor<T> forward(const Parameters<T>& params, std::span<const TokenId> ids, std::size_t batch = 1);

/// Per-position logits of one sequence, row-major [rows x cols].
struct Logits {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
};

/// Anything that maps a token sequence to per-position vocabulary logits.
/// Decoding, perplexity and the infilling benchmark are written against this.
class LanguageModel {
public:
    virtual ~LanguageModel() = default;
    virtual std::size_t vocab_size() const = 0;
    virtual std::size_t max_length() const = 0;
    virtual AttentionMode attention() const = 0;
    virtual Logits logits(std::span<const TokenId> ids) const = 0;
};

template <typename T>
class TransformerLM final : public LanguageModel {
public:
    explicit TransformerLM(Parameters<T> params) : params_(std::move(params)) { params_.config.validate(); }

    std::size_t vocab_size() const override { return params_.config.vocab_size; }
    std::size_t max_length() const override { return params_.config.n_max; }
    AttentionMode attention() const override { return params_.config.attention; }
    Logits logits(std::span<const TokenId> ids) const override;

    const Parameters<T>& parameters() const { return params_; }

private:
    Parameters<T> params_;
};

}  // namespace film
