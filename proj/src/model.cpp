#include "film/model.hpp"

#include <cmath>
#include <stdexcept>

namespace film {

void ModelConfig::validate() const {
    if (vocab_size == 0) throw std::invalid_argument("model config: vocab_size must be positive");
    if (n_max == 0) throw std::invalid_argument("model config: n_max must be >= 1");
    if (d_model == 0 || n_layers == 0 || n_heads == 0 || d_ff == 0) {
        throw std::invalid_argument("model config: d_model, n_layers, n_heads and d_ff must be positive");
    }
    if (d_model % n_heads != 0) {
        throw std::invalid_argument("model config: d_model " + std::to_string(d_model) +
                                    " is not divisible by n_heads " + std::to_string(n_heads));
    }
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw std::invalid_argument("model config: dropout_p must be in [0,1)");
}

std::size_t parameter_count(const ModelConfig& c) {
    const std::size_t d = c.d_model;
    const std::size_t per_layer = 4 * (d * d + d)          // q, k, v, output projections
                                  + 2 * 2 * d              // two layer norms
                                  + d * c.d_ff + c.d_ff    // expansion
                                  + c.d_ff * d + d;        // contraction
    return c.vocab_size * d + c.n_max * d + c.n_layers * per_layer + 2 * d + c.vocab_size;
}

template <typename T>
std::size_t Parameters<T>::count() const {
    std::size_t total = 0;
    visit([&](const std::string&, const Tensor<T>& t) { total += t.size(); });
    return total;
}

template <typename T>
void Parameters<T>::zero_grad() {
    visit([](const std::string&, Tensor<T>& t) { t.zero_grad(); });
}

template <typename T>
Parameters<T> allocate_parameters(const ModelConfig& config) {
    config.validate();
    const std::size_t d = config.d_model, f = config.d_ff, v = config.vocab_size;
    Parameters<T> p;
    p.config = config;
    p.token_embedding = Tensor<T>({v, d});
    p.position_embedding = Tensor<T>({config.n_max, d});
    p.layers.resize(config.n_layers);
    for (LayerParams<T>& l : p.layers) {
        l.ln1_gain = Tensor<T>({d}, T(1));
        l.ln1_bias = Tensor<T>({d});
        l.wq = Tensor<T>({d, d});
        l.bq = Tensor<T>({d});
        l.wk = Tensor<T>({d, d});
        l.bk = Tensor<T>({d});
        l.wv = Tensor<T>({d, d});
        l.bv = Tensor<T>({d});
        l.wo = Tensor<T>({d, d});
        l.bo = Tensor<T>({d});
        l.ln2_gain = Tensor<T>({d}, T(1));
        l.ln2_bias = Tensor<T>({d});
        l.w1 = Tensor<T>({d, f});
        l.b1 = Tensor<T>({f});
        l.w2 = Tensor<T>({f, d});
        l.b2 = Tensor<T>({d});
    }
    p.final_gain = Tensor<T>({d}, T(1));
    p.final_bias = Tensor<T>({d});
    p.output_bias = Tensor<T>({v});
    return p;
}

template <typename T>
Parameters<T> init_parameters(const ModelConfig& config) {
    Parameters<T> p = allocate_parameters<T>(config);
    Rng rng(config.seed);
    std::normal_distribution<double> normal(0.0, 0.02);
    p.visit([&](const std::string& name, Tensor<T>& t) {
        // Matrices get random weights; gains and biases keep their defaults.
        if (t.rank() != 2) return;
        (void)name;
        for (T& x : t.data) x = static_cast<T>(normal(rng));
    });
    return p;
}

template <typename To, typename From>
Parameters<To> convert_parameters(const Parameters<From>& from) {
    Parameters<To> to = allocate_parameters<To>(from.config);
    std::vector<const Tensor<From>*> src;
    from.visit([&](const std::string&, const Tensor<From>& t) { src.push_back(&t); });
    std::size_t i = 0;
    to.visit([&](const std::string&, Tensor<To>& t) {
        const Tensor<From>& s = *src[i++];
        for (std::size_t j = 0; j < t.size(); ++j) t.data[j] = static_cast<To>(s.data[j]);
    });
    return to;
}

namespace {

template <typename T, typename Params, typename Leaf>
Var forward_impl(Graph<T>& g, Params& p, Leaf&& leaf, std::span<const TokenId> ids,
                 std::size_t batch, Rng* dropout_rng) {
    const ModelConfig& c = p.config;
    if (batch == 0 || ids.empty() || ids.size() % batch != 0) {
        throw std::invalid_argument("forward: " + std::to_string(ids.size()) + " ids do not form " +
                                    std::to_string(batch) + " equal-length sequences");
    }
    const std::size_t n = ids.size() / batch;
    if (n > c.n_max) {
        throw std::invalid_argument("forward: sequence length " + std::to_string(n) + " exceeds n_max " +
                                    std::to_string(c.n_max));
    }
    const std::size_t d = c.d_model, h = c.n_heads, dh = d / h;
    const T drop = static_cast<T>(c.dropout_p);
    auto dropout = [&](Var x) { return dropout_rng ? g.dropout(x, drop, *dropout_rng) : x; };

    std::vector<TokenId> positions(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) positions[i] = static_cast<TokenId>(i % n);

    const Var tok = leaf(p.token_embedding);
    Var x = g.add(g.embedding(tok, ids), g.embedding(leaf(p.position_embedding), positions));
    x = dropout(x);

    const T att_scale = T(1) / std::sqrt(static_cast<T>(dh));
    for (auto& l : p.layers) {
        const Var a = g.layer_norm(x, leaf(l.ln1_gain), leaf(l.ln1_bias));
        auto heads = [&](auto& w, auto& b) {
            const Var y = g.add(g.matmul(a, leaf(w)), leaf(b));
            return g.reshape(g.transpose12(g.reshape(y, {batch, n, h, dh})), {batch * h, n, dh});
        };
        const Var q = heads(l.wq, l.bq);
        const Var k = heads(l.wk, l.bk);
        const Var v = heads(l.wv, l.bv);
        Var scores = g.scale(g.matmul(q, k, true), att_scale);
        if (c.attention == AttentionMode::Causal) scores = g.causal_mask(scores);
        const Var ctx = g.matmul(g.softmax(scores), v);
        const Var merged = g.reshape(g.transpose12(g.reshape(ctx, {batch, h, n, dh})), {batch * n, d});
        x = g.add(x, dropout(g.add(g.matmul(merged, leaf(l.wo)), leaf(l.bo))));

        const Var b = g.layer_norm(x, leaf(l.ln2_gain), leaf(l.ln2_bias));
        const Var hidden = g.gelu(g.add(g.matmul(b, leaf(l.w1)), leaf(l.b1)));
        x = g.add(x, dropout(g.add(g.matmul(hidden, leaf(l.w2)), leaf(l.b2))));
    }
    const Var out = g.layer_norm(x, leaf(p.final_gain), leaf(p.final_bias));
    return g.add(g.matmul(out, tok, true), leaf(p.output_bias));
}

}  // namespace

template <typename T>
Var forward(Graph<T>& graph, Parameters<T>& params, std::span<const TokenId> ids, std::size_t batch,
            Rng* dropout_rng) {
    return forward_impl(graph, params, [&](Tensor<T>& t) { return graph.parameter(t); }, ids, batch, dropout_rng);
}

template <typename T>
Tensor<T> forward(const Parameters<T>& params, std::span<const TokenId> ids, std::size_t batch) {
    Graph<T> graph(false);
    const Var logits =
        forward_impl(graph, params, [&](const Tensor<T>& t) { return graph.reference(t); }, ids, batch, nullptr);
    Tensor<T> out = graph.value(logits);
    out.shape = {batch, ids.size() / batch, params.config.vocab_size};
    return out;
}

template <typename T>
Logits TransformerLM<T>::logits(std::span<const TokenId> ids) const {
    const Tensor<T> out = forward(params_, ids, 1);
    Logits l;
    l.rows = ids.size();
    l.cols = params_.config.vocab_size;
    l.data.assign(out.data.begin(), out.data.end());
    return l;
}

#define FILM_INSTANTIATE(T)                                                                              \
    template struct Parameters<T>;                                                                       \
    template Parameters<T> allocate_parameters<T>(const ModelConfig&);                                   \
    template Parameters<T> init_parameters<T>(const ModelConfig&);                                       \
    template Var forward<T>(Graph<T>&, Parameters<T>&, std::span<const TokenId>, std::size_t, Rng*);     \
    template Tensor<T> forward<T>(const Parameters<T>&, std::span<const TokenId>, std::size_t);          \
    template class TransformerLM<T>;

FILM_INSTANTIATE(float)
FILM_INSTANTIATE(double)
#undef FILM_INSTANTIATE

template Parameters<double> convert_parameters<double, float>(const Parameters<float>&);
template Parameters<float> convert_parameters<float, double>(const Parameters<double>&);
template Parameters<float> convert_parameters<float, float>(const Parameters<float>&);
template Parameters<double> convert_parameters<double, double>(const Parameters<double>&);

}  // namespace film
