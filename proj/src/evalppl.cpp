#include "film/evalppl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace film {

namespace {

void check_length(const LanguageModel& model, std::span<const TokenId> x) {
    if (x.empty()) throw std::invalid_argument("logprob: empty sequence");
    if (x.size() > model.max_length()) {
        throw std::invalid_argument("logprob: sequence length " + std::to_string(x.size()) + " exceeds n_max " +
                                    std::to_string(model.max_length()));
    }
}

void check_bidirectional(const LanguageModel& model) {
    if (model.attention() != AttentionMode::Bidirectional) {
        throw std::invalid_argument("any-order scoring needs a bidirectional model");
    }
}

// Shared loop: at each step `choose` picks a position among the unfilled ones.
template <typename Choose>
OrderedLogProb score(const LanguageModel& model, std::span<const TokenId> x, const LengthDistribution& lengths,
                     Choose&& choose) {
    check_bidirectional(model);
    check_length(model, x);
    OrderedLogProb r;
    r.length_term = lengths.log_probability(x.size());
    std::vector<TokenId> ids(x.size(), kMaskId);
    std::vector<std::size_t> remaining(x.size());
    std::iota(remaining.begin(), remaining.end(), std::size_t{0});
    for (std::size_t t = 0; t < x.size(); ++t) {
        const Logits logits = model.logits(ids);
        const std::size_t pos = choose(t, remaining, logits);
        const auto it = std::find(remaining.begin(), remaining.end(), pos);
        if (it == remaining.end()) throw std::invalid_argument("logprob: order revisits a position");
        const double lp = log_softmax(logits.row(pos))[static_cast<std::size_t>(x[pos])];
        r.per_step.push_back(lp);
        r.realized_order.push_back(pos);
        ids[pos] = x[pos];
        remaining.erase(it);
    }
    r.total = r.length_term + r.step_sum();
    return r;
}

}  // namespace

double OrderedLogProb::step_sum() const { return std::accumulate(per_step.begin(), per_step.end(), 0.0); }

OrderedLogProb logprob_with_order(const LanguageModel& model, std::span<const TokenId> x,
                                  const LengthDistribution& lengths, OrderPolicy policy, Rng& rng) {
    const bool adaptive = policy == OrderPolicy::MinEntropy || policy == OrderPolicy::MaxEntropy;
    return score(model, x, lengths,
                 [&](std::size_t, const std::vector<std::size_t>& remaining, const Logits& logits) {
                     std::vector<std::vector<double>> probs;
                     if (adaptive) {
                         for (std::size_t p : remaining) probs.push_back(softmax(logits.row(p)));
                     }
                     return select_position(policy, remaining, probs, rng);
                 });
}

OrderedLogProb logprob_with_order(const LanguageModel& model, std::span<const TokenId> x,
                                  const LengthDistribution& lengths, std::span<const std::size_t> order) {
    if (order.size() != x.size()) throw std::invalid_argument("logprob: order length differs from sequence length");
    return score(model, x, lengths,
                 [&](std::size_t t, const std::vector<std::size_t>&, const Logits&) { return order[t]; });
}

double sequence_perplexity(const OrderedLogProb& lp, std::size_t n) {
    return std::exp(-lp.total / static_cast<double>(n + 1));
}

std::string PerplexityReport::to_json() const {
    nlohmann::json j{{"policy", policy},
                     {"perplexity", perplexity},
                     {"mean_sequence_perplexity", mean_sequence_perplexity},
                     {"total_logprob", total_logprob},
                     {"sequences", sequences},
                     {"scored_tokens", scored_tokens},
                     {"aggregation", "token-weighted"}};
    if (policy == "random") {
        j["seed"] = seed;
        j["random_orders"] = random_orders;
    }
    return j.dump();
}

PerplexityReport corpus_perplexity(const LanguageModel& model, std::span<const TokenSequence> corpus,
                                   const LengthDistribution& lengths, OrderPolicy policy, std::uint64_t seed) {
    if (corpus.empty()) throw std::invalid_argument("corpus_perplexity: empty corpus");
    PerplexityReport rep;
    rep.policy = to_string(policy);
    rep.seed = seed;
    double seq_ppl_sum = 0;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        Rng rng = make_rng(seed, i);
        const OrderedLogProb lp = logprob_with_order(model, corpus[i].ids(), lengths, policy, rng);
        rep.total_logprob += lp.total;
        rep.scored_tokens += corpus[i].size() + 1;
        seq_ppl_sum += sequence_perplexity(lp, corpus[i].size());
        if (policy == OrderPolicy::Random) rep.random_orders.push_back(lp.realized_order);
    }
    rep.sequences = corpus.size();
    rep.perplexity = std::exp(-rep.total_logprob / static_cast<double>(rep.scored_tokens));
    rep.mean_sequence_perplexity = seq_ppl_sum / static_cast<double>(corpus.size());
    return rep;
}

double clm_logprob(const LanguageModel& model, std::span<const TokenId> x) {
    if (model.attention() != AttentionMode::Causal) {
        throw std::invalid_argument("clm perplexity needs a causal model; got a bidirectional one");
    }
    if (x.empty()) throw std::invalid_argument("clm_logprob: empty sequence");
    if (x.size() + 1 > model.max_length()) {
        throw std::invalid_argument("clm_logprob: sequence plus begin marker exceeds n_max " +
                                    std::to_string(model.max_length()));
    }
    std::vector<TokenId> input{kEosId};
    input.insert(input.end(), x.begin(), x.end());
    const Logits logits = model.logits(input);
    double total = 0;
    for (std::size_t t = 0; t <= x.size(); ++t) {
        const TokenId target = t < x.size() ? x[t] : kEosId;
        total += log_softmax(logits.row(t))[static_cast<std::size_t>(target)];
    }
    return total;
}

PerplexityReport clm_corpus_perplexity(const LanguageModel& model, std::span<const TokenSequence> corpus) {
    if (corpus.empty()) throw std::invalid_argument("clm_corpus_perplexity: empty corpus");
    PerplexityReport rep;
    rep.policy = "causal";
    double seq_ppl_sum = 0;
    for (const TokenSequence& s : corpus) {
        const double lp = clm_logprob(model, s.ids());
        rep.total_logprob += lp;
        rep.scored_tokens += s.size() + 1;
        seq_ppl_sum += std::exp(-lp / static_cast<double>(s.size() + 1));
    }
    rep.sequences = corpus.size();
    rep.perplexity = std::exp(-rep.total_logprob / static_cast<double>(rep.scored_tokens));
    rep.mean_sequence_perplexity = seq_ppl_sum / static_cast<double>(corpus.size());
    return rep;
}

}  // namespace film
