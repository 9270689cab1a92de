#pragma once

// Any-order log-likelihood with a length prior, and the matching perplexities
// for fill-in and causal models.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "film/corpus.hpp"
#include "film/decode.hpp"
#include "film/model.hpp"

namespace film {

struct OrderedLogProb {
    double total = 0;         // length_term + sum(per_step)
    double length_term = 0;   // log p_len(n)
    std::vector<double> per_step;
    std::vector<std::size_t> realized_order;  // 0-indexed positions in fill order

    double step_sum() const;
};

/// Scores x by revealing gold tokens one position at a time, starting from an
/// all-mask sequence. The policy picks each position; entropy policies look at
/// the model's temperature-1 distributions over the current context. Random
/// draws its permutation from rng.
OrderedLogProb logprob_with_order(const LanguageModel& model, std::span<const TokenId> x,
                                  const LengthDistribution& lengths, OrderPolicy policy, Rng& rng);

/// Same, along a caller-given permutation of 0..n-1.
OrderedLogProb logprob_with_order(const LanguageModel& model, std::span<const TokenId> x,
                                  const LengthDistribution& lengths, std::span<const std::size_t> order);

/// exp(-total / (n + 1)).
double sequence_perplexity(const OrderedLogProb& lp, std::size_t n);

struct PerplexityReport {
    std::string policy;
    double perplexity = 0;             // exp(-sum total / sum (n+1))
    double mean_sequence_perplexity = 0;
    double total_logprob = 0;
    std::uint64_t sequences = 0;
    std::uint64_t scored_tokens = 0;   // sum (n+1)
    std::uint64_t seed = 0;
    std::vector<std::vector<std::size_t>> random_orders;  // Random policy only

    std::string to_json() const;
};

/// Token-weighted perplexity. Sequence i under Random uses make_rng(seed, i).
PerplexityReport corpus_perplexity(const LanguageModel& model, std::span<const TokenSequence> corpus,
                                   const LengthDistribution& lengths, OrderPolicy policy, std::uint64_t seed = 0);

/// Log-probability of x under a causal model: next-token terms for x_1..x_n and
/// EOS given the begin marker.
double clm_logprob(const LanguageModel& model, std::span<const TokenId> x);

/// Token-weighted perplexity of a causal model over n+1 positions per sequence.
PerplexityReport clm_corpus_perplexity(const LanguageModel& model, std::span<const TokenSequence> corpus);

}  // namespace film
