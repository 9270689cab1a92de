#pragma once

// Sequential fill-in decoding: one mask filled per forward pass.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "film/common.hpp"
#include "film/corpus.hpp"
#include "film/model.hpp"

namespace film {

enum class OrderPolicy { Random, LeftToRight, RightToLeft, MinEntropy, MaxEntropy };

inline constexpr OrderPolicy kAllPolicies[] = {OrderPolicy::LeftToRight, OrderPolicy::RightToLeft,
                                               OrderPolicy::Random, OrderPolicy::MinEntropy,
                                               OrderPolicy::MaxEntropy};

/// "random", "l2r", "r2l", "min-ent", "max-ent".
std::string to_string(OrderPolicy policy);
OrderPolicy parse_order_policy(std::string_view name);

struct SamplerConfig {
    bool greedy = false;
    double temperature = 1.0;
    double top_p = 1.0;

    static SamplerConfig argmax() { return {true, 1.0, 1.0}; }
    static SamplerConfig nucleus(double top_p, double temperature) { return {false, temperature, top_p}; }
    void validate() const;
};

/// softmax(logits / temperature), computed in double with the max subtracted.
std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0);
std::vector<double> log_softmax(std::span<const double> logits);

/// Natural-log entropy. Throws on negative entries or mass differing from 1 by more than 1e-6.
double entropy(std::span<const double> probs);

/// Index of the largest entry; leftmost on ties.
std::size_t argmax(std::span<const double> values);

/// Probabilities restricted to the smallest descending-probability prefix whose
/// mass reaches top_p (the crossing token included, with 1e-12 slack for
/// rounding), renormalized.
std::vector<double> nucleus(std::span<const double> probs, double top_p);

/// Greedy argmax, or temperature + nucleus sampling. Ids in `banned` get zero
/// probability (at least one id must remain).
TokenId sample_token(std::span<const double> logits, const SamplerConfig& sampler, Rng& rng,
                     std::span<const TokenId> banned = {});

/// Picks one of `candidates` (sequence positions). For entropy policies,
/// `probs[i]` is the temperature-1 predictive distribution at candidates[i].
std::size_t select_position(OrderPolicy policy, std::span<const std::size_t> candidates,
                            std::span<const std::vector<double>> probs, Rng& rng);

struct FillStep {
    std::size_t position = 0;
    TokenId token = 0;
    double entropy = 0;  // of the temperature-1 distribution at the chosen position
};

struct FillResult {
    std::vector<TokenId> ids;
    std::vector<FillStep> steps;
    std::size_t forward_passes = 0;

    std::vector<std::size_t> realized_order() const;
};

/// Fills the given positions one per step. Positions are tracked explicitly, so
/// a filled token equal to the mask id never counts as unfilled. Special tokens
/// (MASK, EOS, PAD) are never produced.
FillResult fill_in(const LanguageModel& model, std::span<const TokenId> ids, std::span<const std::size_t> positions,
                   OrderPolicy policy, const SamplerConfig& sampler, Rng& rng);

/// Fills every position holding the mask id.
FillResult fill_in(const LanguageModel& model, std::span<const TokenId> ids, OrderPolicy policy,
                   const SamplerConfig& sampler, Rng& rng);

/// n drawn from lengths (capped by the model's positions), then an all-mask
/// sequence filled.
FillResult generate_from_scratch(const LanguageModel& model, const LengthDistribution& lengths, OrderPolicy policy,
                                 const SamplerConfig& sampler, Rng& rng);

FillResult generate_with_length(const LanguageModel& model, std::size_t n, OrderPolicy policy,
                                const SamplerConfig& sampler, Rng& rng);

}  // namespace film
