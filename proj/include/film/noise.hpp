#pragma once

// Noise schedules over the per-sequence mask probability and the masking step.

#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "film/common.hpp"
#include "film/corpus.hpp"

namespace film {

struct FixedSchedule {
    double p = 0.15;
};
struct UniformSchedule {};
struct BetaSchedule {
    double alpha = 2.5;
    double beta = 2.5;
};

class NoiseSchedule {
public:
    using Variant = std::variant<FixedSchedule, UniformSchedule, BetaSchedule>;

    NoiseSchedule() : NoiseSchedule(BetaSchedule{}) {}
    NoiseSchedule(Variant v);

    static NoiseSchedule fixed(double p) { return NoiseSchedule(FixedSchedule{p}); }
    static NoiseSchedule uniform() { return NoiseSchedule(UniformSchedule{}); }
    static NoiseSchedule beta(double alpha, double beta) { return NoiseSchedule(BetaSchedule{alpha, beta}); }
    /// Beta with alpha + beta = 5 and the given mode.
    static NoiseSchedule beta_mode(double mode);

    /// Parses "fixed:P", "uniform", "beta-mode:M" or "beta:A,B".
    static NoiseSchedule parse(std::string_view spec);
    std::string describe() const;

    const Variant& variant() const { return v_; }

private:
    Variant v_;
};

/// (alpha, beta) with alpha + beta = 5 whose Beta mode equals `mode`.
std::pair<double, double> mode_to_params(double mode);

double sample_mask_prob(const NoiseSchedule& schedule, Rng& rng);

struct MaskedSequence {
    std::vector<TokenId> ids;             // input with mask ids at masked positions
    std::vector<std::size_t> positions;   // strictly increasing
    std::vector<TokenId> originals;       // tokens that were replaced, aligned with positions

    std::size_t mask_count() const { return positions.size(); }
    /// Puts the originals back.
    std::vector<TokenId> restore() const;
};

/// Masks every position independently with probability p. When no position
/// was chosen, one uniformly random position is masked instead.
MaskedSequence mask_sequence(std::span<const TokenId> x, double p, Rng& rng);

/// Masks exactly the given (sorted, distinct) positions.
MaskedSequence mask_positions(std::span<const TokenId> x, std::span<const std::size_t> positions);

}  // namespace film
