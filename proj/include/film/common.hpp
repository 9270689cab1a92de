#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace film {

using TokenId = std::int32_t;

/// Special ids occupy the front of every vocabulary.
inline constexpr TokenId kMaskId = 0;
inline constexpr TokenId kEosId = 1;
inline constexpr TokenId kPadId = 2;
inline constexpr TokenId kUnkId = 3;
inline constexpr TokenId kNumSpecial = 4;

using Rng = std::mt19937_64;

/// Derives an independent stream from a base seed and a list of stream tags.
template <typename... Tags>
Rng make_rng(std::uint64_t seed, Tags... tags) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(tags)...};
    return Rng(seq);
}

enum class AttentionMode { Bidirectional, Causal };

}  // namespace film
