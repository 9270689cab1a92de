#pragma once

// Seeded toy corpora with learnable structure, used in place of the large
// public datasets.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace film {

/// Sentences from a small probabilistic grammar whose word choices depend on
/// earlier words (verb on subject, object on verb). Roughly `approx_chars` long.
std::string synthetic_text(std::size_t approx_chars, std::uint64_t seed);

/// Five-sentence stories about a recurring named character; one story per entry.
std::vector<std::vector<std::string>> synthetic_stories(std::size_t count, std::uint64_t seed);

}  // namespace film
