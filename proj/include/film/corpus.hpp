#pragma once

// Text ingestion: tokenization, vocabularies, windowing and the smoothed
// sequence-length distribution.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "film/common.hpp"

namespace film {

enum class TokenizerMode { Char, Word };

std::string to_string(TokenizerMode mode);
TokenizerMode parse_tokenizer_mode(std::string_view name);

/// Rendering of the special ids.
inline constexpr std::string_view kMaskText = "[MASK]";
inline constexpr std::string_view kEosText = "[EOS]";
inline constexpr std::string_view kPadText = "[PAD]";
inline constexpr std::string_view kUnkText = "[UNK]";
/// decode() renders unknown tokens as U+FFFD.
inline constexpr std::string_view kUnkGlyph = "\xEF\xBF\xBD";

/// Splits text into raw tokens: UTF-8 code points in char mode, runs of
/// non-whitespace in word mode. Throws on malformed UTF-8.
std::vector<std::string> split_tokens(std::string_view text, TokenizerMode mode);

class Vocab {
public:
    /// Specials only.
    Vocab() : Vocab(from_base_tokens({}, TokenizerMode::Char)) {}
    /// Specials at ids 0-3, then base tokens in first-occurrence order.
    static Vocab build(std::string_view corpus_text, TokenizerMode mode);
    static Vocab from_base_tokens(std::vector<std::string> base_tokens, TokenizerMode mode);

    std::size_t size() const { return tokens_.size(); }
    TokenizerMode mode() const { return mode_; }
    const std::string& token(TokenId id) const;
    /// Base-token lookup; specials are never returned.
    std::optional<TokenId> find(std::string_view token) const;
    std::vector<std::string> base_tokens() const;

    bool operator==(const Vocab& other) const { return mode_ == other.mode_ && tokens_ == other.tokens_; }

private:
    struct Empty {};
    explicit Vocab(Empty) {}
    void add_base(std::string token);

    TokenizerMode mode_ = TokenizerMode::Char;
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

Vocab build_vocab(std::string_view corpus_text, TokenizerMode mode);

/// A non-empty run of token ids containing no padding.
class TokenSequence {
public:
    explicit TokenSequence(std::vector<TokenId> ids);

    std::size_t size() const { return ids_.size(); }
    const std::vector<TokenId>& ids() const { return ids_; }
    TokenId operator[](std::size_t i) const { return ids_[i]; }
    auto begin() const { return ids_.begin(); }
    auto end() const { return ids_.end(); }

    bool operator==(const TokenSequence&) const = default;

private:
    std::vector<TokenId> ids_;
};

/// Token ids of text; out-of-vocabulary tokens map to the unknown id. May be empty.
std::vector<TokenId> encode_ids(std::string_view text, const Vocab& vocab);
/// Like encode_ids but enforces the non-empty sequence contract.
TokenSequence encode(std::string_view text, const Vocab& vocab);
std::string decode(std::span<const TokenId> ids, const Vocab& vocab);

/// Consecutive windows; only the last may be shorter. Empty stream gives no chunks.
std::vector<TokenSequence> chunk(std::span<const TokenId> stream, std::size_t window);

/// Add-one-smoothed distribution over lengths 1..n_max:
///   p(n) = (count[n] + 1) / (total + n_max)
class LengthDistribution {
public:
    LengthDistribution() : counts_(1, 0) {}
    static LengthDistribution estimate(std::span<const TokenSequence> sequences, std::size_t n_max);
    /// counts[n-1] is the number of sequences of length n.
    static LengthDistribution from_counts(std::vector<std::uint64_t> counts);

    std::size_t n_max() const { return counts_.size(); }
    std::uint64_t total() const { return total_; }
    std::uint64_t count(std::size_t n) const;
    const std::vector<std::uint64_t>& counts() const { return counts_; }
    /// Exact numerator and denominator of p(n).
    std::pair<std::uint64_t, std::uint64_t> ratio(std::size_t n) const;
    double probability(std::size_t n) const;
    double log_probability(std::size_t n) const;
    std::size_t sample(Rng& rng) const;

private:
    std::vector<std::uint64_t> counts_;
    std::uint64_t total_ = 0;
};

enum class DocumentSplit { File, Line };

/// Reads documents from a file or every regular file of a directory (sorted by
/// name). In line mode each non-empty line is its own document.
std::vector<std::string> load_documents(const std::filesystem::path& path, DocumentSplit split);
std::string read_text_file(const std::filesystem::path& path);

/// Encodes each document and windows it; boundaries between documents reset chunking.
std::vector<TokenSequence> make_sequences(std::span<const std::string> documents, const Vocab& vocab,
                                          std::size_t window);

}  // namespace film
