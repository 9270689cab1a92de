#include "film/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace film {

namespace {

// Returns the byte length of the UTF-8 sequence starting at text[i] and its
// code point. Throws on malformed input.
std::pair<std::size_t, char32_t> next_code_point(std::string_view text, std::size_t i) {
    const auto byte = [&](std::size_t j) { return static_cast<unsigned char>(text[j]); };
    const unsigned char lead = byte(i);
    std::size_t len = 0;
    char32_t cp = 0;
    if (lead < 0x80) {
        return {1, lead};
    } else if ((lead & 0xE0) == 0xC0) {
        len = 2;
        cp = lead & 0x1F;
    } else if ((lead & 0xF0) == 0xE0) {
        len = 3;
        cp = lead & 0x0F;
    } else if ((lead & 0xF8) == 0xF0) {
        len = 4;
        cp = lead & 0x07;
    } else {
        throw std::invalid_argument("invalid UTF-8 lead byte at offset " + std::to_string(i));
    }
    if (i + len > text.size()) throw std::invalid_argument("truncated UTF-8 sequence at offset " + std::to_string(i));
    for (std::size_t j = 1; j < len; ++j) {
        if ((byte(i + j) & 0xC0) != 0x80) {
            throw std::invalid_argument("invalid UTF-8 continuation byte at offset " + std::to_string(i + j));
        }
        cp = (cp << 6) | (byte(i + j) & 0x3F);
    }
    const bool overlong = (len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000);
    if (overlong || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
        throw std::invalid_argument("invalid UTF-8 code point at offset " + std::to_string(i));
    }
    return {len, cp};
}

bool is_unicode_space(char32_t c) {
    switch (c) {
        case U' ': case U'\t': case U'\n': case U'\v': case U'\f': case U'\r':
        case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
        case 0x202F: case 0x205F: case 0x3000:
            return true;
        default:
            return c >= 0x2000 && c <= 0x200A;
    }
}

}  // namespace

std::string to_string(TokenizerMode mode) { return mode == TokenizerMode::Char ? "char" : "word"; }

TokenizerMode parse_tokenizer_mode(std::string_view name) {
    if (name == "char") return TokenizerMode::Char;
    if (name == "word") return TokenizerMode::Word;
    throw std::invalid_argument("unknown tokenizer mode '" + std::string(name) + "' (expected char or word)");
}

std::vector<std::string> split_tokens(std::string_view text, TokenizerMode mode) {
    std::vector<std::string> out;
    std::string word;
    for (std::size_t i = 0; i < text.size();) {
        const auto [len, cp] = next_code_point(text, i);
        const std::string_view piece = text.substr(i, len);
        i += len;
        if (mode == TokenizerMode::Char) {
            out.emplace_back(piece);
        } else if (is_unicode_space(cp)) {
            if (!word.empty()) out.push_back(std::move(word));
            word.clear();
        } else {
            word.append(piece);
        }
    }
    if (!word.empty()) out.push_back(std::move(word));
    return out;
}

Vocab Vocab::build(std::string_view corpus_text, TokenizerMode mode) {
    if (corpus_text.empty()) throw std::invalid_argument("build_vocab: corpus text is empty");
    Vocab v = from_base_tokens({}, mode);
    for (std::string& t : split_tokens(corpus_text, mode)) {
        if (!v.index_.contains(t)) v.add_base(std::move(t));
    }
    if (v.size() == kNumSpecial) throw std::invalid_argument("build_vocab: corpus contains no tokens");
    return v;
}

Vocab Vocab::from_base_tokens(std::vector<std::string> base_tokens, TokenizerMode mode) {
    Vocab v{Empty{}};
    v.mode_ = mode;
    v.tokens_ = {std::string(kMaskText), std::string(kEosText), std::string(kPadText), std::string(kUnkText)};
    for (std::string& t : base_tokens) {
        if (v.index_.contains(t)) throw std::invalid_argument("vocab: duplicate token '" + t + "'");
        v.add_base(std::move(t));
    }
    return v;
}

void Vocab::add_base(std::string token) {
    index_.emplace(token, static_cast<TokenId>(tokens_.size()));
    tokens_.push_back(std::move(token));
}

const std::string& Vocab::token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of size " +
                                std::to_string(tokens_.size()));
    }
    return tokens_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Vocab::find(std::string_view token) const {
    const auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::string> Vocab::base_tokens() const {
    return {tokens_.begin() + kNumSpecial, tokens_.end()};
}

Vocab build_vocab(std::string_view corpus_text, TokenizerMode mode) { return Vocab::build(corpus_text, mode); }

TokenSequence::TokenSequence(std::vector<TokenId> ids) : ids_(std::move(ids)) {
    if (ids_.empty()) throw std::invalid_argument("token sequence must contain at least one token");
    if (std::find(ids_.begin(), ids_.end(), kPadId) != ids_.end()) {
        throw std::invalid_argument("token sequence must not contain padding");
    }
}

std::vector<TokenId> encode_ids(std::string_view text, const Vocab& vocab) {
    std::vector<TokenId> ids;
    for (const std::string& t : split_tokens(text, vocab.mode())) ids.push_back(vocab.find(t).value_or(kUnkId));
    return ids;
}

TokenSequence encode(std::string_view text, const Vocab& vocab) {
    std::vector<TokenId> ids = encode_ids(text, vocab);
    if (ids.empty()) throw std::invalid_argument("encode: text yields no tokens");
    return TokenSequence(std::move(ids));
}

std::string decode(std::span<const TokenId> ids, const Vocab& vocab) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (vocab.mode() == TokenizerMode::Word && i > 0) out.push_back(' ');
        if (ids[i] == kUnkId) {
            out.append(kUnkGlyph);
        } else {
            out.append(vocab.token(ids[i]));
        }
    }
    return out;
}

std::vector<TokenSequence> chunk(std::span<const TokenId> stream, std::size_t window) {
    if (window == 0) throw std::invalid_argument("chunk: window must be >= 1");
    std::vector<TokenSequence> out;
    for (std::size_t start = 0; start < stream.size(); start += window) {
        const std::size_t end = std::min(stream.size(), start + window);
        out.emplace_back(std::vector<TokenId>(stream.begin() + static_cast<std::ptrdiff_t>(start),
                                              stream.begin() + static_cast<std::ptrdiff_t>(end)));
    }
    return out;
}

LengthDistribution LengthDistribution::estimate(std::span<const TokenSequence> sequences, std::size_t n_max) {
    if (n_max == 0) throw std::invalid_argument("length distribution: n_max must be >= 1");
    std::vector<std::uint64_t> counts(n_max, 0);
    for (const TokenSequence& s : sequences) {
        if (s.size() > n_max) {
            throw std::invalid_argument("length distribution: sequence of length " + std::to_string(s.size()) +
                                        " exceeds n_max " + std::to_string(n_max));
        }
        ++counts[s.size() - 1];
    }
    return from_counts(std::move(counts));
}

LengthDistribution LengthDistribution::from_counts(std::vector<std::uint64_t> counts) {
    if (counts.empty()) throw std::invalid_argument("length distribution: n_max must be >= 1");
    LengthDistribution d;
    d.counts_ = std::move(counts);
    for (std::uint64_t c : d.counts_) d.total_ += c;
    return d;
}

std::uint64_t LengthDistribution::count(std::size_t n) const {
    if (n < 1 || n > counts_.size()) {
        throw std::out_of_range("length " + std::to_string(n) + " outside 1.." + std::to_string(counts_.size()));
    }
    return counts_[n - 1];
}

std::pair<std::uint64_t, std::uint64_t> LengthDistribution::ratio(std::size_t n) const {
    return {count(n) + 1, total_ + counts_.size()};
}

double LengthDistribution::probability(std::size_t n) const {
    const auto [num, den] = ratio(n);
    return static_cast<double>(num) / static_cast<double>(den);
}

double LengthDistribution::log_probability(std::size_t n) const {
    const auto [num, den] = ratio(n);
    return std::log(static_cast<double>(num)) - std::log(static_cast<double>(den));
}

std::size_t LengthDistribution::sample(Rng& rng) const {
    std::uniform_int_distribution<std::uint64_t> pick(0, total_ + counts_.size() - 1);
    std::uint64_t u = pick(rng);
    for (std::size_t n = 1; n <= counts_.size(); ++n) {
        const std::uint64_t w = counts_[n - 1] + 1;
        if (u < w) return n;
        u -= w;
    }
    return counts_.size();
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw std::runtime_error("error reading '" + path.string() + "'");
    return ss.str();
}

std::vector<std::string> load_documents(const std::filesystem::path& path, DocumentSplit split) {
    std::vector<std::filesystem::path> files;
    if (std::filesystem::is_directory(path)) {
        for (const auto& entry : std::filesystem::directory_iterator(path)) {
            if (entry.is_regular_file()) files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
    } else {
        files.push_back(path);
    }
    std::vector<std::string> docs;
    for (const auto& f : files) {
        std::string text = read_text_file(f);
        if (split == DocumentSplit::File) {
            if (!text.empty()) docs.push_back(std::move(text));
            continue;
        }
        std::istringstream lines(text);
        std::string line;
        while (std::getline(lines, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) docs.push_back(line);
        }
    }
    if (docs.empty()) throw std::runtime_error("no documents found at '" + path.string() + "'");
    return docs;
}

std::vector<TokenSequence> make_sequences(std::span<const std::string> documents, const Vocab& vocab,
                                          std::size_t window) {
    std::vector<TokenSequence> out;
    for (const std::string& doc : documents) {
        const std::vector<TokenId> ids = encode_ids(doc, vocab);
        for (TokenSequence& s : chunk(ids, window)) out.push_back(std::move(s));
    }
    return out;
}

}  // namespace film
