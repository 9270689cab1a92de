#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "film/corpus.hpp"
#include "film/synthetic.hpp"

using namespace film;

TEST_CASE("build_vocab examples") {
    const Vocab v = build_vocab("abc", TokenizerMode::Char);
    CHECK(v.size() == 7);
    CHECK(v.find("a") == 4);
    CHECK(v.find("c") == 6);
    CHECK(build_vocab("abc", TokenizerMode::Char) == v);
    CHECK(encode_ids("abd", v) == std::vector<TokenId>{4, 5, kUnkId});
    CHECK_THROWS_AS(build_vocab("", TokenizerMode::Char), std::invalid_argument);
}

TEST_CASE("vocab order follows first occurrence and specials are fixed") {
    const Vocab v = build_vocab("the cat the dog", TokenizerMode::Word);
    CHECK(v.base_tokens() == std::vector<std::string>{"the", "cat", "dog"});
    CHECK(v.token(kMaskId) == "[MASK]");
    CHECK(v.token(kEosId) == "[EOS]");
    CHECK(v.token(kPadId) == "[PAD]");
    CHECK(v.token(kUnkId) == "[UNK]");
    CHECK_FALSE(v.find("[MASK]").has_value());
}

TEST_CASE("raw text never tokenizes to a special id") {
    const Vocab v = build_vocab("[MASK] [EOS] x", TokenizerMode::Word);
    for (TokenId id : encode_ids("[MASK] [EOS] [PAD] [UNK] x", v)) CHECK(id >= kNumSpecial - 1);
    for (TokenId id : encode_ids("[MASK] [EOS] x", v)) CHECK(id >= kNumSpecial);
}

TEST_CASE("encode / decode") {
    const Vocab w = build_vocab("hello world", TokenizerMode::Word);
    CHECK(decode(encode("hello world", w).ids(), w) == "hello world");
    CHECK_THROWS_AS(encode("", w), std::invalid_argument);
    const std::vector<TokenId> mask{kMaskId};
    CHECK(decode(mask, w) == "[MASK]");
    const std::vector<TokenId> bad{99};
    CHECK_THROWS_AS(decode(bad, w), std::out_of_range);
    const std::vector<TokenId> unk{kUnkId};
    CHECK(decode(unk, w) == std::string(kUnkGlyph));

    const Vocab c = build_vocab("héllo wörld", TokenizerMode::Char);
    CHECK(decode(encode("wörld héllo", c).ids(), c) == "wörld héllo");
    CHECK_THROWS_AS(split_tokens("\xff", TokenizerMode::Char), std::invalid_argument);
}

TEST_CASE("token -> id -> token round-trips for every entry") {
    const Vocab v = build_vocab(synthetic_text(2000, 3), TokenizerMode::Char);
    for (TokenId id = kNumSpecial; static_cast<std::size_t>(id) < v.size(); ++id) CHECK(v.find(v.token(id)) == id);
}

TEST_CASE("chunk examples") {
    const std::vector<TokenId> ten(10, 5), four(4, 5), three(3, 5);
    const auto lengths = [](const std::vector<TokenSequence>& cs) {
        std::vector<std::size_t> out;
        for (const auto& c : cs) out.push_back(c.size());
        return out;
    };
    CHECK(lengths(chunk(ten, 4)) == std::vector<std::size_t>{4, 4, 2});
    CHECK(lengths(chunk(four, 4)) == std::vector<std::size_t>{4});
    CHECK(lengths(chunk(three, 4)) == std::vector<std::size_t>{3});
    CHECK(chunk(std::vector<TokenId>{}, 4).empty());
    CHECK_THROWS_AS(chunk(ten, 0), std::invalid_argument);
}

TEST_CASE("chunk is an order-preserving partition") {
    Rng rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        std::uniform_int_distribution<std::size_t> len(0, 100), win(1, 20);
        std::uniform_int_distribution<TokenId> tok(4, 30);
        std::vector<TokenId> stream(len(rng));
        for (TokenId& t : stream) t = tok(rng);
        const std::size_t w = win(rng);
        const auto chunks = chunk(stream, w);
        std::vector<TokenId> joined;
        for (std::size_t i = 0; i < chunks.size(); ++i) {
            if (i + 1 < chunks.size()) CHECK(chunks[i].size() == w);
            joined.insert(joined.end(), chunks[i].begin(), chunks[i].end());
        }
        CHECK(joined == stream);
    }
}

TEST_CASE("length distribution examples") {
    const std::vector<TokenSequence> one{TokenSequence({4, 5})};
    const LengthDistribution d = LengthDistribution::estimate(one, 3);
    CHECK(d.ratio(1) == std::pair<std::uint64_t, std::uint64_t>{1, 4});
    CHECK(d.ratio(2) == std::pair<std::uint64_t, std::uint64_t>{2, 4});
    CHECK(d.ratio(3) == std::pair<std::uint64_t, std::uint64_t>{1, 4});

    const LengthDistribution empty = LengthDistribution::estimate({}, 2);
    CHECK(empty.probability(1) == 0.5);
    CHECK(empty.probability(2) == 0.5);

    const std::vector<TokenSequence> three{TokenSequence({4, 4, 4}), TokenSequence({4, 4, 4}),
                                           TokenSequence({4, 4, 4, 4, 4})};
    const LengthDistribution e = LengthDistribution::estimate(three, 5);
    CHECK(e.ratio(3) == std::pair<std::uint64_t, std::uint64_t>{3, 8});
    CHECK(e.ratio(5) == std::pair<std::uint64_t, std::uint64_t>{2, 8});
    for (std::size_t n : {1, 2, 4}) CHECK(e.ratio(n) == std::pair<std::uint64_t, std::uint64_t>{1, 8});

    CHECK_THROWS_AS(LengthDistribution::estimate(three, 4), std::invalid_argument);
}

TEST_CASE("length distribution sums to one and is positive everywhere") {
    Rng rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        std::uniform_int_distribution<std::size_t> nmax_d(1, 40);
        const std::size_t n_max = nmax_d(rng);
        std::uniform_int_distribution<std::size_t> len(1, n_max), count(0, 30);
        std::vector<TokenSequence> seqs;
        for (std::size_t i = 0, k = count(rng); i < k; ++i) seqs.emplace_back(std::vector<TokenId>(len(rng), 4));
        const LengthDistribution d = LengthDistribution::estimate(seqs, n_max);
        std::uint64_t num = 0;
        double sum = 0;
        for (std::size_t n = 1; n <= n_max; ++n) {
            const auto [a, b] = d.ratio(n);
            CHECK(b == seqs.size() + n_max);
            CHECK(d.probability(n) > 0);
            num += a;
            sum += d.probability(n);
        }
        CHECK(num == seqs.size() + n_max);
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("length sampling follows the smoothed probabilities") {
    const LengthDistribution d = LengthDistribution::from_counts({0, 0, 1000});
    Rng rng(1);
    std::size_t threes = 0;
    for (int i = 0; i < 10000; ++i) threes += d.sample(rng) == 3;
    CHECK(threes > 9900);
}

TEST_CASE("documents load from files, directories and lines") {
    const auto dir = std::filesystem::temp_directory_path() / "film_corpus_test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "b.txt") << "second doc\n";
    std::ofstream(dir / "a.txt") << "first\r\n\nline two\n";
    const auto files = load_documents(dir, DocumentSplit::File);
    REQUIRE(files.size() == 2);
    CHECK(files[0] == "first\r\n\nline two\n");
    const auto lines = load_documents(dir / "a.txt", DocumentSplit::Line);
    CHECK(lines == std::vector<std::string>{"first", "line two"});
    CHECK_THROWS(load_documents(dir / "missing.txt", DocumentSplit::File));

    // Document boundaries reset chunking.
    const Vocab v = build_vocab("abc", TokenizerMode::Char);
    const std::vector<std::string> docs{"abc", "ab"};
    const auto seqs = make_sequences(docs, v, 2);
    REQUIRE(seqs.size() == 3);
    CHECK(seqs[1].size() == 1);
    CHECK(seqs[2].size() == 2);
    std::filesystem::remove_all(dir);
}

TEST_CASE("synthetic corpora are seeded") {
    CHECK(synthetic_text(500, 1) == synthetic_text(500, 1));
    CHECK(synthetic_text(500, 1) != synthetic_text(500, 2));
    const auto stories = synthetic_stories(3, 4);
    REQUIRE(stories.size() == 3);
    for (const auto& s : stories) CHECK(s.size() == 5);
}
