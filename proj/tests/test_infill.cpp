#include <doctest.h>

#include <algorithm>
#include <map>
#include <sstream>

#include "film/infill.hpp"
#include "support.hpp"

using namespace film;

namespace {

std::vector<std::string> words(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

// Causal oracle over every task's rearranged sequence, framed by the begin and
// end markers.
test::StubModel cm_oracle(const std::vector<InfillTask>& tasks, const SentinelLayout& layout, std::size_t n_max) {
    std::vector<std::vector<TokenId>> targets;
    for (const InfillTask& t : tasks) {
        std::vector<TokenId> s{kEosId};
        const auto cm = cm_transform(t.original, t.spans, layout);
        s.insert(s.end(), cm.begin(), cm.end());
        s.push_back(kEosId);
        targets.push_back(std::move(s));
    }
    return test::causal_oracle(targets, layout.extended_size(), n_max);
}

}  // namespace

TEST_CASE("spans from endpoints") {
    const std::vector<std::size_t> e{3, 6};
    const SpanSpec s = spans_from_endpoints(e, 10);
    CHECK(s.masked_positions() == std::vector<std::size_t>{2, 3, 4});
    const std::vector<std::size_t> odd{3}, unsorted{6, 3}, outside{3, 11};
    CHECK_THROWS(spans_from_endpoints(odd, 10));
    CHECK_THROWS(spans_from_endpoints(unsorted, 10));
    CHECK_THROWS(spans_from_endpoints(outside, 10));
    SpanSpec overlap{{{1, 3}, {2, 4}}};
    CHECK_THROWS(overlap.validate(5));
}

TEST_CASE("sample_spans: n = 2 has one possible draw") {
    Rng rng(0);
    for (int i = 0; i < 20; ++i) {
        const SpanSpec s = sample_spans(2, rng);
        REQUIRE(s.spans.size() == 1);
        CHECK(s.spans[0] == Span{1, 2});
    }
    CHECK_THROWS_AS(sample_spans(1, rng), std::invalid_argument);
}

TEST_CASE("sample_spans: the span count is uniform on 1..5") {
    Rng rng(31);
    std::vector<double> counts(5, 0.0);
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
        const SpanSpec s = sample_spans(100, rng);
        s.validate(100);
        for (const Span& sp : s.spans) {
            CHECK(sp.end <= 100);
        }
        counts[s.spans.size() - 1] += 1;
    }
    const std::vector<double> expected(5, draws / 5.0);
    CHECK(test::chi_square_p(counts, expected) > 1e-3);
    for (int i = 0; i < 200; ++i) CHECK(sample_spans(5, rng).spans.size() <= 2);
}

TEST_CASE("causal-masking rearrangement of the worked example") {
    const Vocab v = build_vocab("They have really good ice cream", TokenizerMode::Word);
    const SentinelLayout layout(v.size());
    const auto x = encode_ids("They have really good ice cream", v);
    const std::vector<std::size_t> e{2, 4, 5, 6};
    const auto cm = cm_transform(x, spans_from_endpoints(e, x.size()), layout);
    CHECK(render_extended(cm, v, layout) == "They [MASK:0] good [MASK:1] cream [FILL:0] have really [FILL:1] ice");
    CHECK(cm_reintegrate(cm, layout) == x);
    CHECK(cm_transform(x, SpanSpec{}, layout) == x);

    SpanSpec six;
    for (std::size_t i = 1; i <= 6; ++i) six.spans.push_back({i, i + 1});
    CHECK_THROWS(cm_transform(x, six, layout));
}

TEST_CASE("reintegration: truncation and malformed input") {
    const SentinelLayout layout(10);
    const TokenId m0 = layout.mask(0), m1 = layout.mask(1), f0 = layout.fill(0), f1 = layout.fill(1);
    // They [MASK:0] good [MASK:1] cream [FILL:0] have really  (then stop)
    const std::vector<TokenId> cut{4, m0, 7, m1, 9, f0, 5, 6, kEosId, f1, 8};
    CHECK(cm_reintegrate(cut, layout) == std::vector<TokenId>{4, 5, 6, 7, 9});
    const std::vector<TokenId> no_mask{4, m0, 7, f0, 5, f1, 8};
    CHECK_THROWS(cm_reintegrate(no_mask, layout));
    const std::vector<TokenId> out_of_order{4, m0, 7, m1, f1, 8, f0, 5};
    CHECK_THROWS(cm_reintegrate(out_of_order, layout));
    const std::vector<TokenId> mask_in_fill{4, m0, 7, m1, f0, m1};
    CHECK_THROWS(cm_reintegrate(mask_in_fill, layout));
    CHECK(layout.is_mask(m1));
    CHECK(layout.index_of(f1) == 1);
    CHECK(layout.extended_size() == 20);
}

TEST_CASE("rearrangement round trips and preserves the token multiset") {
    Rng rng(77);
    std::uniform_int_distribution<std::size_t> len(2, 60);
    std::uniform_int_distribution<TokenId> tok(3, 29);
    const SentinelLayout layout(30);
    for (int trial = 0; trial < 2000; ++trial) {
        std::vector<TokenId> x(len(rng));
        for (TokenId& t : x) t = tok(rng);
        const SpanSpec s = sample_spans(x.size(), rng);
        const auto cm = cm_transform(x, s, layout);
        CHECK(cm_reintegrate(cm, layout) == x);
        CHECK(cm.size() == x.size() + 2 * s.spans.size());
        std::vector<TokenId> plain;
        for (TokenId t : cm) {
            if (!layout.is_mask(t) && !layout.is_fill(t)) plain.push_back(t);
        }
        std::sort(plain.begin(), plain.end());
        auto sorted = x;
        std::sort(sorted.begin(), sorted.end());
        CHECK(plain == sorted);
    }
}

TEST_CASE("span tasks mask exactly the span tokens") {
    const std::vector<TokenId> x{4, 5, 6, 7, 8, 9, 10};
    const SpanSpec s{{{2, 4}, {6, 8}}};
    const InfillTask t = make_span_task(x, s);
    CHECK(t.context.ids == std::vector<TokenId>{4, kMaskId, kMaskId, 7, 8, kMaskId, kMaskId});
    CHECK(t.reference_fills == std::vector<std::vector<TokenId>>{{5, 6}, {9, 10}});
    CHECK(t.context.restore() == x);
}

TEST_CASE("sentence drop") {
    const std::vector<std::vector<TokenId>> story{{4, 5}, {6}, {7, 8, 9}, {10}, {11, 12}};
    Rng rng(3);
    const InfillTask t = drop_sentence(story, rng);
    CHECK(t.kind == TaskKind::SentenceDrop);
    REQUIRE(t.reference_fills.size() == 1);
    const auto it = std::find(story.begin(), story.end(), t.reference_fills[0]);
    CHECK(it != story.end());
    CHECK(t.context.mask_count() == t.reference_fills[0].size());
    CHECK(t.context.restore() == t.original);

    std::vector<double> counts(5, 0.0);
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
        const InfillTask d = drop_sentence(story, rng);
        counts[static_cast<std::size_t>(d.spans.spans[0].begin == 1   ? 0
                                        : d.spans.spans[0].begin == 3 ? 1
                                        : d.spans.spans[0].begin == 4 ? 2
                                        : d.spans.spans[0].begin == 7 ? 3
                                                                      : 4)] += 1;
    }
    const std::vector<double> expected(5, draws / 5.0);
    CHECK(test::chi_square_p(counts, expected) > 1e-3);

    const std::vector<std::vector<TokenId>> one{{4, 5}};
    CHECK_THROWS_AS(drop_sentence(one, rng), std::invalid_argument);
    CHECK(split_sentences("One. Two!  Three? four") ==
          std::vector<std::string>{"One. ", "Two!  ", "Three? ", "four"});
}

TEST_CASE("ROUGE fixtures") {
    const auto same = rouge(words("the cat sat on the mat"), words("the cat sat on the mat"));
    CHECK(same.rouge1.f1 == 1.0);
    CHECK(same.rouge2.f1 == 1.0);
    CHECK(same.rougeL.f1 == 1.0);
    const auto disjoint = rouge(words("a b c"), words("x y z"));
    CHECK(disjoint.rouge1.f1 == 0.0);
    CHECK(disjoint.rouge2.f1 == 0.0);
    CHECK(disjoint.rougeL.f1 == 0.0);
    const auto partial = rouge(words("the cat"), words("the cat sat"));
    CHECK(partial.rouge1.precision == 1.0);
    CHECK(partial.rouge1.recall == doctest::Approx(2.0 / 3));
    CHECK(partial.rouge1.f1 == 0.8);
    CHECK(partial.rougeL.f1 == 0.8);
    CHECK(partial.rouge2.f1 == doctest::Approx(2.0 / 3));
    CHECK(rouge(words("The CAT"), words("the cat")).rouge1.f1 == 1.0);
    CHECK(rouge(words("cat"), words("Cat")).rouge2.f1 == 1.0);
    CHECK(rouge(words("cat"), words("dog")).rouge2.f1 == 0.0);
    const auto empty = rouge({}, words("a"));
    CHECK(empty.rouge1.f1 == 0.0);
    // Clipped counts: repeating a matched word does not add hits.
    CHECK(rouge(words("the the the"), words("the cat")).rouge1.precision == doctest::Approx(1.0 / 3));
}

TEST_CASE("ROUGE swaps precision and recall when arguments swap") {
    Rng rng(6);
    std::uniform_int_distribution<int> w(0, 5), len(0, 8);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<std::string> a(static_cast<std::size_t>(len(rng))), b(static_cast<std::size_t>(len(rng)));
        for (auto& s : a) s = std::string(1, static_cast<char>('a' + w(rng)));
        for (auto& s : b) s = std::string(1, static_cast<char>('a' + w(rng)));
        const auto ab = rouge(a, b), ba = rouge(b, a);
        for (auto [x, y] : {std::pair{ab.rouge1, ba.rouge1}, std::pair{ab.rouge2, ba.rouge2},
                            std::pair{ab.rougeL, ba.rougeL}}) {
            CHECK(x.precision == doctest::Approx(y.recall));
            CHECK(x.f1 == doctest::Approx(y.f1));
            CHECK(x.f1 >= 0.0);
            CHECK(x.f1 <= 1.0);
        }
    }
}

TEST_CASE("benchmark: copy oracles score 1 and reports are deterministic") {
    const Vocab vocab = build_vocab("abcdefgh", TokenizerMode::Char);
    const SentinelLayout layout(vocab.size());
    // Distinct lengths let the fill-in oracle identify each sequence.
    BenchmarkCorpus corpus;
    Rng gen(2);
    std::uniform_int_distribution<TokenId> tok(4, 11);
    for (std::size_t n = 4; n < 16; ++n) {
        std::vector<TokenId> x(n);
        for (TokenId& t : x) t = tok(gen);
        corpus.sequences.push_back(std::move(x));
    }
    BenchmarkOptions opt;
    opt.seed = 9;
    const auto film = test::fill_oracle(corpus.sequences, vocab.size(), 16);
    const auto cm = cm_oracle(make_benchmark_tasks(corpus, opt), layout, 16 + 11);
    const BenchmarkReport a = run_benchmark(film, cm, vocab, corpus, opt);
    const BenchmarkReport b = run_benchmark(film, cm, vocab, corpus, opt);
    CHECK(a.text() == b.text());
    CHECK(a.lines.size() == corpus.sequences.size() + 2);
    CHECK(a.film_mean.rouge1.f1 == 1.0);
    CHECK(a.film_mean.rougeL.f1 == 1.0);
    CHECK(a.cm_mean.rouge1.f1 == 1.0);
    CHECK(a.cm_mean.rougeL.f1 == 1.0);
    CHECK(a.text().find("\"rouge_mode\":\"fills\"") != std::string::npos);

    opt.seed = 10;
    CHECK(run_benchmark(film, cm, vocab, corpus, opt).text() != a.text());

    opt.limit = 3;
    CHECK(run_benchmark(film, cm, vocab, corpus, opt).lines.size() == 5);
}

TEST_CASE("benchmark: a constant-token model earns no bigram credit") {
    const Vocab vocab = build_vocab("abcdefgh", TokenizerMode::Char);
    const SentinelLayout layout(vocab.size());
    BenchmarkCorpus corpus;
    for (std::size_t n = 4; n < 12; ++n) {
        std::vector<TokenId> x(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<TokenId>(4 + i % 7);
        corpus.sequences.push_back(std::move(x));
    }
    const auto constant = [](std::size_t v, AttentionMode mode, std::size_t n_max) {
        return test::StubModel(v, n_max, mode, [v](std::span<const TokenId> ids) {
            Logits l = test::constant_logits(ids.size(), v);
            for (std::size_t r = 0; r < ids.size(); ++r) l.data[r * v + 11] = 30;
            return l;
        });
    };
    BenchmarkOptions opt;
    opt.max_fill_tokens_per_span = 4;
    const auto film = constant(vocab.size(), AttentionMode::Bidirectional, 12);
    const auto cm = constant(layout.extended_size(), AttentionMode::Causal, 23);
    const BenchmarkReport r = run_benchmark(film, cm, vocab, corpus, opt);
    CHECK(r.film_mean.rouge2.f1 == 0.0);
    CHECK(r.cm_mean.rouge2.f1 == 0.0);

    const auto wrong = constant(vocab.size() + 1, AttentionMode::Bidirectional, 12);
    CHECK_THROWS_AS(run_benchmark(wrong, cm, vocab, corpus, opt), std::invalid_argument);
    CHECK_THROWS_AS(run_benchmark(cm, film, vocab, corpus, opt), std::invalid_argument);
}
