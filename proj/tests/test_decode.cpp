#include <doctest.h>

#include <cmath>
#include <numeric>

#include "film/decode.hpp"
#include "support.hpp"

using namespace film;

TEST_CASE("entropy examples") {
    const std::vector<double> uniform(8, 0.125), onehot{0, 1, 0}, half{0.5, 0.5};
    CHECK(entropy(uniform) == doctest::Approx(std::log(8.0)));
    CHECK(entropy(onehot) == 0.0);
    CHECK(entropy(half) == doctest::Approx(0.693147).epsilon(1e-6));
    const std::vector<double> neg{1.5, -0.5}, short_mass{0.5, 0.4};
    CHECK_THROWS_AS(entropy(neg), std::invalid_argument);
    CHECK_THROWS_AS(entropy(short_mass), std::invalid_argument);
}

TEST_CASE("select_position examples") {
    Rng rng(0);
    const std::vector<std::size_t> masks{2, 5, 7};
    CHECK(select_position(OrderPolicy::LeftToRight, masks, {}, rng) == 2);
    CHECK(select_position(OrderPolicy::RightToLeft, masks, {}, rng) == 7);

    const std::vector<std::size_t> two{3, 6};
    const std::vector<std::vector<double>> dists{{0.25, 0.25, 0.25, 0.25}, {0, 0, 1, 0}};
    CHECK(select_position(OrderPolicy::MinEntropy, two, dists, rng) == 6);
    CHECK(select_position(OrderPolicy::MaxEntropy, two, dists, rng) == 3);

    const std::vector<std::vector<double>> same(3, std::vector<double>{0.5, 0.5});
    CHECK(select_position(OrderPolicy::MinEntropy, masks, same, rng) == 2);
    CHECK(select_position(OrderPolicy::MaxEntropy, masks, same, rng) == 2);
    CHECK_THROWS(select_position(OrderPolicy::LeftToRight, std::span<const std::size_t>{}, {}, rng));
}

TEST_CASE("random selection is uniform over the candidates") {
    Rng rng(9);
    const std::vector<std::size_t> masks{1, 4, 6, 9};
    std::vector<double> counts(4, 0.0);
    const int draws = 40000;
    for (int i = 0; i < draws; ++i) {
        const std::size_t p = select_position(OrderPolicy::Random, masks, {}, rng);
        counts[static_cast<std::size_t>(std::find(masks.begin(), masks.end(), p) - masks.begin())] += 1;
    }
    const std::vector<double> expected(4, draws / 4.0);
    CHECK(test::chi_square_p(counts, expected) > 1e-3);
}

TEST_CASE("entropy choice ignores how masks are labelled") {
    Rng rng(4);
    std::uniform_real_distribution<double> u(0.01, 1);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::vector<double>> d(5, std::vector<double>(6));
        for (auto& row : d) {
            for (double& v : row) v = u(rng);
            const double s = std::accumulate(row.begin(), row.end(), 0.0);
            for (double& v : row) v /= s;
        }
        std::vector<std::size_t> a{0, 1, 2, 3, 4}, b{10, 3, 7, 1, 20};
        for (OrderPolicy p : {OrderPolicy::MinEntropy, OrderPolicy::MaxEntropy}) {
            const std::size_t ia = select_position(p, a, d, rng);
            const std::size_t ib = select_position(p, b, d, rng);
            CHECK(b[ia] == ib);
        }
    }
}

TEST_CASE("nucleus keeps the crossing token") {
    const std::vector<double> p{0.2, 0.5, 0.3};
    const auto n = nucleus(p, 0.8);
    CHECK(n[0] == 0.0);
    CHECK(n[1] == doctest::Approx(0.625));
    CHECK(n[2] == doctest::Approx(0.375));
    const auto crossing = nucleus(p, 0.6);
    CHECK(crossing[2] == doctest::Approx(0.375));
    const auto tiny = nucleus(p, 1e-9);
    CHECK(tiny == std::vector<double>{0, 1, 0});
    const auto all = nucleus(p, 1.0);
    for (std::size_t i = 0; i < 3; ++i) CHECK(all[i] == doctest::Approx(p[i]));
}

TEST_CASE("sample_token examples") {
    Rng rng(1);
    const std::vector<double> probs{0.1, 0.7, 0.2};
    std::vector<double> logits;
    for (double p : probs) logits.push_back(std::log(p));
    CHECK(sample_token(logits, SamplerConfig::argmax(), rng) == 1);
    const std::vector<double> tie{1, 3, 3};
    CHECK(sample_token(tie, SamplerConfig::argmax(), rng) == 1);
    const std::vector<TokenId> ban{1};
    CHECK(sample_token(logits, SamplerConfig::argmax(), rng, ban) == 2);
    for (int i = 0; i < 100; ++i) CHECK(sample_token(logits, SamplerConfig::nucleus(1e-6, 1.0), rng) == 1);

    std::vector<double> counts(3, 0.0);
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) counts[static_cast<std::size_t>(sample_token(logits, SamplerConfig{}, rng))] += 1;
    const std::vector<double> expected{0.1 * draws, 0.7 * draws, 0.2 * draws};
    CHECK(test::chi_square_p(counts, expected) > 1e-3);

    CHECK_THROWS_AS(sample_token(logits, SamplerConfig::nucleus(0.0, 1.0), rng), std::invalid_argument);
    CHECK_THROWS_AS(sample_token(logits, SamplerConfig::nucleus(0.9, 0.0), rng), std::invalid_argument);
}

TEST_CASE("temperature never changes the greedy choice") {
    Rng rng(2);
    std::normal_distribution<double> nd(0, 3);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<double> l(9);
        for (double& v : l) v = nd(rng);
        const std::size_t best = argmax(l);
        for (double t : {0.1, 0.8, 1.0, 5.0}) CHECK(argmax(softmax(l, t)) == best);
    }
}

TEST_CASE("fill_in loop contract") {
    const auto model = test::random_model(10, 8, AttentionMode::Bidirectional);
    Rng rng(3);
    const std::vector<TokenId> none{4, 5, 6};
    const FillResult r0 = fill_in(model, none, OrderPolicy::LeftToRight, SamplerConfig::argmax(), rng);
    CHECK(r0.ids == none);
    CHECK(r0.forward_passes == 0);

    test::StubModel counted(10, 8, AttentionMode::Bidirectional,
                            [](std::span<const TokenId> ids) { return test::constant_logits(ids.size(), 10); });
    const std::vector<TokenId> three{kMaskId, 5, kMaskId, kMaskId};
    const FillResult r3 = fill_in(counted, three, OrderPolicy::Random, SamplerConfig{}, rng);
    CHECK(counted.calls == 3);
    CHECK(r3.forward_passes == 3);

    const std::vector<TokenId> long_ids(9, kMaskId);
    CHECK_THROWS_AS(fill_in(model, long_ids, OrderPolicy::LeftToRight, SamplerConfig::argmax(), rng),
                    std::invalid_argument);
    const auto causal = test::random_model(10, 8, AttentionMode::Causal);
    CHECK_THROWS_AS(fill_in(causal, three, OrderPolicy::LeftToRight, SamplerConfig::argmax(), rng),
                    std::invalid_argument);
}

TEST_CASE("greedy fill_in is deterministic and never emits special tokens") {
    const auto model = test::random_model(10, 8, AttentionMode::Bidirectional, 11);
    const std::vector<TokenId> ids{kMaskId, 4, kMaskId, kMaskId, 9, kMaskId};
    for (OrderPolicy p : kAllPolicies) {
        Rng r1(5), r2(5);
        const FillResult a = fill_in(model, ids, p, SamplerConfig::argmax(), r1);
        const FillResult b = fill_in(model, ids, p, SamplerConfig::argmax(), r2);
        CHECK(a.ids == b.ids);
        for (TokenId t : a.ids) {
            CHECK(t != kMaskId);
            CHECK(t != kEosId);
            CHECK(t != kPadId);
        }
    }
}

TEST_CASE("fill_in only touches masks and realizes the policy's order") {
    const auto model = test::random_model(12, 10, AttentionMode::Bidirectional, 2);
    Rng rng(6);
    std::uniform_int_distribution<TokenId> tok(4, 11);
    std::bernoulli_distribution coin(0.5);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<TokenId> ids(10);
        std::vector<std::size_t> masks;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            ids[i] = coin(rng) ? kMaskId : tok(rng);
            if (ids[i] == kMaskId) masks.push_back(i);
        }
        for (OrderPolicy p : kAllPolicies) {
            const FillResult r = fill_in(model, ids, p, SamplerConfig::nucleus(0.9, 0.8), rng);
            for (std::size_t i = 0; i < ids.size(); ++i) {
                if (ids[i] != kMaskId) CHECK(r.ids[i] == ids[i]);
            }
            auto order = r.realized_order();
            if (p == OrderPolicy::LeftToRight) CHECK(order == masks);
            if (p == OrderPolicy::RightToLeft) CHECK(order == std::vector<std::size_t>(masks.rbegin(), masks.rend()));
            std::sort(order.begin(), order.end());
            CHECK(order == masks);
        }
    }
}

TEST_CASE("min-entropy fills the confident position first") {
    // Position 2 is certain whatever the context; position 0 is uniform.
    test::StubModel m(8, 4, AttentionMode::Bidirectional, [](std::span<const TokenId> ids) {
        Logits l = test::constant_logits(ids.size(), 8);
        l.data[2 * 8 + 6] = 40;
        return l;
    });
    Rng rng(0);
    const std::vector<TokenId> ids{kMaskId, 4, kMaskId};
    CHECK(fill_in(m, ids, OrderPolicy::MinEntropy, SamplerConfig::argmax(), rng).realized_order() ==
          std::vector<std::size_t>{2, 0});
    CHECK(fill_in(m, ids, OrderPolicy::MaxEntropy, SamplerConfig::argmax(), rng).realized_order() ==
          std::vector<std::size_t>{0, 2});
}

TEST_CASE("generate_from_scratch follows the length distribution") {
    const auto model = test::random_model(10, 6, AttentionMode::Bidirectional);
    const LengthDistribution three = LengthDistribution::from_counts({0, 0, 100000});
    Rng rng(8);
    std::size_t threes = 0;
    for (int i = 0; i < 50; ++i) {
        const FillResult r = generate_from_scratch(model, three, OrderPolicy::LeftToRight, SamplerConfig{}, rng);
        threes += r.ids.size() == 3;
        for (TokenId t : r.ids) CHECK(t != kMaskId);
    }
    CHECK(threes >= 49);
    const LengthDistribution longer = LengthDistribution::from_counts({0, 0, 0, 0, 0, 0, 0, 0, 0, 1000000});
    CHECK(generate_from_scratch(model, longer, OrderPolicy::LeftToRight, SamplerConfig{}, rng).ids.size() <= 6);
    CHECK(parse_order_policy("min-ent") == OrderPolicy::MinEntropy);
    CHECK_THROWS_AS(parse_order_policy("best"), std::invalid_argument);
}
