#include <doctest.h>

#include <boost/math/distributions/binomial.hpp>

#include "film/noise.hpp"
#include "support.hpp"

using namespace film;

TEST_CASE("mode_to_params examples") {
    const auto [a, b] = mode_to_params(0.5);
    CHECK(a == 2.5);
    CHECK(b == 2.5);
    CHECK(mode_to_params(0.1).first == doctest::Approx(1.3));
    CHECK(mode_to_params(0.1).second == doctest::Approx(3.7));
    CHECK(mode_to_params(0.9).first == doctest::Approx(3.7));
    CHECK(mode_to_params(0.9).second == doctest::Approx(1.3));
    CHECK_THROWS_AS(mode_to_params(0.0), std::invalid_argument);
    CHECK_THROWS_AS(mode_to_params(1.0), std::invalid_argument);
}

TEST_CASE("the Beta mode recovers the requested mode") {
    for (double m = 0.05; m < 1.0; m += 0.05) {
        const auto [a, b] = mode_to_params(m);
        CHECK(a + b == doctest::Approx(5.0));
        CHECK((a - 1) / (a + b - 2) == doctest::Approx(m));
    }
}

TEST_CASE("schedule parsing and validation") {
    CHECK(std::get<FixedSchedule>(NoiseSchedule::parse("fixed:0.15").variant()).p == 0.15);
    CHECK(std::holds_alternative<UniformSchedule>(NoiseSchedule::parse("uniform").variant()));
    CHECK(std::get<BetaSchedule>(NoiseSchedule::parse("beta-mode:0.5").variant()).alpha == 2.5);
    CHECK(std::get<BetaSchedule>(NoiseSchedule::parse("beta:1.3,3.7").variant()).beta == 3.7);
    CHECK_THROWS_AS(NoiseSchedule::parse("gamma"), std::invalid_argument);
    CHECK_THROWS_AS(NoiseSchedule::fixed(1.5), std::invalid_argument);
    CHECK_THROWS_AS(NoiseSchedule::beta(0, 1), std::invalid_argument);
    CHECK(NoiseSchedule::parse(NoiseSchedule::beta(2.5, 2.5).describe()).describe() == "beta:2.5,2.5");
}

TEST_CASE("sample_mask_prob moments") {
    Rng rng(21);
    for (int i = 0; i < 100; ++i) CHECK(sample_mask_prob(NoiseSchedule::fixed(0.15), rng) == 0.15);

    const auto moments = [&](const NoiseSchedule& s) {
        const int n = 100000;
        double sum = 0, sq = 0;
        for (int i = 0; i < n; ++i) {
            const double p = sample_mask_prob(s, rng);
            REQUIRE(p >= 0.0);
            REQUIRE(p <= 1.0);
            sum += p;
            sq += p * p;
        }
        const double mean = sum / n;
        return std::pair{mean, sq / n - mean * mean};
    };
    const auto [bm, bv] = moments(NoiseSchedule::beta(2.5, 2.5));
    CHECK(std::abs(bm - 0.5) < 0.005);
    CHECK(std::abs(bv - 2.5 * 2.5 / (25.0 * 6.0)) < 0.003);
    const auto [um, uv] = moments(NoiseSchedule::uniform());
    CHECK(std::abs(um - 0.5) < 0.005);
    CHECK(std::abs(uv - 1.0 / 12) < 0.003);
    const auto [sm, sv] = moments(NoiseSchedule::beta(1.3, 3.7));
    CHECK(std::abs(sm - 1.3 / 5) < 0.005);
    CHECK(std::abs(sv - 1.3 * 3.7 / (25.0 * 6.0)) < 0.003);
}

TEST_CASE("mask_sequence examples") {
    Rng rng(2);
    const std::vector<TokenId> x{4, 5, 6, 7, 8, 9};
    const MaskedSequence all = mask_sequence(x, 1.0, rng);
    CHECK(all.mask_count() == 6);
    for (TokenId t : all.ids) CHECK(t == kMaskId);
    for (int i = 0; i < 50; ++i) CHECK(mask_sequence(x, 0.0, rng).mask_count() == 1);

    std::vector<TokenId> big(1000, 4);
    const MaskedSequence half = mask_sequence(big, 0.5, rng);
    CHECK(std::abs(static_cast<double>(half.mask_count()) / 1000 - 0.5) < 0.05);
}

TEST_CASE("masked positions, originals and restore are consistent") {
    Rng rng(5);
    std::uniform_int_distribution<TokenId> tok(4, 40);
    std::uniform_int_distribution<std::size_t> len(1, 50);
    std::uniform_real_distribution<double> pd(0, 1);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<TokenId> x(len(rng));
        for (TokenId& t : x) t = tok(rng);
        const MaskedSequence m = mask_sequence(x, pd(rng), rng);
        CHECK(m.mask_count() >= 1);
        CHECK(m.originals.size() == m.positions.size());
        CHECK(std::is_sorted(m.positions.begin(), m.positions.end()));
        CHECK(std::adjacent_find(m.positions.begin(), m.positions.end()) == m.positions.end());
        std::size_t masks = 0;
        for (std::size_t i = 0; i < x.size(); ++i) masks += m.ids[i] == kMaskId;
        CHECK(masks == m.mask_count());
        for (std::size_t k = 0; k < m.positions.size(); ++k) CHECK(m.ids[m.positions[k]] == kMaskId);
        CHECK(m.restore() == x);
    }
}

TEST_CASE("masked counts follow a zero-truncated binomial") {
    // The forced single mask moves all of P(0) onto count 1.
    const std::size_t n = 8;
    const double p = 0.2;
    const boost::math::binomial bin(static_cast<double>(n), p);
    Rng rng(17);
    const int draws = 50000;
    std::vector<double> observed(n, 0.0), expected(n, 0.0);
    const std::vector<TokenId> x(n, 4);
    for (int i = 0; i < draws; ++i) observed[mask_sequence(x, p, rng).mask_count() - 1] += 1;
    for (std::size_t k = 1; k <= n; ++k) expected[k - 1] = draws * boost::math::pdf(bin, static_cast<double>(k));
    expected[0] += draws * boost::math::pdf(bin, 0.0);
    // Pool the sparse tail.
    std::vector<double> o(observed.begin(), observed.begin() + 4), e(expected.begin(), expected.begin() + 4);
    o.push_back(0);
    e.push_back(0);
    for (std::size_t k = 4; k < n; ++k) {
        o.back() += observed[k];
        e.back() += expected[k];
    }
    CHECK(test::chi_square_p(o, e) > 1e-3);
}

TEST_CASE("mask_positions masks exactly the requested positions") {
    const std::vector<TokenId> x{4, 5, 6, 7};
    const std::vector<std::size_t> pos{1, 3};
    const MaskedSequence m = mask_positions(x, pos);
    CHECK(m.ids == std::vector<TokenId>{4, kMaskId, 6, kMaskId});
    CHECK(m.originals == std::vector<TokenId>{5, 7});
    const std::vector<std::size_t> unsorted{3, 1};
    CHECK_THROWS(mask_positions(x, unsorted));
}
