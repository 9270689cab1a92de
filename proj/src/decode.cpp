#include "film/decode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace film {

std::string to_string(OrderPolicy policy) {
    switch (policy) {
        case OrderPolicy::Random: return "random";
        case OrderPolicy::LeftToRight: return "l2r";
        case OrderPolicy::RightToLeft: return "r2l";
        case OrderPolicy::MinEntropy: return "min-ent";
        case OrderPolicy::MaxEntropy: return "max-ent";
    }
    return "l2r";
}

OrderPolicy parse_order_policy(std::string_view name) {
    for (OrderPolicy p : kAllPolicies) {
        if (to_string(p) == name) return p;
    }
    throw std::invalid_argument("unknown order policy '" + std::string(name) +
                                "' (expected random, l2r, r2l, min-ent or max-ent)");
}

void SamplerConfig::validate() const {
    if (!(temperature > 0) || !std::isfinite(temperature)) {
        throw std::invalid_argument("sampler: temperature must be positive and finite");
    }
    if (!(top_p > 0 && top_p <= 1)) throw std::invalid_argument("sampler: top_p must be in (0,1]");
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
    if (logits.empty()) throw std::invalid_argument("softmax: empty input");
    const double hi = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp((logits[i] - hi) / temperature);
        z += p[i];
    }
    for (double& v : p) v /= z;
    return p;
}

std::vector<double> log_softmax(std::span<const double> logits) {
    if (logits.empty()) throw std::invalid_argument("log_softmax: empty input");
    const double hi = *std::max_element(logits.begin(), logits.end());
    double z = 0;
    for (double l : logits) z += std::exp(l - hi);
    const double lz = hi + std::log(z);
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lz;
    return out;
}

double entropy(std::span<const double> probs) {
    double mass = 0, h = 0;
    for (double p : probs) {
        if (p < 0) throw std::invalid_argument("entropy: negative probability");
        mass += p;
        if (p > 0) h -= p * std::log(p);
    }
    if (std::abs(mass - 1.0) > 1e-6) throw std::invalid_argument("entropy: probabilities do not sum to 1");
    return h;
}

std::size_t argmax(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("argmax: empty input");
    return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

std::vector<double> nucleus(std::span<const double> probs, double top_p) {
    std::vector<std::size_t> order(probs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
    std::vector<double> out(probs.size(), 0.0);
    double mass = 0;
    for (std::size_t i : order) {
        out[i] = probs[i];
        mass += probs[i];
        if (mass >= top_p - 1e-12) break;
    }
    for (double& v : out) v /= mass;
    return out;
}

TokenId sample_token(std::span<const double> logits, const SamplerConfig& sampler, Rng& rng,
                     std::span<const TokenId> banned) {
    sampler.validate();
    std::vector<double> l(logits.begin(), logits.end());
    for (TokenId b : banned) {
        if (b >= 0 && static_cast<std::size_t>(b) < l.size()) l[b] = -std::numeric_limits<double>::infinity();
    }
    if (std::all_of(l.begin(), l.end(), [](double v) { return std::isinf(v) && v < 0; })) {
        throw std::invalid_argument("sample_token: every token is banned");
    }
    if (sampler.greedy) return static_cast<TokenId>(argmax(l));
    const std::vector<double> p = nucleus(softmax(l, sampler.temperature), sampler.top_p);
    std::discrete_distribution<std::size_t> draw(p.begin(), p.end());
    return static_cast<TokenId>(draw(rng));
}

std::size_t select_position(OrderPolicy policy, std::span<const std::size_t> candidates,
                            std::span<const std::vector<double>> probs, Rng& rng) {
    if (candidates.empty()) throw std::invalid_argument("select_position: no masks left");
    switch (policy) {
        case OrderPolicy::LeftToRight: return *std::min_element(candidates.begin(), candidates.end());
        case OrderPolicy::RightToLeft: return *std::max_element(candidates.begin(), candidates.end());
        case OrderPolicy::Random: {
            std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
            return candidates[pick(rng)];
        }
        case OrderPolicy::MinEntropy:
        case OrderPolicy::MaxEntropy: break;
    }
    if (probs.size() != candidates.size()) {
        throw std::invalid_argument("select_position: entropy policies need one distribution per candidate");
    }
    const bool want_min = policy == OrderPolicy::MinEntropy;
    std::size_t best = candidates[0];
    double best_h = entropy(probs[0]);
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        const double h = entropy(probs[i]);
        const bool better = want_min ? h < best_h : h > best_h;
        if (better || (h == best_h && candidates[i] < best)) {
            best = candidates[i];
            best_h = h;
        }
    }
    return best;
}

std::vector<std::size_t> FillResult::realized_order() const {
    std::vector<std::size_t> out;
    for (const FillStep& s : steps) out.push_back(s.position);
    return out;
}

FillResult fill_in(const LanguageModel& model, std::span<const TokenId> ids, std::span<const std::size_t> positions,
                   OrderPolicy policy, const SamplerConfig& sampler, Rng& rng) {
    sampler.validate();
    if (model.attention() != AttentionMode::Bidirectional) {
        throw std::invalid_argument("fill_in: needs a bidirectional model");
    }
    if (ids.size() > model.max_length()) {
        throw std::invalid_argument("fill_in: sequence length " + std::to_string(ids.size()) + " exceeds n_max " +
                                    std::to_string(model.max_length()));
    }
    for (std::size_t p : positions) {
        if (p >= ids.size()) throw std::out_of_range("fill_in: mask position outside the sequence");
    }
    FillResult r;
    r.ids.assign(ids.begin(), ids.end());
    std::vector<std::size_t> remaining(positions.begin(), positions.end());
    std::sort(remaining.begin(), remaining.end());
    remaining.erase(std::unique(remaining.begin(), remaining.end()), remaining.end());
    static constexpr TokenId kBanned[] = {kMaskId, kEosId, kPadId};

    while (!remaining.empty()) {
        const Logits logits = model.logits(r.ids);
        ++r.forward_passes;
        std::vector<std::vector<double>> probs;
        probs.reserve(remaining.size());
        for (std::size_t p : remaining) probs.push_back(softmax(logits.row(p)));
        const std::size_t pos = select_position(policy, remaining, probs, rng);
        const auto it = std::find(remaining.begin(), remaining.end(), pos);
        const std::size_t k = static_cast<std::size_t>(it - remaining.begin());
        const TokenId tok = sample_token(logits.row(pos), sampler, rng, kBanned);
        r.ids[pos] = tok;
        r.steps.push_back({pos, tok, entropy(probs[k])});
        remaining.erase(it);
    }
    return r;
}

FillResult fill_in(const LanguageModel& model, std::span<const TokenId> ids, OrderPolicy policy,
                   const SamplerConfig& sampler, Rng& rng) {
    std::vector<std::size_t> positions;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] == kMaskId) positions.push_back(i);
    }
    return fill_in(model, ids, positions, policy, sampler, rng);
}

FillResult generate_with_length(const LanguageModel& model, std::size_t n, OrderPolicy policy,
                                const SamplerConfig& sampler, Rng& rng) {
    if (n == 0) throw std::invalid_argument("generate: length must be >= 1");
    const std::vector<TokenId> ids(n, kMaskId);
    return fill_in(model, ids, policy, sampler, rng);
}

FillResult generate_from_scratch(const LanguageModel& model, const LengthDistribution& lengths, OrderPolicy policy,
                                 const SamplerConfig& sampler, Rng& rng) {
    const std::size_t n = std::min(lengths.sample(rng), model.max_length());
    return generate_with_length(model, n, policy, sampler, rng);
}

}  // namespace film
