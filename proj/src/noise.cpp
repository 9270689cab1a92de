#include "film/noise.hpp"

#include <charconv>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace film {

namespace {

double parse_double(std::string_view text, std::string_view what) {
    double v = 0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end) {
        throw std::invalid_argument("noise schedule: cannot parse " + std::string(what) + " from '" +
                                    std::string(text) + "'");
    }
    return v;
}

}  // namespace

NoiseSchedule::NoiseSchedule(Variant v) : v_(v) {
    if (const auto* f = std::get_if<FixedSchedule>(&v_)) {
        if (!(f->p >= 0.0 && f->p <= 1.0)) throw std::invalid_argument("noise schedule: fixed p must be in [0,1]");
    } else if (const auto* b = std::get_if<BetaSchedule>(&v_)) {
        if (!(b->alpha > 0.0 && b->beta > 0.0)) {
            throw std::invalid_argument("noise schedule: beta parameters must be positive");
        }
    }
}

std::pair<double, double> mode_to_params(double mode) {
    if (!(mode > 0.0 && mode < 1.0)) throw std::invalid_argument("mode_to_params: mode must be in (0,1)");
    // mode = (a - 1) / (a + b - 2) with a + b = 5  =>  a = 1 + 3 * mode
    const double alpha = 1.0 + 3.0 * mode;
    return {alpha, 5.0 - alpha};
}

NoiseSchedule NoiseSchedule::beta_mode(double mode) {
    const auto [a, b] = mode_to_params(mode);
    return beta(a, b);
}

NoiseSchedule NoiseSchedule::parse(std::string_view spec) {
    if (spec == "uniform") return uniform();
    const auto colon = spec.find(':');
    const std::string_view kind = spec.substr(0, colon);
    const std::string_view arg = colon == std::string_view::npos ? std::string_view{} : spec.substr(colon + 1);
    if (kind == "fixed" && !arg.empty()) return fixed(parse_double(arg, "p"));
    if (kind == "beta-mode" && !arg.empty()) return beta_mode(parse_double(arg, "mode"));
    if (kind == "beta" && !arg.empty()) {
        const auto comma = arg.find(',');
        if (comma == std::string_view::npos) throw std::invalid_argument("noise schedule: expected beta:A,B");
        return beta(parse_double(arg.substr(0, comma), "alpha"), parse_double(arg.substr(comma + 1), "beta"));
    }
    throw std::invalid_argument("unknown noise schedule '" + std::string(spec) +
                                "' (expected fixed:P, uniform, beta-mode:M or beta:A,B)");
}

std::string NoiseSchedule::describe() const {
    const auto num = [](double v) {
        char buf[32];
        const auto r = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, r.ptr);
    };
    if (const auto* f = std::get_if<FixedSchedule>(&v_)) return "fixed:" + num(f->p);
    if (std::holds_alternative<UniformSchedule>(v_)) return "uniform";
    const auto& b = std::get<BetaSchedule>(v_);
    return "beta:" + num(b.alpha) + "," + num(b.beta);
}

double sample_mask_prob(const NoiseSchedule& schedule, Rng& rng) {
    return std::visit(
        [&](const auto& s) -> double {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, FixedSchedule>) {
                return s.p;
            } else if constexpr (std::is_same_v<S, UniformSchedule>) {
                return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
            } else {
                const double x = std::gamma_distribution<double>(s.alpha, 1.0)(rng);
                const double y = std::gamma_distribution<double>(s.beta, 1.0)(rng);
                return x / (x + y);
            }
        },
        schedule.variant());
}

std::vector<TokenId> MaskedSequence::restore() const {
    std::vector<TokenId> out = ids;
    for (std::size_t i = 0; i < positions.size(); ++i) out[positions[i]] = originals[i];
    return out;
}

MaskedSequence mask_sequence(std::span<const TokenId> x, double p, Rng& rng) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("mask_sequence: p must be in [0,1]");
    if (x.empty()) throw std::invalid_argument("mask_sequence: empty sequence");
    std::bernoulli_distribution coin(p);
    std::vector<std::size_t> chosen;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (coin(rng)) chosen.push_back(i);
    }
    if (chosen.empty()) {
        chosen.push_back(std::uniform_int_distribution<std::size_t>(0, x.size() - 1)(rng));
    }
    return mask_positions(x, chosen);
}

MaskedSequence mask_positions(std::span<const TokenId> x, std::span<const std::size_t> positions) {
    MaskedSequence m;
    m.ids.assign(x.begin(), x.end());
    for (std::size_t k = 0; k < positions.size(); ++k) {
        const std::size_t i = positions[k];
        if (i >= x.size()) throw std::out_of_range("mask_positions: position outside sequence");
        if (k > 0 && positions[k - 1] >= i) throw std::invalid_argument("mask_positions: positions must increase");
        m.positions.push_back(i);
        m.originals.push_back(x[i]);
        m.ids[i] = kMaskId;
    }
    return m;
}

}  // namespace film
