#include "film/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>

#include <json.hpp>

#include "film/infill.hpp"

namespace film {

namespace {

using nlohmann::json;

// One training or validation example after the objective's transform.
struct Example {
    std::vector<TokenId> input;
    std::vector<std::size_t> rows;   // positions scored, relative to the example
    std::vector<TokenId> targets;
    double mask_prob = -1;           // film only
};

Example make_example(Objective objective, const TrainConfig& config, std::span<const TokenId> x,
                     std::size_t base_vocab, Rng& rng) {
    Example ex;
    if (objective == Objective::Film) {
        ex.mask_prob = sample_mask_prob(config.schedule, rng);
        MaskedSequence m = mask_sequence(x, ex.mask_prob, rng);
        ex.input = std::move(m.ids);
        ex.rows = std::move(m.positions);
        ex.targets = std::move(m.originals);
        return ex;
    }
    std::vector<TokenId> seq;
    if (objective == Objective::Cm && x.size() >= 2) {
        seq = cm_transform(x, sample_spans(x.size(), rng), SentinelLayout(base_vocab));
    } else {
        seq.assign(x.begin(), x.end());
    }
    seq.push_back(kEosId);
    ex.input = clm_inputs(seq);
    ex.targets = seq;
    ex.rows.resize(seq.size());
    std::iota(ex.rows.begin(), ex.rows.end(), std::size_t{0});
    return ex;
}

// Records the loss of a batch of examples: one forward pass per distinct input
// length, combined into the mean over every scored token.
template <typename T>
Var batch_loss(Graph<T>& g, Parameters<T>& params, std::span<const Example* const> batch, Rng* dropout_rng,
               std::size_t& scored) {
    std::map<std::size_t, std::vector<const Example*>> groups;
    scored = 0;
    for (const Example* ex : batch) {
        groups[ex->input.size()].push_back(ex);
        scored += ex->rows.size();
    }
    std::optional<Var> total;
    for (const auto& [n, members] : groups) {
        std::vector<TokenId> ids;
        std::vector<std::size_t> rows;
        std::vector<TokenId> targets;
        for (std::size_t b = 0; b < members.size(); ++b) {
            ids.insert(ids.end(), members[b]->input.begin(), members[b]->input.end());
            for (std::size_t r : members[b]->rows) rows.push_back(b * n + r);
            targets.insert(targets.end(), members[b]->targets.begin(), members[b]->targets.end());
        }
        const Var logits = forward(g, params, ids, members.size(), dropout_rng);
        const Var ce = g.scale(g.cross_entropy(logits, rows, targets),
                               static_cast<T>(static_cast<double>(rows.size()) / static_cast<double>(scored)));
        total = total ? g.add(*total, ce) : ce;
    }
    return *total;
}

std::vector<const Example*> pointers(const std::vector<Example>& examples) {
    std::vector<const Example*> out;
    for (const Example& e : examples) out.push_back(&e);
    return out;
}

void write_lines(const std::filesystem::path& path, std::span<const std::string> lines) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    for (const std::string& l : lines) out << l << '\n';
}

}  // namespace

std::string to_string(Objective objective) {
    switch (objective) {
        case Objective::Film: return "film";
        case Objective::Clm: return "clm";
        case Objective::Cm: return "cm";
    }
    return "film";
}

Objective parse_objective(std::string_view name) {
    if (name == "film") return Objective::Film;
    if (name == "clm") return Objective::Clm;
    if (name == "cm") return Objective::Cm;
    throw std::invalid_argument("unknown objective '" + std::string(name) + "' (expected film, clm or cm)");
}

void TrainConfig::validate() const {
    if (batch_tokens == 0) throw std::invalid_argument("train: batch_tokens must be positive");
    if (total_steps == 0) throw std::invalid_argument("train: total_steps must be positive");
    if (!(adam.learning_rate > 0)) throw std::invalid_argument("train: learning rate must be positive");
    if (!(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1)) {
        throw std::invalid_argument("train: Adam betas must be in [0,1)");
    }
    if (!(adam.epsilon > 0)) throw std::invalid_argument("train: Adam epsilon must be positive");
    if (adam.weight_decay < 0) throw std::invalid_argument("train: weight decay must be non-negative");
}

template <typename T>
Var masked_ce_loss(Graph<T>& graph, Var logits, std::span<const TokenId> originals,
                   std::span<const std::size_t> mask_positions) {
    if (originals.size() != mask_positions.size()) {
        throw std::invalid_argument("masked_ce_loss: originals and positions differ in length");
    }
    if (mask_positions.empty()) throw std::invalid_argument("masked_ce_loss: no masked positions");
    return graph.cross_entropy(logits, mask_positions, originals);
}

std::vector<TokenId> clm_inputs(std::span<const TokenId> ids_with_eos) {
    if (ids_with_eos.empty() || ids_with_eos.back() != kEosId) {
        throw std::invalid_argument("clm_inputs: sequence must end with EOS");
    }
    std::vector<TokenId> in{kEosId};
    in.insert(in.end(), ids_with_eos.begin(), ids_with_eos.end() - 1);
    return in;
}

template <typename T>
Var clm_loss(Graph<T>& graph, Var logits, std::span<const TokenId> ids_with_eos) {
    if (ids_with_eos.empty() || ids_with_eos.back() != kEosId) {
        throw std::invalid_argument("clm_loss: sequence must end with EOS");
    }
    std::vector<std::size_t> rows(ids_with_eos.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return graph.cross_entropy(logits, rows, ids_with_eos);
}

template <typename T>
void adam_step(Parameters<T>& params, OptimizerState<T>& state, const AdamConfig& config, double learning_rate) {
    std::size_t block = 0;
    params.visit([&](const std::string& name, Tensor<T>& t) {
        if (!t.has_grad()) t.zero_grad();
        for (T g : t.grad) {
            if (!std::isfinite(static_cast<double>(g))) {
                throw std::runtime_error("adam: non-finite gradient in '" + name + "'");
            }
        }
        if (state.first_moment.size() <= block) {
            state.first_moment.emplace_back(t.size(), T(0));
            state.second_moment.emplace_back(t.size(), T(0));
        }
        ++block;
    });
    ++state.step;
    const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
    block = 0;
    params.visit([&](const std::string&, Tensor<T>& t) {
        std::vector<T>& m = state.first_moment[block];
        std::vector<T>& v = state.second_moment[block];
        ++block;
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double g = t.grad[i];
            m[i] = static_cast<T>(config.beta1 * m[i] + (1 - config.beta1) * g);
            v[i] = static_cast<T>(config.beta2 * v[i] + (1 - config.beta2) * g * g);
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            double w = t.data[i];
            w -= learning_rate * (mhat / (std::sqrt(vhat) + config.epsilon) + config.weight_decay * w);
            t.data[i] = static_cast<T>(w);
        }
    });
}

template <typename T>
double clip_grad_norm(Parameters<T>& params, double max_norm) {
    double sq = 0;
    params.visit([&](const std::string&, const Tensor<T>& t) {
        for (T g : t.grad) sq += static_cast<double>(g) * g;
    });
    const double norm = std::sqrt(sq);
    if (max_norm > 0 && norm > max_norm) {
        const double s = max_norm / norm;
        params.visit([&](const std::string&, Tensor<T>& t) {
            for (T& g : t.grad) g = static_cast<T>(g * s);
        });
    }
    return norm;
}

std::size_t model_positions(Objective objective, std::size_t n_max) {
    switch (objective) {
        case Objective::Film: return n_max;
        case Objective::Clm: return n_max + 1;
        case Objective::Cm: return n_max + 2 * kMaxSpans + 1;
    }
    return n_max;
}

std::size_t model_vocab_size(Objective objective, const Vocab& vocab) {
    return objective == Objective::Cm ? SentinelLayout(vocab.size()).extended_size() : vocab.size();
}

double validation_loss(const Parameters<float>& params, const TrainConfig& config,
                       std::span<const TokenSequence> sequences, std::size_t base_vocab, std::uint64_t seed) {
    Rng rng = make_rng(seed, 4);
    std::vector<Example> examples;
    for (const TokenSequence& s : sequences) {
        if (config.max_val_sequences && examples.size() >= config.max_val_sequences) break;
        examples.push_back(make_example(config.objective, config, s.ids(), base_vocab, rng));
    }
    if (examples.empty()) throw std::invalid_argument("validation_loss: no sequences");
    // Evaluation only reads the weights; the graph still needs mutable leaves.
    Parameters<float> copy = params;
    Graph<float> g(false);
    std::size_t scored = 0;
    const std::vector<const Example*> ptrs = pointers(examples);
    const Var loss = batch_loss(g, copy, ptrs, nullptr, scored);
    return g.value(loss).data[0];
}

TrainResult train(const TrainConfig& config, ModelConfig model_config, const TrainData& data) {
    config.validate();
    if (data.train.empty()) throw std::invalid_argument("train: no training sequences");
    model_config.vocab_size = model_vocab_size(config.objective, data.vocab);
    model_config.n_max = model_positions(config.objective, data.n_max);
    model_config.attention =
        config.objective == Objective::Film ? AttentionMode::Bidirectional : AttentionMode::Causal;
    model_config.seed = config.seed;

    TrainResult result;
    result.lengths = LengthDistribution::estimate(data.train, data.n_max);
    result.params = init_parameters<float>(model_config);
    OptimizerState<float> opt;

    Rng data_rng = make_rng(config.seed, 1);
    Rng mask_rng = make_rng(config.seed, 2);
    Rng dropout_rng = make_rng(config.seed, 3);
    const std::span<const TokenSequence> val =
        data.validation.empty() ? std::span<const TokenSequence>(data.train) : std::span<const TokenSequence>(data.validation);

    const std::size_t batch_size = std::max<std::size_t>(1, config.batch_tokens / data.n_max);
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t cursor = order.size();

    const bool to_disk = !config.checkpoint_dir.empty();
    if (to_disk) std::filesystem::create_directories(config.checkpoint_dir);
    std::vector<std::string> timing;
    const auto t0 = std::chrono::steady_clock::now();

    for (std::uint64_t step = 1; step <= config.total_steps; ++step) {
        std::vector<Example> examples;
        for (std::size_t b = 0; b < batch_size; ++b) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), data_rng);
                cursor = 0;
            }
            examples.push_back(make_example(config.objective, config, data.train[order[cursor++]].ids(),
                                            data.vocab.size(), mask_rng));
        }

        result.params.zero_grad();
        Graph<float> g;
        std::size_t scored = 0;
        const std::vector<const Example*> ptrs = pointers(examples);
        const Var loss =
            batch_loss(g, result.params, ptrs, model_config.dropout_p > 0 ? &dropout_rng : nullptr, scored);
        const double loss_value = g.value(loss).data[0];
        if (!std::isfinite(loss_value)) {
            throw std::runtime_error("train: non-finite loss at step " + std::to_string(step));
        }
        g.backward(loss);
        const double grad_norm = clip_grad_norm(result.params, config.clip_norm);
        const double lr = config.adam.learning_rate *
                          (config.warmup_steps == 0
                               ? 1.0
                               : std::min(1.0, static_cast<double>(step) / static_cast<double>(config.warmup_steps)));
        adam_step(result.params, opt, config.adam, lr);
        result.final_train_loss = loss_value;

        json row{{"step", step}, {"train_loss", loss_value}, {"lr", lr}, {"grad_norm", grad_norm},
                 {"scored_tokens", scored}};
        if (config.objective == Objective::Film) {
            double sum = 0, lo = 1, hi = 0;
            std::vector<std::size_t> hist(10, 0);
            for (const Example& e : examples) {
                sum += e.mask_prob;
                lo = std::min(lo, e.mask_prob);
                hi = std::max(hi, e.mask_prob);
                ++hist[std::min<std::size_t>(9, static_cast<std::size_t>(e.mask_prob * 10))];
            }
            row["p_mean"] = sum / static_cast<double>(examples.size());
            row["p_min"] = lo;
            row["p_max"] = hi;
            row["p_hist"] = hist;
        }
        const bool eval_now =
            step == config.total_steps || (config.eval_interval > 0 && step % config.eval_interval == 0);
        if (eval_now) {
            result.final_val_loss = validation_loss(result.params, config, val, data.vocab.size(), config.seed);
            row["val_loss"] = result.final_val_loss;
        }
        result.metrics.push_back(row.dump());
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        timing.push_back(json{{"step", step}, {"elapsed_seconds", seconds}}.dump());

        if (to_disk && eval_now && step != config.total_steps) {
            save_checkpoint(config.checkpoint_dir / ("step_" + std::to_string(step) + ".ckpt"),
                            make_checkpoint(result, config, data));
        }
    }
    if (to_disk) {
        save_checkpoint(config.checkpoint_dir / "final.ckpt", make_checkpoint(result, config, data));
        write_lines(config.checkpoint_dir / "metrics.jsonl", result.metrics);
        write_lines(config.checkpoint_dir / "timing.jsonl", timing);
    }
    return result;
}

Checkpoint make_checkpoint(const TrainResult& result, const TrainConfig& config, const TrainData& data) {
    Checkpoint ckpt;
    ckpt.params = result.params;
    ckpt.vocab = data.vocab;
    ckpt.lengths = result.lengths;
    ckpt.metadata = {{"objective", to_string(config.objective)},
                     {"schedule", config.schedule.describe()},
                     {"seed", std::to_string(config.seed)},
                     {"total_steps", std::to_string(config.total_steps)},
                     {"data_n_max", std::to_string(data.n_max)}};
    return ckpt;
}

#define FILM_TRAIN_INSTANTIATE(T)                                                                          \
    template Var masked_ce_loss<T>(Graph<T>&, Var, std::span<const TokenId>, std::span<const std::size_t>); \
    template Var clm_loss<T>(Graph<T>&, Var, std::span<const TokenId>);                                    \
    template void adam_step<T>(Parameters<T>&, OptimizerState<T>&, const AdamConfig&, double);             \
    template double clip_grad_norm<T>(Parameters<T>&, double);

FILM_TRAIN_INSTANTIATE(float)
FILM_TRAIN_INSTANTIATE(double)

}  // namespace film
