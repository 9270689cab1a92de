#pragma once

// Training loops for the fill-in objective and the causal baselines.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "film/checkpoint.hpp"
#include "film/corpus.hpp"
#include "film/model.hpp"
#include "film/noise.hpp"
#include "film/tensor.hpp"

namespace film {

/// film: masked-token denoising with a sampled mask probability.
/// clm:  next-token prediction over [EOS] x_1..x_n -> x_1..x_n [EOS].
/// cm:   clm over span-rearranged sequences (the causal-masking infill baseline).
enum class Objective { Film, Clm, Cm };

std::string to_string(Objective objective);
Objective parse_objective(std::string_view name);

struct AdamConfig {
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;  // decoupled
};

struct TrainConfig {
    NoiseSchedule schedule = NoiseSchedule::beta(2.5, 2.5);
    Objective objective = Objective::Film;
    AdamConfig adam;
    std::size_t batch_tokens = 512;
    std::uint64_t total_steps = 1000;
    std::uint64_t eval_interval = 100;
    std::uint64_t warmup_steps = 100;
    double clip_norm = 1.0;  // <= 0 disables clipping
    std::size_t max_val_sequences = 64;
    std::uint64_t seed = 0;
    std::filesystem::path checkpoint_dir;  // empty: keep everything in memory

    void validate() const;
};

template <typename T>
struct OptimizerState {
    std::vector<std::vector<T>> first_moment;
    std::vector<std::vector<T>> second_moment;
    std::uint64_t step = 0;
};

/// Mean negative log-likelihood of the originals at the masked rows only.
template <typename T>
Var masked_ce_loss(Graph<T>& graph, Var logits, std::span<const TokenId> originals,
                   std::span<const std::size_t> mask_positions);

/// Model input for the causal objective: the begin marker (the EOS id) followed
/// by x_1..x_n. ids_with_eos must end in EOS.
std::vector<TokenId> clm_inputs(std::span<const TokenId> ids_with_eos);

/// Mean next-token NLL over the n+1 targets x_1..x_n, EOS. logits must come from
/// forward(clm_inputs(ids_with_eos)).
template <typename T>
Var clm_loss(Graph<T>& graph, Var logits, std::span<const TokenId> ids_with_eos);

/// One bias-corrected Adam update; throws when a gradient is non-finite.
template <typename T>
void adam_step(Parameters<T>& params, OptimizerState<T>& state, const AdamConfig& config, double learning_rate);

template <typename T>
void adam_step(Parameters<T>& params, OptimizerState<T>& state, const AdamConfig& config) {
    adam_step(params, state, config, config.learning_rate);
}

/// Scales all gradients so their global L2 norm is at most max_norm; returns the
/// norm before scaling.
template <typename T>
double clip_grad_norm(Parameters<T>& params, double max_norm);

struct TrainData {
    Vocab vocab;
    std::vector<TokenSequence> train;
    std::vector<TokenSequence> validation;  // empty: validate on training sequences
    std::size_t n_max = 64;                 // longest sequence; the fill-in model's positions
};

struct TrainResult {
    Parameters<float> params;
    LengthDistribution lengths;
    std::vector<std::string> metrics;  // one JSON object per line
    double final_train_loss = 0;
    double final_val_loss = 0;
};

/// Positions the model needs for sequences of up to n_max tokens under an objective.
std::size_t model_positions(Objective objective, std::size_t n_max);
/// Vocabulary size the model needs under an objective.
std::size_t model_vocab_size(Objective objective, const Vocab& vocab);

/// Validation loss of params on sequences; deterministic given seed.
double validation_loss(const Parameters<float>& params, const TrainConfig& config,
                       std::span<const TokenSequence> sequences, std::size_t base_vocab, std::uint64_t seed);

/// Runs the configured number of steps. With a checkpoint_dir, writes
/// step_<N>.ckpt every eval_interval, final.ckpt, metrics.jsonl (deterministic)
/// and timing.jsonl (wall clock).
TrainResult train(const TrainConfig& config, ModelConfig model_config, const TrainData& data);

Checkpoint make_checkpoint(const TrainResult& result, const TrainConfig& config, const TrainData& data);

}  // namespace film
