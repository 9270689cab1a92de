#pragma once

// Run configuration read from an INI-style file:
//
//   [data]   corpus, tokenizer (char|word), split (file|line), window, validation_fraction
//   [model]  d_model, n_layers, n_heads, d_ff, dropout
//   [train]  objective, learning_rate, beta1, beta2, epsilon, weight_decay,
//            batch_tokens, total_steps, eval_interval, warmup_steps, clip_norm,
//            max_val_sequences, seed
//   [noise]  schedule (fixed|uniform|beta|beta-mode, or a compact spec such as
//            "beta-mode:0.5"), with p, mode or alpha/beta as needed
//
// Every key is optional; missing keys keep their defaults.

#include <filesystem>
#include <string>

#include <json.hpp>

#include "film/corpus.hpp"
#include "film/model.hpp"
#include "film/train.hpp"

namespace film {

struct DataConfig {
    std::filesystem::path corpus;
    TokenizerMode tokenizer = TokenizerMode::Char;
    DocumentSplit split = DocumentSplit::File;
    std::size_t window = 64;
    double validation_fraction = 0.1;
};

struct RunConfig {
    DataConfig data;
    ModelConfig model;
    TrainConfig train;
};

/// Applies the keys present in INI text on top of `base`.
RunConfig parse_config(std::string_view ini_text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

nlohmann::json to_json(const RunConfig& config);

/// Windowed sequences of the configured corpus split into training and
/// validation sets (the last validation_fraction of sequences, at least one).
TrainData load_train_data(const DataConfig& data);

}  // namespace film
