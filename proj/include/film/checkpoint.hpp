#pragma once

// Versioned checkpoint container:
//   8 bytes   magic "FILMCKPT"
//   u32 LE    format version
//   u64 LE    header length in bytes
//   header    JSON: model config, vocabulary, length counts, metadata and a
//             tensor index (name, shape, byte offset into the data section)
//   data      little-endian float32 arrays in index order

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "film/corpus.hpp"
#include "film/model.hpp"

namespace film {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    Parameters<float> params;
    Vocab vocab;
    LengthDistribution lengths;
    std::map<std::string, std::string> metadata;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view bytes);

/// Writes through a temporary file and renames, so readers never see a partial file.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string to_string(AttentionMode mode);
AttentionMode parse_attention_mode(std::string_view name);

}  // namespace film
