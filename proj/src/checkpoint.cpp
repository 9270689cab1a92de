#include "film/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace film {

namespace {

using nlohmann::json;

constexpr std::string_view kMagic = "FILMCKPT";

template <typename U>
void put_le(std::string& out, U value) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(std::string_view in, std::size_t offset) {
    if (offset + sizeof(U) > in.size()) throw std::runtime_error("checkpoint: truncated file");
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        value |= static_cast<U>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
    }
    return value;
}

json config_to_json(const ModelConfig& c) {
    return json{{"vocab_size", c.vocab_size}, {"n_max", c.n_max},         {"d_model", c.d_model},
                {"n_layers", c.n_layers},     {"n_heads", c.n_heads},     {"d_ff", c.d_ff},
                {"dropout_p", c.dropout_p},   {"attention", to_string(c.attention)},
                {"seed", c.seed}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.n_max = j.at("n_max").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.n_layers = j.at("n_layers").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.d_ff = j.at("d_ff").get<std::size_t>();
    c.dropout_p = j.at("dropout_p").get<double>();
    c.attention = parse_attention_mode(j.at("attention").get<std::string>());
    c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
}

}  // namespace

std::string to_string(AttentionMode mode) {
    return mode == AttentionMode::Bidirectional ? "bidirectional" : "causal";
}

AttentionMode parse_attention_mode(std::string_view name) {
    if (name == "bidirectional") return AttentionMode::Bidirectional;
    if (name == "causal") return AttentionMode::Causal;
    throw std::invalid_argument("unknown attention mode '" + std::string(name) + "'");
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    const Parameters<float>& p = ckpt.params;
    if (ckpt.vocab.size() > p.config.vocab_size) {
        throw std::invalid_argument("checkpoint: vocabulary larger than the model's embedding table");
    }

    json tensors = json::array();
    std::uint64_t offset = 0;
    p.visit([&](const std::string& name, const Tensor<float>& t) {
        tensors.push_back(json{{"name", name}, {"shape", t.shape}, {"offset", offset}});
        offset += t.size() * sizeof(float);
    });

    json header{{"format_version", kCheckpointVersion},
                {"config", config_to_json(p.config)},
                {"vocab", {{"mode", to_string(ckpt.vocab.mode())}, {"tokens", ckpt.vocab.base_tokens()}}},
                {"length_counts", ckpt.lengths.counts()},
                {"metadata", ckpt.metadata},
                {"tensors", tensors}};
    const std::string text = header.dump();

    std::string out(kMagic);
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint64_t>(out, text.size());
    out += text;
    out.reserve(out.size() + offset);
    p.visit([&](const std::string&, const Tensor<float>& t) {
        for (float v : t.data) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    });
    return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
    if (bytes.substr(0, kMagic.size()) != kMagic) throw std::runtime_error("checkpoint: bad magic");
    const auto version = get_le<std::uint32_t>(bytes, kMagic.size());
    if (version != kCheckpointVersion) {
        throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version));
    }
    const auto header_len = get_le<std::uint64_t>(bytes, kMagic.size() + 4);
    const std::size_t header_start = kMagic.size() + 12;
    if (header_start + header_len > bytes.size()) throw std::runtime_error("checkpoint: truncated header");
    const json header = json::parse(bytes.substr(header_start, header_len));
    const std::size_t data_start = header_start + header_len;

    Checkpoint ckpt;
    ckpt.params = allocate_parameters<float>(config_from_json(header.at("config")));
    ckpt.vocab = Vocab::from_base_tokens(header.at("vocab").at("tokens").get<std::vector<std::string>>(),
                                         parse_tokenizer_mode(header.at("vocab").at("mode").get<std::string>()));
    ckpt.lengths = LengthDistribution::from_counts(header.at("length_counts").get<std::vector<std::uint64_t>>());
    ckpt.metadata = header.at("metadata").get<std::map<std::string, std::string>>();

    const json& index = header.at("tensors");
    std::size_t i = 0;
    std::uint64_t expected_offset = 0;
    ckpt.params.visit([&](const std::string& name, Tensor<float>& t) {
        if (i >= index.size()) throw std::runtime_error("checkpoint: tensor index too short");
        const json& entry = index[i++];
        if (entry.at("name").get<std::string>() != name) {
            throw std::runtime_error("checkpoint: expected tensor '" + name + "', found '" +
                                     entry.at("name").get<std::string>() + "'");
        }
        if (entry.at("shape").get<Shape>() != t.shape) {
            throw std::runtime_error("checkpoint: tensor '" + name + "' has shape " +
                                     to_string(entry.at("shape").get<Shape>()) + ", config implies " +
                                     to_string(t.shape));
        }
        const auto offset = entry.at("offset").get<std::uint64_t>();
        if (offset != expected_offset) throw std::runtime_error("checkpoint: non-contiguous tensor '" + name + "'");
        for (std::size_t j = 0; j < t.size(); ++j) {
            t.data[j] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, data_start + offset + 4 * j));
        }
        expected_offset += t.size() * sizeof(float);
    });
    if (i != index.size()) throw std::runtime_error("checkpoint: unexpected extra tensors");
    if (data_start + expected_offset != bytes.size()) throw std::runtime_error("checkpoint: trailing bytes");
    if (ckpt.vocab.size() > ckpt.params.config.vocab_size) {
        throw std::runtime_error("checkpoint: vocabulary larger than the model's embedding table");
    }
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const std::string bytes = serialize_checkpoint(ckpt);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("error writing '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::string bytes = read_text_file(path);
    try {
        return parse_checkpoint(bytes);
    } catch (const std::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

}  // namespace film
