#include "film/config.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace film {

namespace {

namespace pt = boost::property_tree;

template <typename T>
void read(const pt::ptree& tree, const char* key, T& out) {
    if (const auto v = tree.get_optional<std::string>(key)) {
        try {
            out = tree.get<T>(key);
        } catch (const pt::ptree_error&) {
            throw std::invalid_argument(std::string("config: bad value for ") + key + ": '" + *v + "'");
        }
    }
}

std::string unquote(std::string s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
    return s;
}

NoiseSchedule read_schedule(const pt::ptree& tree, const NoiseSchedule& current) {
    const auto kind = tree.get_optional<std::string>("noise.schedule");
    if (!kind) return current;
    const std::string name = unquote(*kind);
    if (name == "fixed") return NoiseSchedule::fixed(tree.get<double>("noise.p", 0.15));
    if (name == "uniform") return NoiseSchedule::uniform();
    if (name == "beta-mode" || (name == "beta" && tree.get_optional<double>("noise.mode"))) {
        return NoiseSchedule::beta_mode(tree.get<double>("noise.mode"));
    }
    if (name == "beta") return NoiseSchedule::beta(tree.get<double>("noise.alpha", 2.5), tree.get<double>("noise.beta", 2.5));
    return NoiseSchedule::parse(name);
}

}  // namespace

RunConfig parse_config(std::string_view ini_text, RunConfig base) {
    pt::ptree tree;
    std::istringstream in{std::string(ini_text)};
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw std::invalid_argument("config: " + e.message() + " at line " + std::to_string(e.line()));
    }
    RunConfig c = std::move(base);

    if (const auto v = tree.get_optional<std::string>("data.corpus")) c.data.corpus = unquote(*v);
    if (const auto v = tree.get_optional<std::string>("data.tokenizer")) c.data.tokenizer = parse_tokenizer_mode(unquote(*v));
    if (const auto v = tree.get_optional<std::string>("data.split")) {
        const std::string s = unquote(*v);
        if (s != "file" && s != "line") throw std::invalid_argument("config: data.split must be file or line");
        c.data.split = s == "file" ? DocumentSplit::File : DocumentSplit::Line;
    }
    read(tree, "data.window", c.data.window);
    read(tree, "data.validation_fraction", c.data.validation_fraction);

    read(tree, "model.d_model", c.model.d_model);
    read(tree, "model.n_layers", c.model.n_layers);
    read(tree, "model.n_heads", c.model.n_heads);
    read(tree, "model.d_ff", c.model.d_ff);
    read(tree, "model.dropout", c.model.dropout_p);

    if (const auto v = tree.get_optional<std::string>("train.objective")) c.train.objective = parse_objective(unquote(*v));
    read(tree, "train.learning_rate", c.train.adam.learning_rate);
    read(tree, "train.beta1", c.train.adam.beta1);
    read(tree, "train.beta2", c.train.adam.beta2);
    read(tree, "train.epsilon", c.train.adam.epsilon);
    read(tree, "train.weight_decay", c.train.adam.weight_decay);
    read(tree, "train.batch_tokens", c.train.batch_tokens);
    read(tree, "train.total_steps", c.train.total_steps);
    read(tree, "train.eval_interval", c.train.eval_interval);
    read(tree, "train.warmup_steps", c.train.warmup_steps);
    read(tree, "train.clip_norm", c.train.clip_norm);
    read(tree, "train.max_val_sequences", c.train.max_val_sequences);
    read(tree, "train.seed", c.train.seed);

    c.train.schedule = read_schedule(tree, c.train.schedule);
    if (c.data.window == 0) throw std::invalid_argument("config: data.window must be positive");
    if (!(c.data.validation_fraction >= 0 && c.data.validation_fraction < 1)) {
        throw std::invalid_argument("config: data.validation_fraction must be in [0,1)");
    }
    return c;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
    try {
        return parse_config(read_text_file(path), std::move(base));
    } catch (const std::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

nlohmann::json to_json(const RunConfig& c) {
    return {{"data",
             {{"corpus", c.data.corpus.string()},
              {"tokenizer", to_string(c.data.tokenizer)},
              {"split", c.data.split == DocumentSplit::File ? "file" : "line"},
              {"window", c.data.window},
              {"validation_fraction", c.data.validation_fraction}}},
            {"model",
             {{"d_model", c.model.d_model},
              {"n_layers", c.model.n_layers},
              {"n_heads", c.model.n_heads},
              {"d_ff", c.model.d_ff},
              {"dropout", c.model.dropout_p}}},
            {"train",
             {{"objective", to_string(c.train.objective)},
              {"learning_rate", c.train.adam.learning_rate},
              {"beta1", c.train.adam.beta1},
              {"beta2", c.train.adam.beta2},
              {"epsilon", c.train.adam.epsilon},
              {"weight_decay", c.train.adam.weight_decay},
              {"batch_tokens", c.train.batch_tokens},
              {"total_steps", c.train.total_steps},
              {"eval_interval", c.train.eval_interval},
              {"warmup_steps", c.train.warmup_steps},
              {"clip_norm", c.train.clip_norm},
              {"max_val_sequences", c.train.max_val_sequences},
              {"seed", c.train.seed}}},
            {"noise", {{"schedule", c.train.schedule.describe()}}}};
}

TrainData load_train_data(const DataConfig& data) {
    if (data.corpus.empty()) throw std::invalid_argument("no corpus configured (set data.corpus or pass --corpus)");
    const std::vector<std::string> docs = load_documents(data.corpus, data.split);
    std::string all;
    for (const std::string& d : docs) all += d;
    TrainData td;
    td.vocab = build_vocab(all, data.tokenizer);
    std::vector<TokenSequence> seqs = make_sequences(docs, td.vocab, data.window);
    if (seqs.empty()) throw std::runtime_error("corpus '" + data.corpus.string() + "' yields no sequences");
    std::size_t n_val = 0;
    if (data.validation_fraction > 0 && seqs.size() > 1) {
        n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(data.validation_fraction *
                                                                              static_cast<double>(seqs.size()))));
        n_val = std::min(n_val, seqs.size() - 1);
    }
    td.validation.assign(seqs.end() - static_cast<std::ptrdiff_t>(n_val), seqs.end());
    seqs.erase(seqs.end() - static_cast<std::ptrdiff_t>(n_val), seqs.end());
    td.train = std::move(seqs);
    td.n_max = data.window;
    return td;
}

}  // namespace film
