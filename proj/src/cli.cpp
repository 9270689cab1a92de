#include "film/cli.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "film/checkpoint.hpp"
#include "film/config.hpp"
#include "film/decode.hpp"
#include "film/evalppl.hpp"
#include "film/infill.hpp"
#include "film/kernels.hpp"
#include "film/synthetic.hpp"
#include "film/train.hpp"

namespace film::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

void write_atomic(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
        out << text;
        if (!out) throw std::runtime_error("error writing '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

struct Manifest {
    std::string command;
    std::vector<std::string> args;
    json config = json::object();
    std::uint64_t seed = 0;
    std::string started = utc_now();
    std::vector<std::string> outputs;

    void write(const fs::path& dir) const {
        json j{{"command", command},
               {"args", args},
               {"config", config},
               {"seed", seed},
               {"version", FILM_VERSION},
               {"started_at", started},
               {"finished_at", utc_now()},
               {"outputs", outputs}};
        write_atomic(dir / "manifest.json", j.dump(2) + "\n");
    }
};

struct SamplerFlags {
    bool greedy = false;
    double top_p = 1.0;
    double temperature = 1.0;

    void add(CLI::App* app) {
        app->add_flag("--greedy", greedy, "Argmax decoding");
        app->add_option("--top-p", top_p, "Nucleus threshold in (0,1]");
        app->add_option("--temperature", temperature, "Sampling temperature");
    }
    SamplerConfig config() const {
        SamplerConfig s{greedy, temperature, top_p};
        s.validate();
        return s;
    }
    json to_json() const { return {{"greedy", greedy}, {"top_p", top_p}, {"temperature", temperature}}; }
};

Objective checkpoint_objective(const Checkpoint& ckpt) {
    const auto it = ckpt.metadata.find("objective");
    if (it != ckpt.metadata.end()) return parse_objective(it->second);
    return ckpt.params.config.attention == AttentionMode::Bidirectional ? Objective::Film : Objective::Clm;
}

// Longest data sequence a checkpoint was trained on.
std::size_t checkpoint_window(const Checkpoint& ckpt) {
    const auto it = ckpt.metadata.find("data_n_max");
    if (it != ckpt.metadata.end()) return std::stoul(it->second);
    return ckpt.lengths.n_max();
}

DocumentSplit parse_split(const std::string& s) {
    if (s == "file") return DocumentSplit::File;
    if (s == "line") return DocumentSplit::Line;
    throw std::invalid_argument("unknown split '" + s + "' (expected file or line)");
}

// Splits text on a placeholder; each occurrence becomes one mask id.
std::vector<TokenId> encode_with_masks(const std::string& text, const std::string& placeholder, const Vocab& vocab) {
    if (placeholder.empty()) throw std::invalid_argument("placeholder must be non-empty");
    std::vector<TokenId> ids;
    std::size_t start = 0;
    while (true) {
        const std::size_t hit = text.find(placeholder, start);
        const std::vector<TokenId> part =
            encode_ids(std::string_view(text).substr(start, hit == std::string::npos ? std::string::npos : hit - start),
                       vocab);
        ids.insert(ids.end(), part.begin(), part.end());
        if (hit == std::string::npos) break;
        ids.push_back(kMaskId);
        start = hit + placeholder.size();
    }
    if (ids.empty()) throw std::invalid_argument("text yields no tokens");
    return ids;
}

class Runner {
public:
    Runner(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

    int run(const std::vector<std::string>& args) {
        CLI::App app{"Fill-in language model toolkit", "film"};
        app.require_subcommand(1);
        app.set_version_flag("--version", FILM_VERSION);
        int threads = 0;
        app.add_option("--threads", threads, "OpenMP threads for the numeric kernels (0: runtime default)");

        setup_train(app);
        setup_eval(app);
        setup_infill(app);
        setup_generate(app);
        setup_bench(app);
        setup_transform(app);
        setup_make_corpus(app);

        std::vector<std::string> reversed(args.rbegin(), args.rend());
        try {
            app.parse(reversed);
        } catch (const CLI::CallForHelp&) {
            out_ << app.help();
            return 0;
        } catch (const CLI::CallForAllHelp&) {
            out_ << app.help("", CLI::AppFormatMode::All);
            return 0;
        } catch (const CLI::CallForVersion&) {
            out_ << FILM_VERSION << "\n";
            return 0;
        } catch (const CLI::ParseError& e) {
            const CLI::App* sub = nullptr;
            for (const CLI::App* s : app.get_subcommands()) sub = s;
            err_ << (sub ? sub->help() : app.help());
            err_ << json{{"error", e.what()}, {"kind", "usage"}}.dump() << "\n";
            return 2;
        }
        if (threads > 0) kernels::parallel::set_threads(threads);
        manifest_.args = args;
        try {
            action_();
        } catch (const std::exception& e) {
            err_ << json{{"error", e.what()}, {"command", manifest_.command}}.dump() << "\n";
            return 1;
        }
        return 0;
    }

private:
    std::ostream& out_;
    std::ostream& err_;
    std::function<void()> action_;
    Manifest manifest_;

    // Options shared by several subcommands; CLI11 binds to these members.
    std::string config_path_, corpus_, out_dir_, ckpt_, policy_ = "l2r", schedule_, objective_;
    std::optional<std::string> split_;
    std::string eval_policy_ = "all";
    std::string tokenizer_;
    std::optional<std::uint64_t> seed_;
    std::optional<std::uint64_t> steps_;
    std::optional<std::size_t> window_;
    std::optional<double> lr_;
    SamplerFlags sampler_;
    SamplerFlags bench_sampler_{false, 0.95, 0.8};
    std::string text_, placeholder_ = std::string(kMaskText), trace_;
    std::size_t count_ = 1, length_ = 0, limit_ = 0, max_span_tokens_ = 64, size_ = 200000;
    std::string film_ckpt_, cm_ckpt_, task_ = "span", rouge_mode_ = "fills", spans_, kind_ = "text";

    std::uint64_t seed() const { return seed_.value_or(0); }

    void finish(const std::vector<std::string>& outputs) {
        if (out_dir_.empty()) return;
        manifest_.outputs = outputs;
        manifest_.seed = seed();
        manifest_.write(out_dir_);
    }

    void setup_train(CLI::App& app) {
        CLI::App* sub = app.add_subcommand("train", "Train a fill-in model or a causal baseline");
        sub->add_option("--config", config_path_, "INI config file");
        sub->add_option("--corpus", corpus_, "Corpus file or directory (overrides data.corpus)");
        sub->add_option("--out", out_dir_, "Run directory for checkpoints, metrics and manifest")->required();
        sub->add_option("--seed", seed_, "Seed for every random stream");
        sub->add_option("--schedule", schedule_, "fixed:P | uniform | beta-mode:M | beta:A,B");
        sub->add_option("--objective", objective_, "film | clm | cm");
        sub->add_option("--steps", steps_, "Total optimizer steps");
        sub->add_option("--window", window_, "Sequence window in tokens");
        sub->add_option("--lr", lr_, "Learning rate");
        sub->add_option("--tokenizer", tokenizer_, "char | word");
        sub->add_option("--split", split_, "file | line: one document per file or per line");
        sub->callback([this] {
            action_ = [this] { do_train(); };
        });
    }

    void do_train() {
        manifest_.command = "train";
        RunConfig rc;
        if (!config_path_.empty()) rc = load_config(config_path_);
        if (!corpus_.empty()) rc.data.corpus = corpus_;
        if (seed_) rc.train.seed = *seed_;
        if (!schedule_.empty()) rc.train.schedule = NoiseSchedule::parse(schedule_);
        if (!objective_.empty()) rc.train.objective = parse_objective(objective_);
        if (steps_) rc.train.total_steps = *steps_;
        if (window_) rc.data.window = *window_;
        if (lr_) rc.train.adam.learning_rate = *lr_;
        if (!tokenizer_.empty()) rc.data.tokenizer = parse_tokenizer_mode(tokenizer_);
        if (split_) rc.data.split = parse_split(*split_);
        rc.train.checkpoint_dir = out_dir_;
        seed_ = rc.train.seed;
        manifest_.config = to_json(rc);

        const TrainData data = load_train_data(rc.data);
        const TrainResult result = train(rc.train, rc.model, data);
        std::vector<std::string> outputs;
        for (const auto& entry : fs::directory_iterator(out_dir_)) {
            if (entry.path().filename() != "manifest.json") outputs.push_back(entry.path().filename().string());
        }
        std::sort(outputs.begin(), outputs.end());
        finish(outputs);
        out_ << json{{"checkpoint", (fs::path(out_dir_) / "final.ckpt").string()},
                     {"final_train_loss", result.final_train_loss},
                     {"final_val_loss", result.final_val_loss},
                     {"train_sequences", data.train.size()},
                     {"validation_sequences", data.validation.size()},
                     {"parameters", result.params.count()}}
                    .dump()
             << "\n";
    }

    void setup_eval(CLI::App& app) {
        CLI::App* sub = app.add_subcommand("eval-ppl", "Perplexity of a checkpoint on a corpus");
        sub->add_option("--ckpt", ckpt_, "Checkpoint file")->required();
        sub->add_option("--corpus", corpus_, "Corpus file or directory")->required();
        sub->add_option("--policy", eval_policy_, "random | l2r | r2l | min-ent | max-ent | all (default)");
        sub->add_option("--seed", seed_, "Seed for the random order policy");
        sub->add_option("--split", split_, "file | line");
        sub->add_option("--limit", limit_, "Score at most this many sequences (0: all)");
        sub->add_option("--out", out_dir_, "Directory for report.json and manifest");
        sub->callback([this] {
            action_ = [this] { eval_ppl(); };
        });
    }

    void eval_ppl() {
        manifest_.command = "eval-ppl";
        const Checkpoint ckpt = load_checkpoint(ckpt_);
        const Objective objective = checkpoint_objective(ckpt);
        if (objective == Objective::Cm) throw std::invalid_argument("eval-ppl does not score causal-masking checkpoints");
        std::vector<TokenSequence> seqs =
            make_sequences(load_documents(corpus_, parse_split(split_.value_or("file"))), ckpt.vocab, checkpoint_window(ckpt));
        if (limit_ && seqs.size() > limit_) seqs.erase(seqs.begin() + static_cast<std::ptrdiff_t>(limit_), seqs.end());
        const TransformerLM<float> model(ckpt.params);
        manifest_.config = {{"ckpt", ckpt_}, {"corpus", corpus_}, {"policy", eval_policy_}, {"limit", limit_}};

        json report{{"checkpoint", ckpt_}, {"objective", to_string(objective)}, {"sequences", seqs.size()}};
        json breakdown = json::object();
        if (objective == Objective::Clm) {
            const PerplexityReport r = clm_corpus_perplexity(model, seqs);
            report["total_tokens"] = r.scored_tokens;
            report["perplexity"] = r.perplexity;
            breakdown["causal"] = json::parse(r.to_json());
        } else {
            std::vector<OrderPolicy> policies;
            if (eval_policy_ == "all") {
                policies.assign(std::begin(kAllPolicies), std::end(kAllPolicies));
            } else {
                policies.push_back(parse_order_policy(eval_policy_));
            }
            for (OrderPolicy p : policies) {
                const PerplexityReport r = corpus_perplexity(model, seqs, ckpt.lengths, p, seed());
                report["total_tokens"] = r.scored_tokens;
                if (!report.contains("perplexity")) report["perplexity"] = r.perplexity;
                breakdown[to_string(p)] = json::parse(r.to_json());
            }
        }
        report["policies"] = breakdown;
        const std::string text = report.dump();
        out_ << text << "\n";
        if (!out_dir_.empty()) {
            write_atomic(fs::path(out_dir_) / "report.json", text + "\n");
            finish({"report.json"});
        }
    }

    void setup_infill(CLI::App& app) {
        CLI::App* sub = app.add_subcommand("infill", "Fill placeholder positions in a text");
        sub->add_option("--ckpt", ckpt_, "Fill-in checkpoint")->required();
        sub->add_option("--text", text_, "Text with one placeholder per missing token")->required();
        sub->add_option("--placeholder", placeholder_, "Mask placeholder (default [MASK])");
        sub->add_option("--policy", policy_, "random | l2r | r2l | min-ent | max-ent");
        sub->add_option("--seed", seed_, "Sampling seed");
        sub->add_option("--trace", trace_, "Write one JSON line per decoding step to this file");
        sub->add_option("--out", out_dir_, "Directory for output.txt and manifest");
        sampler_.add(sub);
        sub->callback([this] {
            action_ = [this] { infill(); };
        });
    }

    void infill() {
        manifest_.command = "infill";
        const Checkpoint ckpt = load_checkpoint(ckpt_);
        if (ckpt.params.config.attention != AttentionMode::Bidirectional) {
            throw std::invalid_argument("infill needs a fill-in (bidirectional) checkpoint");
        }
        const std::vector<TokenId> ids = encode_with_masks(text_, placeholder_, ckpt.vocab);
        const TransformerLM<float> model(ckpt.params);
        Rng rng = make_rng(seed(), 0);
        const FillResult r = fill_in(model, ids, parse_order_policy(policy_), sampler_.config(), rng);
        const std::string completed = decode(r.ids, ckpt.vocab);
        manifest_.config = {{"ckpt", ckpt_}, {"text", text_}, {"policy", policy_}, {"sampler", sampler_.to_json()}};
        std::vector<std::string> outputs;
        if (!trace_.empty()) {
            std::ostringstream t;
            std::vector<TokenId> state = ids;
            for (std::size_t i = 0; i < r.steps.size(); ++i) {
                const FillStep& s = r.steps[i];
                state[s.position] = s.token;
                t << json{{"step", i + 1},
                          {"position", s.position},
                          {"token", ckpt.vocab.token(s.token)},
                          {"entropy", s.entropy},
                          {"text", decode(state, ckpt.vocab)}}
                         .dump()
                  << "\n";
            }
            write_atomic(trace_, t.str());
            outputs.push_back(trace_);
        }
        out_ << completed << "\n";
        if (!out_dir_.empty()) {
            write_atomic(fs::path(out_dir_) / "output.txt", completed + "\n");
            outputs.push_back("output.txt");
            finish(outputs);
        }
    }

    void setup_generate(CLI::App& app) {
        CLI::App* sub = app.add_subcommand("generate", "Generate text from an all-mask sequence");
        sub->add_option("--ckpt", ckpt_, "Fill-in checkpoint")->required();
        sub->add_option("--count", count_, "Number of samples");
        sub->add_option("--length", length_, "Fixed length (0: draw from the length distribution)");
        sub->add_option("--policy", policy_, "random | l2r | r2l | min-ent | max-ent");
        sub->add_option("--seed", seed_, "Sampling seed");
        sub->add_option("--out", out_dir_, "Directory for samples.txt and manifest");
        sampler_.add(sub);
        sub->callback([this] {
            action_ = [this] { generate(); };
        });
    }

    void generate() {
        manifest_.command = "generate";
        const Checkpoint ckpt = load_checkpoint(ckpt_);
        if (ckpt.params.config.attention != AttentionMode::Bidirectional) {
            throw std::invalid_argument("generate needs a fill-in (bidirectional) checkpoint");
        }
        const TransformerLM<float> model(ckpt.params);
        const OrderPolicy policy = parse_order_policy(policy_);
        const SamplerConfig sampler = sampler_.config();
        std::string all;
        for (std::size_t i = 0; i < count_; ++i) {
            Rng rng = make_rng(seed(), i);
            const FillResult r = length_ ? generate_with_length(model, length_, policy, sampler, rng)
                                         : generate_from_scratch(model, ckpt.lengths, policy, sampler, rng);
            all += decode(r.ids, ckpt.vocab) + "\n";
        }
        out_ << all;
        manifest_.config = {{"ckpt", ckpt_}, {"count", count_}, {"length", length_}, {"policy", policy_},
                            {"sampler", sampler_.to_json()}};
        if (!out_dir_.empty()) {
            write_atomic(fs::path(out_dir_) / "samples.txt", all);
            finish({"samples.txt"});
        }
    }

    void setup_bench(CLI::App& app) {
        CLI::App* sub = app.add_subcommand("bench", "Infilling benchmark: fill-in model vs causal masking");
        sub->add_option("--film-ckpt", film_ckpt_, "Fill-in checkpoint")->required();
        sub->add_option("--cm-ckpt", cm_ckpt_, "Causal-masking checkpoint")->required();
        sub->add_option("--corpus", corpus_, "Corpus file or directory")->required();
        sub->add_option("--task", task_, "span | sentence-drop");
        sub->add_option("--split", split_, "file | line (stories: one per line)");
        sub->add_option("--policy", policy_, "Fill order for the fill-in model");
        sub->add_option("--rouge-mode", rouge_mode_, "fills | full-text");
        sub->add_option("--limit", limit_, "At most this many examples (0: all)");
        sub->add_option("--max-span-tokens", max_span_tokens_, "Causal-masking generation cap per span");
        sub->add_option("--seed", seed_, "Seed for tasks and sampling");
        sub->add_option("--out", out_dir_, "Directory for report.jsonl and manifest");
        bench_sampler_.add(sub);
        sub->callback([this] {
            action_ = [this] { bench(); };
        });
    }

    void bench() {
        manifest_.command = "bench";
        const Checkpoint film = load_checkpoint(film_ckpt_);
        const Checkpoint cm = load_checkpoint(cm_ckpt_);
        if (!(film.vocab == cm.vocab)) throw std::invalid_argument("bench: checkpoints were trained on different vocabularies");
        BenchmarkOptions opt;
        opt.task = parse_task_kind(task_);
        opt.sampler = bench_sampler_.config();
        opt.film_policy = parse_order_policy(policy_);
        opt.rouge_mode = parse_rouge_mode(rouge_mode_);
        opt.max_fill_tokens_per_span = max_span_tokens_;
        opt.limit = limit_;
        opt.seed = seed();

        const std::vector<std::string> docs = load_documents(corpus_, parse_split(split_.value_or(opt.task == TaskKind::Span ? "file" : "line")));
        BenchmarkCorpus corpus;
        const std::size_t window = std::min(checkpoint_window(film), film.params.config.n_max);
        std::size_t skipped = 0;
        if (opt.task == TaskKind::Span) {
            for (const TokenSequence& s : make_sequences(docs, film.vocab, window)) corpus.sequences.push_back(s.ids());
        } else {
            for (const std::string& doc : docs) {
                std::vector<std::vector<TokenId>> story;
                std::size_t total = 0;
                for (const std::string& sentence : split_sentences(doc)) {
                    story.push_back(encode_ids(sentence, film.vocab));
                    total += story.back().size();
                }
                const bool fits = total <= window && story.size() >= 2 &&
                                  std::none_of(story.begin(), story.end(), [](const auto& s) { return s.empty(); });
                if (fits) {
                    corpus.stories.push_back(std::move(story));
                } else {
                    ++skipped;
                }
            }
        }
        if (skipped) err_ << "bench: skipped " << skipped << " stories longer than " << window << " tokens\n";
        const TransformerLM<float> film_model(film.params), cm_model(cm.params);
        const BenchmarkReport rep = run_benchmark(film_model, cm_model, film.vocab, corpus, opt);
        manifest_.config = {{"film_ckpt", film_ckpt_}, {"cm_ckpt", cm_ckpt_}, {"corpus", corpus_},
                            {"task", task_},         {"policy", policy_},   {"rouge_mode", rouge_mode_},
                            {"limit", limit_},       {"sampler", bench_sampler_.to_json()}};
        if (out_dir_.empty()) {
            out_ << rep.text();
            return;
        }
        write_atomic(fs::path(out_dir_) / "report.jsonl", rep.text());
        finish({"report.jsonl"});
        out_ << rep.lines.back() << "\n";
    }

    void setup_transform(CLI::App& app) {
        CLI::App* sub = app.add_subcommand("transform-cm", "Show the causal-masking rearrangement of a text");
        sub->add_option("--text", text_, "Input text")->required();
        sub->add_option("--spans", spans_, "Comma-separated 1-indexed endpoints a1,a2,...; random when omitted");
        sub->add_option("--tokenizer", tokenizer_, "char | word (default word)");
        sub->add_option("--seed", seed_, "Seed for random spans");
        sub->callback([this] {
            action_ = [this] { transform(); };
        });
    }

    void transform() {
        manifest_.command = "transform-cm";
        const TokenizerMode mode = tokenizer_.empty() ? TokenizerMode::Word : parse_tokenizer_mode(tokenizer_);
        const Vocab vocab = build_vocab(text_, mode);
        const TokenSequence x = encode(text_, vocab);
        SpanSpec spans;
        if (spans_.empty()) {
            Rng rng = make_rng(seed(), 0);
            spans = sample_spans(x.size(), rng);
        } else {
            std::vector<std::size_t> ends;
            std::stringstream ss(spans_);
            for (std::string item; std::getline(ss, item, ',');) ends.push_back(std::stoul(item));
            spans = spans_from_endpoints(ends, x.size());
        }
        const SentinelLayout layout(vocab.size());
        out_ << render_extended(cm_transform(x.ids(), spans, layout), vocab, layout) << "\n";
    }

    void setup_make_corpus(CLI::App& app) {
        CLI::App* sub = app.add_subcommand("make-corpus", "Write a seeded synthetic corpus");
        sub->add_option("--kind", kind_, "text | stories");
        sub->add_option("--size", size_, "Characters (text) or story count (stories)");
        sub->add_option("--seed", seed_, "Generator seed");
        sub->add_option("--out", out_dir_, "Output file")->required();
        sub->callback([this] {
            action_ = [this] { make_corpus(); };
        });
    }

    void make_corpus() {
        manifest_.command = "make-corpus";
        std::string text;
        if (kind_ == "text") {
            text = synthetic_text(size_, seed());
        } else if (kind_ == "stories") {
            for (const auto& story : synthetic_stories(size_, seed())) {
                for (std::size_t i = 0; i < story.size(); ++i) text += (i ? " " : "") + story[i];
                text += "\n";
            }
        } else {
            throw std::invalid_argument("unknown corpus kind '" + kind_ + "' (expected text or stories)");
        }
        write_atomic(out_dir_, text);
        out_ << json{{"path", out_dir_}, {"bytes", text.size()}}.dump() << "\n";
    }
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Runner runner(out, err);
    return runner.run(args);
}

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace film::cli
