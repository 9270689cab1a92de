#include "film/infill.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>

#include <json.hpp>

namespace film {

namespace {

using nlohmann::json;

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

// Overlap of clipped n-gram counts; counts of candidate and reference n-grams.
struct Overlap {
    std::size_t hits = 0, cand = 0, ref = 0;
};

Overlap ngram_overlap(const std::vector<std::string>& c, const std::vector<std::string>& r, std::size_t n) {
    const auto grams = [n](const std::vector<std::string>& t) {
        std::map<std::vector<std::string>, std::size_t> m;
        for (std::size_t i = 0; i + n <= t.size(); ++i) ++m[{t.begin() + static_cast<std::ptrdiff_t>(i),
                                                             t.begin() + static_cast<std::ptrdiff_t>(i + n)}];
        return m;
    };
    const auto cg = grams(c), rg = grams(r);
    Overlap o;
    o.cand = c.size() >= n ? c.size() - n + 1 : 0;
    o.ref = r.size() >= n ? r.size() - n + 1 : 0;
    for (const auto& [g, k] : cg) {
        const auto it = rg.find(g);
        if (it != rg.end()) o.hits += std::min(k, it->second);
    }
    return o;
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

// F1 from integer counts, so exact ratios stay exact.
PrecisionRecall score(const Overlap& o) {
    PrecisionRecall pr;
    if (o.cand) pr.precision = static_cast<double>(o.hits) / static_cast<double>(o.cand);
    if (o.ref) pr.recall = static_cast<double>(o.hits) / static_cast<double>(o.ref);
    if (o.hits) pr.f1 = 2.0 * static_cast<double>(o.hits) / static_cast<double>(o.cand + o.ref);
    return pr;
}

json to_json(const PrecisionRecall& pr) {
    return json{{"precision", pr.precision}, {"recall", pr.recall}, {"f1", pr.f1}};
}

json to_json(const RougeScore& r) {
    return json{{"rouge1", to_json(r.rouge1)}, {"rouge2", to_json(r.rouge2)}, {"rougeL", to_json(r.rougeL)}};
}

void accumulate(RougeScore& sum, const RougeScore& r) {
    const auto add = [](PrecisionRecall& a, const PrecisionRecall& b) {
        a.precision += b.precision;
        a.recall += b.recall;
        a.f1 += b.f1;
    };
    add(sum.rouge1, r.rouge1);
    add(sum.rouge2, r.rouge2);
    add(sum.rougeL, r.rougeL);
}

RougeScore divide(RougeScore s, double k) {
    for (PrecisionRecall* p : {&s.rouge1, &s.rouge2, &s.rougeL}) {
        p->precision /= k;
        p->recall /= k;
        p->f1 /= k;
    }
    return s;
}

std::vector<std::string> token_strings(std::span<const TokenId> ids, const Vocab& vocab) {
    std::vector<std::string> out;
    for (TokenId id : ids) out.push_back(vocab.token(id));
    return out;
}

std::vector<TokenId> concat(const std::vector<std::vector<TokenId>>& parts) {
    std::vector<TokenId> out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
}

// The task's context with each span replaced by fills[i].
std::vector<TokenId> splice(const InfillTask& task, const std::vector<std::vector<TokenId>>& fills) {
    std::vector<TokenId> out;
    std::size_t cursor = 0;  // 0-indexed
    for (std::size_t i = 0; i < task.spans.spans.size(); ++i) {
        const Span& s = task.spans.spans[i];
        out.insert(out.end(), task.original.begin() + static_cast<std::ptrdiff_t>(cursor),
                   task.original.begin() + static_cast<std::ptrdiff_t>(s.begin - 1));
        out.insert(out.end(), fills[i].begin(), fills[i].end());
        cursor = s.end - 1;
    }
    out.insert(out.end(), task.original.begin() + static_cast<std::ptrdiff_t>(cursor), task.original.end());
    return out;
}

}  // namespace

void SpanSpec::validate(std::size_t n) const {
    std::size_t prev_end = 1;
    for (const Span& s : spans) {
        if (s.begin < prev_end || s.begin >= s.end || s.end > n + 1) {
            throw std::invalid_argument("span [" + std::to_string(s.begin) + ", " + std::to_string(s.end) +
                                        ") is empty, overlapping, unsorted or outside 1.." + std::to_string(n));
        }
        prev_end = s.end;
    }
}

std::vector<std::size_t> SpanSpec::masked_positions() const {
    std::vector<std::size_t> out;
    for (const Span& s : spans) {
        for (std::size_t p = s.begin; p < s.end; ++p) out.push_back(p - 1);
    }
    return out;
}

SpanSpec spans_from_endpoints(std::span<const std::size_t> endpoints, std::size_t n) {
    if (endpoints.size() % 2) throw std::invalid_argument("span endpoints must come in pairs");
    for (std::size_t i = 0; i < endpoints.size(); ++i) {
        if (endpoints[i] < 1 || endpoints[i] > n || (i && endpoints[i] <= endpoints[i - 1])) {
            throw std::invalid_argument("span endpoints must be strictly increasing within 1.." + std::to_string(n));
        }
    }
    SpanSpec spec;
    for (std::size_t i = 0; i < endpoints.size(); i += 2) spec.spans.push_back({endpoints[i], endpoints[i + 1]});
    return spec;
}

SpanSpec sample_spans(std::size_t n, Rng& rng) {
    if (n < 2) throw std::invalid_argument("sample_spans: need at least 2 tokens");
    std::uniform_int_distribution<std::size_t> pick_m(1, std::min(kMaxSpans, n / 2));
    const std::size_t m = pick_m(rng);
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{1});
    std::vector<std::size_t> ends;
    std::sample(all.begin(), all.end(), std::back_inserter(ends), 2 * m, rng);
    std::sort(ends.begin(), ends.end());
    return spans_from_endpoints(ends, n);
}

TokenId SentinelLayout::mask(std::size_t i) const {
    if (i >= kMaxSpans) throw std::out_of_range("sentinel index " + std::to_string(i) + " >= 5");
    return static_cast<TokenId>(base_ + i);
}

TokenId SentinelLayout::fill(std::size_t i) const {
    if (i >= kMaxSpans) throw std::out_of_range("sentinel index " + std::to_string(i) + " >= 5");
    return static_cast<TokenId>(base_ + kMaxSpans + i);
}

bool SentinelLayout::is_mask(TokenId id) const {
    return id >= 0 && static_cast<std::size_t>(id) >= base_ && static_cast<std::size_t>(id) < base_ + kMaxSpans;
}

bool SentinelLayout::is_fill(TokenId id) const {
    return id >= 0 && static_cast<std::size_t>(id) >= base_ + kMaxSpans &&
           static_cast<std::size_t>(id) < extended_size();
}

std::size_t SentinelLayout::index_of(TokenId id) const {
    if (is_mask(id)) return static_cast<std::size_t>(id) - base_;
    if (is_fill(id)) return static_cast<std::size_t>(id) - base_ - kMaxSpans;
    throw std::invalid_argument("token id " + std::to_string(id) + " is not a sentinel");
}

std::vector<TokenId> cm_transform(std::span<const TokenId> x, const SpanSpec& spans, const SentinelLayout& layout) {
    if (spans.spans.size() > kMaxSpans) {
        throw std::invalid_argument("cm_transform: " + std::to_string(spans.spans.size()) +
                                    " spans exceed the 5 reserved sentinels");
    }
    spans.validate(x.size());
    std::vector<TokenId> out;
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < spans.spans.size(); ++i) {
        const Span& s = spans.spans[i];
        out.insert(out.end(), x.begin() + static_cast<std::ptrdiff_t>(cursor),
                   x.begin() + static_cast<std::ptrdiff_t>(s.begin - 1));
        out.push_back(layout.mask(i));
        cursor = s.end - 1;
    }
    out.insert(out.end(), x.begin() + static_cast<std::ptrdiff_t>(cursor), x.end());
    for (std::size_t i = 0; i < spans.spans.size(); ++i) {
        const Span& s = spans.spans[i];
        out.push_back(layout.fill(i));
        out.insert(out.end(), x.begin() + static_cast<std::ptrdiff_t>(s.begin - 1),
                   x.begin() + static_cast<std::ptrdiff_t>(s.end - 1));
    }
    return out;
}

CmParts cm_split(std::span<const TokenId> generated, const SentinelLayout& layout) {
    CmParts parts;
    std::vector<bool> has_mask(kMaxSpans, false);
    std::size_t i = 0;
    for (; i < generated.size() && generated[i] != kEosId && !layout.is_fill(generated[i]); ++i) {
        const TokenId t = generated[i];
        if (layout.is_mask(t)) {
            const std::size_t k = layout.index_of(t);
            if (has_mask[k]) throw std::invalid_argument("cm_reintegrate: duplicate [MASK:" + std::to_string(k) + "]");
            has_mask[k] = true;
        }
        parts.context.push_back(t);
    }
    parts.fills.assign(kMaxSpans, {});
    std::optional<std::size_t> current;
    for (; i < generated.size() && generated[i] != kEosId; ++i) {
        const TokenId t = generated[i];
        if (layout.is_fill(t)) {
            const std::size_t k = layout.index_of(t);
            if (!has_mask[k]) {
                throw std::invalid_argument("cm_reintegrate: [FILL:" + std::to_string(k) + "] has no matching mask");
            }
            if (current && k <= *current) {
                throw std::invalid_argument("cm_reintegrate: [FILL:" + std::to_string(k) + "] out of order");
            }
            current = k;
        } else if (layout.is_mask(t)) {
            throw std::invalid_argument("cm_reintegrate: mask sentinel inside a fill segment");
        } else {
            parts.fills[*current].push_back(t);
        }
    }
    std::size_t used = 0;
    for (std::size_t k = 0; k < kMaxSpans; ++k) {
        if (has_mask[k]) used = k + 1;
    }
    parts.fills.resize(used);
    return parts;
}

std::vector<TokenId> cm_reintegrate(std::span<const TokenId> generated, const SentinelLayout& layout) {
    const CmParts parts = cm_split(generated, layout);
    std::vector<TokenId> out;
    for (TokenId t : parts.context) {
        if (layout.is_mask(t)) {
            const auto& f = parts.fills[layout.index_of(t)];
            out.insert(out.end(), f.begin(), f.end());
        } else {
            out.push_back(t);
        }
    }
    return out;
}

std::string render_extended(std::span<const TokenId> ids, const Vocab& vocab, const SentinelLayout& layout) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (vocab.mode() == TokenizerMode::Word && i > 0) out.push_back(' ');
        const TokenId t = ids[i];
        if (layout.is_mask(t)) {
            out += "[MASK:" + std::to_string(layout.index_of(t)) + "]";
        } else if (layout.is_fill(t)) {
            out += "[FILL:" + std::to_string(layout.index_of(t)) + "]";
        } else {
            out += decode(ids.subspan(i, 1), vocab);
        }
    }
    return out;
}

std::string to_string(TaskKind kind) { return kind == TaskKind::Span ? "span" : "sentence-drop"; }

TaskKind parse_task_kind(std::string_view name) {
    if (name == "span") return TaskKind::Span;
    if (name == "sentence-drop") return TaskKind::SentenceDrop;
    throw std::invalid_argument("unknown task kind '" + std::string(name) + "' (expected span or sentence-drop)");
}

InfillTask make_span_task(std::span<const TokenId> x, const SpanSpec& spans) {
    spans.validate(x.size());
    InfillTask task;
    task.original.assign(x.begin(), x.end());
    task.spans = spans;
    task.context = mask_positions(x, spans.masked_positions());
    for (const Span& s : spans.spans) {
        task.reference_fills.emplace_back(x.begin() + static_cast<std::ptrdiff_t>(s.begin - 1),
                                          x.begin() + static_cast<std::ptrdiff_t>(s.end - 1));
    }
    return task;
}

InfillTask drop_sentence(std::span<const std::vector<TokenId>> sentences, Rng& rng) {
    if (sentences.size() < 2) throw std::invalid_argument("drop_sentence: story needs at least 2 sentences");
    for (const auto& s : sentences) {
        if (s.empty()) throw std::invalid_argument("drop_sentence: empty sentence");
    }
    std::uniform_int_distribution<std::size_t> pick(0, sentences.size() - 1);
    const std::size_t k = pick(rng);
    std::vector<TokenId> x;
    std::size_t begin = 0;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        if (i == k) begin = x.size();
        x.insert(x.end(), sentences[i].begin(), sentences[i].end());
    }
    SpanSpec spans;
    spans.spans.push_back({begin + 1, begin + 1 + sentences[k].size()});
    InfillTask task = make_span_task(x, spans);
    task.kind = TaskKind::SentenceDrop;
    return task;
}

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (std::size_t i = 0; i < text.size(); ++i) {
        cur.push_back(text[i]);
        const char c = text[i];
        if (c != '.' && c != '!' && c != '?') continue;
        while (i + 1 < text.size() && std::isspace(static_cast<unsigned char>(text[i + 1]))) cur.push_back(text[++i]);
        out.push_back(std::move(cur));
        cur.clear();
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

RougeScore rouge(std::span<const std::string> candidate, std::span<const std::string> reference) {
    std::vector<std::string> c, r;
    for (const auto& t : candidate) c.push_back(lower(t));
    for (const auto& t : reference) r.push_back(lower(t));
    RougeScore s;
    s.rouge1 = score(ngram_overlap(c, r, 1));
    s.rouge2 = score(ngram_overlap(c, r, 2));
    // Too short for bigrams on both sides: all or nothing on the tokens themselves.
    if (!c.empty() && !r.empty() && c.size() < 2 && r.size() < 2) {
        const double v = c == r ? 1.0 : 0.0;
        s.rouge2 = {v, v, v};
    }
    s.rougeL = score(Overlap{lcs_length(c, r), c.size(), r.size()});
    return s;
}

std::string to_string(RougeMode mode) { return mode == RougeMode::Fills ? "fills" : "full-text"; }

RougeMode parse_rouge_mode(std::string_view name) {
    if (name == "fills") return RougeMode::Fills;
    if (name == "full-text") return RougeMode::FullText;
    throw std::invalid_argument("unknown rouge mode '" + std::string(name) + "' (expected fills or full-text)");
}

std::vector<InfillTask> make_benchmark_tasks(const BenchmarkCorpus& corpus, const BenchmarkOptions& options) {
    std::vector<InfillTask> tasks;
    const auto full = [&] { return options.limit && tasks.size() >= options.limit; };
    if (options.task == TaskKind::Span) {
        for (std::size_t i = 0; i < corpus.sequences.size() && !full(); ++i) {
            const auto& x = corpus.sequences[i];
            if (x.size() < 2) continue;
            Rng rng = make_rng(options.seed, i, 0);
            tasks.push_back(make_span_task(x, sample_spans(x.size(), rng)));
        }
    } else {
        for (std::size_t i = 0; i < corpus.stories.size() && !full(); ++i) {
            Rng rng = make_rng(options.seed, i, 0);
            tasks.push_back(drop_sentence(corpus.stories[i], rng));
        }
    }
    if (tasks.empty()) throw std::invalid_argument("benchmark: corpus yields no tasks");
    return tasks;
}

std::vector<std::vector<TokenId>> cm_generate(const LanguageModel& cm, const InfillTask& task,
                                              const SentinelLayout& layout, const SamplerConfig& sampler,
                                              std::size_t max_tokens_per_span, Rng& rng) {
    const std::size_t m = task.spans.spans.size();
    const std::vector<TokenId> full = cm_transform(task.original, task.spans, layout);
    // Prompt: begin marker, context with mask sentinels, then FILL:0.
    std::vector<TokenId> seq{kEosId};
    for (TokenId t : full) {
        if (layout.is_fill(t)) break;
        seq.push_back(t);
    }
    if (m == 0) return {};
    seq.push_back(layout.fill(0));
    std::size_t span = 0, in_span = 0;

    std::vector<TokenId> banned;
    const auto ban_all_but = [&](bool allow_next_fill) {
        banned.clear();
        for (TokenId t = 0; static_cast<std::size_t>(t) < layout.extended_size(); ++t) {
            const bool base = t >= kNumSpecial && static_cast<std::size_t>(t) < layout.base_size();
            const bool ok = base || t == kUnkId || t == kEosId || (allow_next_fill && t == layout.fill(span + 1));
            if (!ok) banned.push_back(t);
        }
    };
    while (seq.size() < cm.max_length()) {
        const bool has_next = span + 1 < m;
        if (in_span >= max_tokens_per_span) {
            if (!has_next) break;
            seq.push_back(layout.fill(++span));
            in_span = 0;
            continue;
        }
        ban_all_but(has_next);
        const Logits logits = cm.logits(seq);
        const TokenId t = sample_token(logits.row(seq.size() - 1), sampler, rng, banned);
        seq.push_back(t);
        if (t == kEosId) break;
        if (layout.is_fill(t)) {
            ++span;
            in_span = 0;
        } else {
            ++in_span;
        }
    }
    CmParts parts = cm_split(std::span<const TokenId>(seq).subspan(1), layout);
    parts.fills.resize(m);
    return parts.fills;
}

std::string BenchmarkReport::text() const {
    std::string out;
    for (const std::string& l : lines) out += l + "\n";
    return out;
}

BenchmarkReport run_benchmark(const LanguageModel& film, const LanguageModel& cm, const Vocab& vocab,
                              const BenchmarkCorpus& corpus, const BenchmarkOptions& options) {
    options.sampler.validate();
    const SentinelLayout layout(vocab.size());
    if (film.attention() != AttentionMode::Bidirectional) {
        throw std::invalid_argument("benchmark: fill-in model must be bidirectional");
    }
    if (cm.attention() != AttentionMode::Causal) throw std::invalid_argument("benchmark: cm model must be causal");
    if (film.vocab_size() != vocab.size()) {
        throw std::invalid_argument("benchmark: fill-in model vocabulary (" + std::to_string(film.vocab_size()) +
                                    ") does not match the corpus vocabulary (" + std::to_string(vocab.size()) + ")");
    }
    if (cm.vocab_size() != layout.extended_size()) {
        throw std::invalid_argument("benchmark: cm model vocabulary (" + std::to_string(cm.vocab_size()) +
                                    ") does not match the corpus vocabulary plus sentinels (" +
                                    std::to_string(layout.extended_size()) + ")");
    }
    const std::vector<InfillTask> tasks = make_benchmark_tasks(corpus, options);

    BenchmarkReport rep;
    rep.lines.push_back(json{{"type", "header"},
                             {"task", to_string(options.task)},
                             {"rouge_mode", to_string(options.rouge_mode)},
                             {"rouge_note", options.rouge_mode == RougeMode::Fills
                                                ? "generated fill tokens scored against reference fill tokens"
                                                : "completed text scored against the original text"},
                             {"film_policy", to_string(options.film_policy)},
                             {"greedy", options.sampler.greedy},
                             {"top_p", options.sampler.top_p},
                             {"temperature", options.sampler.temperature},
                             {"max_fill_tokens_per_span", options.max_fill_tokens_per_span},
                             {"seed", options.seed},
                             {"examples", tasks.size()}}
                            .dump());

    RougeScore film_sum, cm_sum;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const InfillTask& task = tasks[i];
        Rng film_rng = make_rng(options.seed, i, 1);
        const FillResult filled = fill_in(film, task.context.ids, task.context.positions, options.film_policy,
                                          options.sampler, film_rng);
        std::vector<std::vector<TokenId>> film_fills;
        for (const Span& s : task.spans.spans) {
            film_fills.emplace_back(filled.ids.begin() + static_cast<std::ptrdiff_t>(s.begin - 1),
                                    filled.ids.begin() + static_cast<std::ptrdiff_t>(s.end - 1));
        }
        Rng cm_rng = make_rng(options.seed, i, 2);
        const auto cm_fills =
            cm_generate(cm, task, layout, options.sampler, options.max_fill_tokens_per_span, cm_rng);

        const auto scored = [&](const std::vector<std::vector<TokenId>>& fills) {
            if (options.rouge_mode == RougeMode::Fills) {
                return rouge(token_strings(concat(fills), vocab), token_strings(concat(task.reference_fills), vocab));
            }
            return rouge(token_strings(splice(task, fills), vocab), token_strings(task.original, vocab));
        };
        const RougeScore fr = scored(film_fills), cr = scored(cm_fills);
        accumulate(film_sum, fr);
        accumulate(cm_sum, cr);

        json spans = json::array();
        for (const Span& s : task.spans.spans) spans.push_back({s.begin, s.end});
        const auto texts = [&](const std::vector<std::vector<TokenId>>& fills) {
            json a = json::array();
            for (const auto& f : fills) a.push_back(decode(f, vocab));
            return a;
        };
        rep.lines.push_back(json{{"type", "example"},
                                 {"id", i},
                                 {"spans", spans},
                                 {"context", decode(task.context.ids, vocab)},
                                 {"reference", texts(task.reference_fills)},
                                 {"film", {{"fills", texts(film_fills)}, {"scores", to_json(fr)}}},
                                 {"cm", {{"fills", texts(cm_fills)}, {"scores", to_json(cr)}}}}
                                .dump());
    }
    const double k = static_cast<double>(tasks.size());
    rep.film_mean = divide(film_sum, k);
    rep.cm_mean = divide(cm_sum, k);
    rep.lines.push_back(json{{"type", "aggregate"},
                             {"examples", tasks.size()},
                             {"film", to_json(rep.film_mean)},
                             {"cm", to_json(rep.cm_mean)}}
                            .dump());
    return rep;
}

}  // namespace film
