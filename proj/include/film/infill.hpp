#pragma once

// Infilling benchmark: task construction (random spans, dropped sentences),
// the causal-masking rearrangement, ROUGE scoring and the benchmark runner.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "film/common.hpp"
#include "film/corpus.hpp"
#include "film/decode.hpp"
#include "film/model.hpp"
#include "film/noise.hpp"

namespace film {

inline constexpr std::size_t kMaxSpans = 5;

/// Half-open interval [begin, end) over 1-indexed token positions.
struct Span {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t length() const { return end - begin; }
    bool operator==(const Span&) const = default;
};

struct SpanSpec {
    std::vector<Span> spans;

    /// Throws unless spans are sorted, disjoint and non-empty with
    /// 1 <= begin < end <= n + 1 (a span may run to the end of the sequence).
    void validate(std::size_t n) const;
    /// 0-indexed masked positions, increasing.
    std::vector<std::size_t> masked_positions() const;
    bool operator==(const SpanSpec&) const = default;
};

/// Spans from sorted distinct endpoints a_1 < ... < a_2m.
SpanSpec spans_from_endpoints(std::span<const std::size_t> endpoints, std::size_t n);

/// m uniform on 1..min(5, n/2); 2m distinct endpoints drawn from 1..n.
SpanSpec sample_spans(std::size_t n, Rng& rng);

/// Sentinel ids appended after a base vocabulary: MASK:0..4 then FILL:0..4.
class SentinelLayout {
public:
    explicit SentinelLayout(std::size_t base_vocab_size) : base_(base_vocab_size) {}

    std::size_t base_size() const { return base_; }
    std::size_t extended_size() const { return base_ + 2 * kMaxSpans; }
    TokenId mask(std::size_t i) const;
    TokenId fill(std::size_t i) const;
    bool is_mask(TokenId id) const;
    bool is_fill(TokenId id) const;
    /// Span index of a sentinel id.
    std::size_t index_of(TokenId id) const;

private:
    std::size_t base_;
};

/// Replaces span i by MASK:i and appends FILL:i followed by span i's tokens.
std::vector<TokenId> cm_transform(std::span<const TokenId> x, const SpanSpec& spans, const SentinelLayout& layout);

/// A rearranged sequence taken apart: the context (with MASK sentinels) and the
/// tokens following each FILL:i. Reading stops at EOS; absent segments are empty.
struct CmParts {
    std::vector<TokenId> context;
    std::vector<std::vector<TokenId>> fills;  // indexed by span
};

/// Throws on a FILL without a matching MASK, FILL markers out of order, or a
/// MASK sentinel inside a fill segment.
CmParts cm_split(std::span<const TokenId> generated, const SentinelLayout& layout);

/// Inverse of cm_transform over generated output. Reading stops at EOS; spans
/// whose FILL segment is missing come back empty.
std::vector<TokenId> cm_reintegrate(std::span<const TokenId> generated, const SentinelLayout& layout);

/// Renders ids over the extended vocabulary, sentinels as [MASK:i] / [FILL:i].
std::string render_extended(std::span<const TokenId> ids, const Vocab& vocab, const SentinelLayout& layout);

enum class TaskKind { Span, SentenceDrop };

std::string to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view name);

struct InfillTask {
    std::vector<TokenId> original;
    MaskedSequence context;
    SpanSpec spans;
    std::vector<std::vector<TokenId>> reference_fills;  // one per span
    TaskKind kind = TaskKind::Span;
};

InfillTask make_span_task(std::span<const TokenId> x, const SpanSpec& spans);

/// Removes one uniformly chosen sentence; its tokens become the masked region.
InfillTask drop_sentence(std::span<const std::vector<TokenId>> sentences, Rng& rng);

/// Splits text after '.', '!' or '?'; trailing whitespace stays with its sentence.
std::vector<std::string> split_sentences(std::string_view text);

struct PrecisionRecall {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
};

struct RougeScore {
    PrecisionRecall rouge1;
    PrecisionRecall rouge2;
    PrecisionRecall rougeL;
};

/// ROUGE-1/2 from clipped n-gram overlap, ROUGE-L from the longest common
/// subsequence. Tokens are compared lowercased. When neither side has a bigram,
/// ROUGE-2 is 1 for identical non-empty texts and 0 otherwise.
RougeScore rouge(std::span<const std::string> candidate, std::span<const std::string> reference);

enum class RougeMode { Fills, FullText };

std::string to_string(RougeMode mode);
RougeMode parse_rouge_mode(std::string_view name);

struct BenchmarkOptions {
    TaskKind task = TaskKind::Span;
    SamplerConfig sampler = SamplerConfig::nucleus(0.95, 0.8);
    OrderPolicy film_policy = OrderPolicy::LeftToRight;
    RougeMode rouge_mode = RougeMode::Fills;
    std::size_t max_fill_tokens_per_span = 64;
    std::size_t limit = 0;  // 0: every example
    std::uint64_t seed = 0;
};

/// Benchmark input: token sequences (span task) or per-sentence token lists
/// (sentence-drop task, one entry per story).
struct BenchmarkCorpus {
    std::vector<std::vector<TokenId>> sequences;
    std::vector<std::vector<std::vector<TokenId>>> stories;
};

/// Builds the tasks the benchmark will run; deterministic in (corpus, options).
std::vector<InfillTask> make_benchmark_tasks(const BenchmarkCorpus& corpus, const BenchmarkOptions& options);

/// Fill tokens the causal-masking model generates for a task.
std::vector<std::vector<TokenId>> cm_generate(const LanguageModel& cm, const InfillTask& task,
                                              const SentinelLayout& layout, const SamplerConfig& sampler,
                                              std::size_t max_tokens_per_span, Rng& rng);

struct BenchmarkReport {
    std::vector<std::string> lines;  // JSON objects: header, one per example, aggregate
    RougeScore film_mean;
    RougeScore cm_mean;

    std::string text() const;
};

BenchmarkReport run_benchmark(const LanguageModel& film, const LanguageModel& cm, const Vocab& vocab,
                              const BenchmarkCorpus& corpus, const BenchmarkOptions& options);

}  // namespace film
