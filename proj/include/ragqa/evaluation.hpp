#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ragqa/corpus.hpp"
#include "ragqa/dataset.hpp"
#include "ragqa/error.hpp"
#include "ragqa/generation.hpp"
#include "ragqa/io.hpp"
#include "ragqa/providers.hpp"
#include "ragqa/retrieval.hpp"

namespace ragqa {

enum class QuestionVariant { Original, Paraphrased };
const char* to_string(QuestionVariant v);
QuestionVariant question_variant_from_string(std::string_view s);

// ---------------------------------------------------------------------------
// Retrieval

struct TopKResult {
    std::string question_id;
    std::string gold_chunk_id;
    std::optional<std::size_t> rank_of_gold;  // 1-based
    std::size_t depth = 0;

    bool hit(std::size_t k) const { return rank_of_gold && *rank_of_gold <= k; }
};

json to_json(const TopKResult& r);
TopKResult topk_result_from_json(const json& j);

TopKResult score_retrieval(std::string_view question_id, std::string_view gold_chunk_id, const RetrievalResult& r);

/// Fraction of results whose gold is within the top k, for each k. Throws
/// EvaluationError when a result was retrieved with depth below max(ks).
std::map<std::size_t, double> topk_accuracy(std::span<const TopKResult> results, std::span<const std::size_t> ks);

struct RetrievalReport {
    json config;  // retriever, chunk_size, overlap, variant, max_k, corpus_fingerprint, ...
    std::vector<TopKResult> items;
    std::vector<json> failures;
    std::map<std::size_t, double> accuracy;  // k = 1..max_k
    std::size_t skipped = 0;                 // no paraphrase, or gold not mappable
    std::string created_at;
};

json to_json(const RetrievalReport& r);
RetrievalReport retrieval_report_from_json(const json& j);

/// Runs every question of the dataset through the retriever with depth max_k.
/// `chunks` may use a different chunk size than the dataset was built on; the
/// gold labels are then remapped through `dataset_chunks`.
RetrievalReport evaluate_retrieval(const QADataset& ds, const ChunkSet& dataset_chunks, const ChunkSet& chunks,
                                   const Retriever& retriever, QuestionVariant variant, std::size_t max_k = 100,
                                   std::size_t max_parallel = 4);

/// Rows of (retriever, chunk_size, variant, top1, top5).
std::string table2_csv(std::span<const RetrievalReport> reports);
/// Rows of (retriever, chunk_size, variant, k, accuracy), one per k.
std::string topk_curve_csv(std::span<const RetrievalReport> reports);

// ---------------------------------------------------------------------------
// Generation metrics

/// Token-overlap F1 on a 0-100 scale, multiset intersection.
double token_f1(std::string_view predicted, std::string_view reference);

/// max(0, cosine) * 100 of the two embeddings. An empty prediction scores 0.
double embedding_cosine(std::string_view predicted, std::string_view reference, const Embedder& embedder);

enum class Verdict { TotallyCorrect, MostlyCorrect, Incorrect };
const char* to_string(Verdict v);
double judge_points(Verdict v);

/// Leading verdict label of a judge reply, English or Portuguese.
std::optional<Verdict> parse_verdict(std::string_view reply);

std::pair<std::string, std::string> judge_prompt(std::string_view question, std::string_view candidate,
                                                 std::string_view gold_answer, std::string_view gold_span);

struct JudgeResult {
    Verdict verdict = Verdict::Incorrect;
    bool parse_failed = false;
    int calls = 0;
    std::string raw;
};

/// An empty candidate is Incorrect without a call. An unparseable reply is
/// retried once, then recorded as Incorrect with parse_failed set.
JudgeResult llm_judge(std::string_view question, std::string_view candidate, std::string_view gold_answer,
                      std::string_view gold_span, const LlmProvider& judge);

// ---------------------------------------------------------------------------
// Correlation

/// Pearson r between every pair of columns. Entries involving a constant
/// column are empty.
struct CorrelationMatrix {
    std::vector<std::string> names;
    std::size_t rows = 0;
    std::vector<std::vector<std::optional<double>>> r;
    std::vector<std::string> constant_columns;
};

/// Throws EvaluationError with fewer than 3 rows or ragged columns.
CorrelationMatrix metric_correlation(std::vector<std::string> names, const std::vector<std::vector<double>>& columns);

json to_json(const CorrelationMatrix& m);
std::string correlation_csv(const CorrelationMatrix& m);

/// question_id -> score in {0, 50, 100}. Throws EvaluationError otherwise.
std::map<std::string, double> load_human_scores(const std::filesystem::path& csv_path);

// ---------------------------------------------------------------------------
// Generation experiment

struct GenItemRecord {
    std::string question_id;
    std::string question;
    std::string gold_answer;
    std::string gold_chunk_id;
    std::string answer;
    std::vector<std::string> chunk_ids;
    bool gold_in_context = false;
    double f1 = 0.0;
    double cosine = 0.0;
    Verdict judge = Verdict::Incorrect;
    double judge_points = 0.0;
    bool judge_parse_failed = false;
    std::string prompt_sha256;
};

json to_json(const GenItemRecord& r);
GenItemRecord gen_item_from_json(const json& j);

struct MetricMeans {
    std::size_t n = 0;
    std::optional<double> f1;
    std::optional<double> cosine;
    std::optional<double> judge;

    bool operator==(const MetricMeans&) const = default;
};

struct GenAggregates {
    MetricMeans all;
    MetricMeans gold_in_context;

    bool operator==(const GenAggregates&) const = default;
};

/// Means over items in the order given; empty subsets give n = 0 and no means.
GenAggregates recompute_aggregates(std::span<const GenItemRecord> items);

struct GenReport {
    json config;
    std::vector<GenItemRecord> items;  // ordered by question id
    std::vector<json> failures;
    GenAggregates aggregates;
    std::size_t skipped = 0;
    std::string created_at;

    std::size_t k() const { return config.value("k", std::size_t{0}); }
};

json to_json(const GenReport& r);
GenReport gen_report_from_json(const json& j);

struct GenerationSetup {
    const ChunkSet* chunks = nullptr;
    const Retriever* retriever = nullptr;
    const LlmProvider* generator = nullptr;
    const Embedder* cosine_embedder = nullptr;
    const LlmProvider* judge = nullptr;
    PromptTemplate prompt = PromptTemplate::portuguese();
    QuestionVariant variant = QuestionVariant::Original;
    std::size_t max_parallel = 4;
    /// Minimum spacing between judge calls; zero disables the limit.
    std::chrono::milliseconds judge_interval{0};
    /// Label matched against the published table (e.g. "GPT-3.5").
    std::string reference_label;
};

/// Answers and scores every item at depth k. Provider failures are recorded
/// in `failures` and the item is left out of the aggregates.
GenReport evaluate_generation(const QADataset& ds, const GenerationSetup& setup, std::size_t k);

/// One report per k in ks, plus k = 0 when with_ablation is set. Throws
/// FingerprintMismatch when the dataset was not built on setup.chunks.
std::vector<GenReport> run_experiment(const QADataset& ds, const GenerationSetup& setup, std::span<const std::size_t> ks,
                                      bool with_ablation);

/// Rows of (block, model, k, n, f1, cosine, llm) with the blocks all,
/// gold_in_context and no_context; published values are appended when the
/// report's reference_label matches a row of the published results.
std::string table3_csv(std::span<const GenReport> reports);

/// Persists report JSON and, when there were failures, a failures JSONL next to it.
void save_report(const json& report, const std::vector<json>& failures, const std::filesystem::path& path);

/// F1, cosine and LLM-judge columns of a report, plus a human column when
/// scores are given (items without a human score are then left out).
CorrelationMatrix correlate_report(const GenReport& report, const std::map<std::string, double>* human = nullptr);

// ---------------------------------------------------------------------------
// Published values, for side-by-side display only.

struct PublishedGenRow {
    const char* model;
    const char* block;  // all | gold_in_context | no_context
    std::size_t k;
    double f1, cosine, llm;
};

struct PublishedRetrievalRow {
    const char* retriever;
    std::size_t chunk_size;
    const char* variant;
    double top1, top5;
};

std::span<const PublishedGenRow> published_generation();
std::span<const PublishedRetrievalRow> published_retrieval();

}  // namespace ragqa
