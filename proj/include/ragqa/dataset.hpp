#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ragqa/corpus.hpp"
#include "ragqa/error.hpp"
#include "ragqa/io.hpp"
#include "ragqa/providers.hpp"

namespace ragqa {

struct QAItem {
    std::string id;
    std::string question;
    std::optional<std::string> paraphrase;
    std::string answer;
    std::string gold_chunk_id;
    std::string span;  // verbatim substring of the gold chunk text
    std::string generator_model;
    /// Set when paraphrasing failed or returned the original question.
    bool paraphrase_flagged = false;
};

json to_json(const QAItem& item);
QAItem qa_item_from_json(const json& j);

struct DatasetCounts {
    std::size_t sampled = 0;
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::map<std::string, std::size_t> reject_reasons;
};

struct QADataset {
    std::vector<QAItem> items;
    std::string corpus_fingerprint;
    ChunkingConfig chunking;
    std::string generator_model;
    std::uint64_t seed = 0;
    DatasetCounts counts;
    std::string paraphrase_model;  // empty until paraphrased

    const QAItem* find(std::string_view id) const;
};

/// Sidecar manifest: fingerprint, chunking, models, seed and counts.
json manifest_json(const QADataset& ds);

/// Chunk that produced no item, with the reason.
struct Reject {
    std::string chunk_id;
    std::string reason;  // too_short | parse_error | span_not_found | provider_error
    std::string detail;
    std::string raw_response;
};

json to_json(const Reject& r);

/// Raised by generate_qa when a chunk yields no usable item.
class QaRejected : public DatasetError {
public:
    QaRejected(std::string reason, const std::string& detail, std::string raw = {})
        : DatasetError(reason + ": " + detail), reason_(std::move(reason)), detail_(detail), raw_(std::move(raw)) {}
    const std::string& reason() const noexcept { return reason_; }
    const std::string& detail() const noexcept { return detail_; }
    const std::string& raw_response() const noexcept { return raw_; }

private:
    std::string reason_;
    std::string detail_;
    std::string raw_;
};

/// Uniform sample of n chunks without replacement, in draw order.
/// Throws DatasetError when n exceeds the number of chunks.
std::vector<const Chunk*> sample_chunks(std::span<const Chunk> chunks, std::size_t n, std::uint64_t seed);

struct ThreeElements {
    std::string question;
    std::string answer;
    std::string span;
};

/// Splits a labelled response (PERGUNTA/QUESTION, RESPOSTA/ANSWER,
/// TRECHO/SPAN) into its fields. Labels may use any casing and carry markdown
/// emphasis, heading marks or list bullets; a value may start on the label's
/// line or on the next one and ends at the next label or blank line.
/// Surrounding quotes are removed. Throws DatasetError naming the field that
/// is missing, empty or repeated.
ThreeElements parse_three_elements(std::string_view raw);

inline constexpr std::size_t kMinWordsForGeneration = 50;

/// System and user prompt asking for one self-contained question.
std::pair<std::string, std::string> qa_generation_prompt(const Chunk& chunk);

/// One question for the chunk. A response that cannot be parsed or whose span
/// is not in the chunk is retried once. Throws QaRejected.
QAItem generate_qa(const Chunk& chunk, const LlmProvider& llm);

struct GenerationRun {
    QADataset dataset;
    std::vector<Reject> rejects;
};

/// Samples n chunks and generates one item per chunk with up to max_parallel
/// concurrent calls. Items keep sample order; every sampled chunk ends up
/// either as an item or as a reject.
GenerationRun generate_dataset(const ChunkSet& chunks, const LlmProvider& llm, std::size_t n, std::uint64_t seed,
                               std::size_t max_parallel);

std::pair<std::string, std::string> paraphrase_prompt(std::string_view question);

/// Fills item.paraphrase. A reply with the same tokens as the question is
/// retried once, then the item is flagged and left without a paraphrase.
QAItem paraphrase(QAItem item, const LlmProvider& llm);

/// Paraphrases every item; provider failures flag the item instead of aborting.
QADataset paraphrase_dataset(QADataset ds, const LlmProvider& llm, std::size_t max_parallel);

struct Violation {
    std::string item_id;
    std::string kind;  // ambiguous_span | dangling_gold | span_not_in_gold | duplicate_question | duplicate_id
    std::string detail;

    bool operator==(const Violation&) const = default;
};

json to_json(const Violation& v);

/// Throws FingerprintMismatch when the dataset was built on other chunks.
std::vector<Violation> validate_dataset(const QADataset& ds, const ChunkSet& chunks);

/// Writes items to `path` (JSONL) and the manifest next to it.
void save_dataset(const QADataset& ds, const std::filesystem::path& path);
QADataset load_dataset(const std::filesystem::path& path);
std::filesystem::path manifest_path(const std::filesystem::path& dataset_path);

void save_rejects(std::span<const Reject> rejects, const std::filesystem::path& path);

/// Worksheet for human review: id, question, paraphrase, answer, span,
/// gold chunk id, chunk text.
void write_review_csv(const QADataset& ds, const ChunkSet& chunks, const std::filesystem::path& path);

/// Gold chunk of every item in a different chunking of the same documents:
/// the target chunk whose text covers the span's position in the document,
/// preferring the one whose core holds the span start. Empty when no target
/// chunk holds the whole span.
struct GoldMapping {
    std::vector<std::optional<std::string>> gold;  // parallel to ds.items
    std::size_t unmapped = 0;
};

GoldMapping remap_gold(const QADataset& ds, const ChunkSet& source, const ChunkSet& target);

}  // namespace ragqa
