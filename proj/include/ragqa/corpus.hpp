#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ragqa/io.hpp"

namespace ragqa {

struct Document {
    std::string id;
    std::string title;
    std::string date;  // ISO-8601
    std::optional<std::string> source_url;
    std::string body;
};

/// Character counts are Unicode code points. The overlap extends the core on
/// both sides, so a chunk's text holds up to chunk_size + 2 * overlap characters.
struct ChunkingConfig {
    std::size_t chunk_size = 2000;
    std::size_t overlap = 200;

    /// Default overlap is chunk_size / 10.
    static ChunkingConfig with_size(std::size_t chunk_size);
    /// Throws CorpusError unless chunk_size > 0 and overlap < chunk_size.
    void validate() const;
};

struct Chunk {
    std::string id;  // "<doc_id>#<seq>"
    std::string doc_id;
    std::size_t seq = 0;
    // Code point offsets into the parent body. [core_start, core_end) is the
    // non-overlapping core; [text_start, text_end) is what `text` holds.
    std::size_t core_start = 0;
    std::size_t core_end = 0;
    std::size_t text_start = 0;
    std::size_t text_end = 0;
    std::string text;
    std::string title;
    std::string date;

    std::size_t overlap_pre() const { return core_start - text_start; }
    std::size_t overlap_post() const { return text_end - core_end; }
};

struct CorpusStats {
    std::size_t chunk_count = 0;
    std::size_t min_words = 0;
    std::size_t max_words = 0;
    double avg_words = 0.0;
};

/// Reads a corpus file. The only supported format id is "jsonl".
std::vector<Document> ingest(const std::filesystem::path& path, std::string_view format = "jsonl");

std::vector<Chunk> chunk_document(const Document& doc, const ChunkingConfig& cfg);

CorpusStats corpus_stats(std::span<const Chunk> chunks);

/// Returns the core of a chunk as a byte substring of its text.
std::string_view chunk_core(const Chunk& chunk);

json document_to_json(const Document& doc);
Document document_from_json(const json& j);

json chunk_to_json(const Chunk& chunk);
json stats_to_json(const CorpusStats& stats);

/// Immutable chunked corpus with id lookup and a content fingerprint that
/// binds datasets, indices and reports to it.
class ChunkSet {
public:
    ChunkSet() = default;
    ChunkSet(std::vector<Chunk> chunks, ChunkingConfig cfg);

    static ChunkSet from_documents(std::span<const Document> docs, const ChunkingConfig& cfg);

    const std::vector<Chunk>& chunks() const { return chunks_; }
    const ChunkingConfig& config() const { return config_; }
    const std::string& fingerprint() const { return fingerprint_; }
    std::size_t size() const { return chunks_.size(); }
    bool empty() const { return chunks_.empty(); }

    const Chunk* find(std::string_view id) const;
    /// Throws CorpusError for unknown ids.
    const Chunk& at(std::string_view id) const;
    std::vector<std::string> ids() const;

private:
    std::vector<Chunk> chunks_;
    ChunkingConfig config_;
    std::unordered_map<std::string, std::size_t> by_id_;
    std::string fingerprint_;
};

}  // namespace ragqa
