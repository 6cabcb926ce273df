#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "ragqa/corpus.hpp"
#include "ragqa/providers.hpp"
#include "ragqa/retrieval.hpp"

namespace ragqa {

enum class Similarity { Dot, Cosine };

const char* to_string(Similarity s);
Similarity similarity_from_string(std::string_view s);

/// Flat (exhaustive) vector index. Stored vectors are kept exactly as the
/// embedder returned them; cosine mode normalizes at query time.
class VectorIndex {
public:
    VectorIndex(std::size_t dims, Similarity similarity, std::string model_id, std::string corpus_fingerprint);

    /// Throws RetrievalError on a dimension mismatch, a duplicate id or a
    /// non-finite value.
    void add(std::string chunk_id, Embedding vector);

    std::size_t dims() const { return dims_; }
    Similarity similarity() const { return similarity_; }
    const std::string& model_id() const { return model_id_; }
    const std::string& corpus_fingerprint() const { return fingerprint_; }
    std::size_t size() const { return ids_.size(); }
    const std::vector<std::string>& chunk_ids() const { return ids_; }
    const Embedding& vector(std::size_t i) const { return vectors_[i]; }

    /// Score of every entry against an already embedded query.
    std::vector<ScoredChunk> score_all(std::span<const double> query) const;

    /// JSONL: a header line {format, version, dims, similarity, model,
    /// corpus_fingerprint, count} followed by one {id, vector} line per entry.
    void save(const std::filesystem::path& path) const;
    /// When expected_fingerprint is given, refuses an index built over a
    /// different chunked corpus.
    static VectorIndex load(const std::filesystem::path& path,
                            std::optional<std::string_view> expected_fingerprint = std::nullopt);

private:
    std::size_t dims_;
    Similarity similarity_;
    std::string model_id_;
    std::string fingerprint_;
    std::vector<std::string> ids_;
    std::vector<Embedding> vectors_;
    std::vector<double> norms_;
    std::unordered_set<std::string> id_set_;
};

/// Embeds every chunk's full text (core plus overlaps) in provider batches.
/// Provider failures surface as ProviderError naming the failed chunk ids.
VectorIndex build_vector_index(const ChunkSet& chunks, const Embedder& embedder, Similarity similarity);

/// Exhaustive scan; ties broken by ascending chunk id. The embedder must be
/// the model the index was built with.
RetrievalResult search_vector(const VectorIndex& index, std::string_view query, const Embedder& embedder,
                              std::size_t k);

class DenseRetriever final : public Retriever {
public:
    DenseRetriever(const VectorIndex& index, const Embedder& embedder) : index_(index), embedder_(embedder) {}
    RetrievalResult search(std::string_view query, std::size_t k) const override {
        return search_vector(index_, query, embedder_, k);
    }
    std::string id() const override { return "dense:" + index_.model_id(); }

private:
    const VectorIndex& index_;
    const Embedder& embedder_;
};

}  // namespace ragqa
