#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ragqa/corpus.hpp"
#include "ragqa/retrieval.hpp"

namespace ragqa {

/// Okapi BM25 constants.
struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

/// Inverted index over chunk texts tokenized with the shared tokenizer.
/// Documents are the chunks, in the order they were indexed.
class InvertedIndex {
public:
    struct Posting {
        std::uint32_t doc = 0;  // position in chunk_ids()
        std::uint32_t tf = 0;
    };

    InvertedIndex(std::span<const Chunk> chunks, Bm25Params params);

    std::size_t doc_count() const { return ids_.size(); }
    double avg_doc_length() const { return avg_length_; }
    const Bm25Params& params() const { return params_; }
    const std::vector<std::string>& chunk_ids() const { return ids_; }

    std::optional<std::size_t> doc_index(std::string_view chunk_id) const;
    std::size_t doc_length(std::size_t doc) const { return lengths_[doc]; }
    /// Postings sorted by document position; empty for unknown tokens.
    std::span<const Posting> postings(std::string_view token) const;
    std::size_t doc_freq(std::string_view token) const { return postings(token).size(); }
    std::uint32_t term_frequency(std::string_view token, std::size_t doc) const;
    std::size_t vocabulary_size() const { return postings_.size(); }

    /// ln(1 + (N - df + 0.5) / (df + 0.5)); never negative.
    double idf(std::size_t df) const;
    /// Contribution of one query term occurring tf times in `doc`.
    double term_score(std::size_t df, std::uint32_t tf, std::size_t doc) const;

private:
    Bm25Params params_;
    std::vector<std::string> ids_;
    std::vector<std::uint32_t> lengths_;
    std::unordered_map<std::string, std::size_t> by_id_;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
    double avg_length_ = 0.0;
};

/// Throws RetrievalError on an empty chunk list.
InvertedIndex build_bm25(std::span<const Chunk> chunks, Bm25Params params = {});

/// Sum over the query tokens (repeats count again) of idf * tf * (k1 + 1) /
/// (tf + k1 * (1 - b + b * len / avg_len)). Throws for unknown chunk ids.
double bm25_score(const InvertedIndex& index, std::span<const std::string> query, std::string_view chunk_id);

/// Top-k by BM25 over tokenize(query); zero-score chunks are excluded.
RetrievalResult search_bm25(const InvertedIndex& index, std::string_view query, std::size_t k);

class Bm25Retriever final : public Retriever {
public:
    explicit Bm25Retriever(const InvertedIndex& index) : index_(index) {}
    RetrievalResult search(std::string_view query, std::size_t k) const override {
        return search_bm25(index_, query, k);
    }
    std::string id() const override { return "bm25"; }

private:
    const InvertedIndex& index_;
};

}  // namespace ragqa
