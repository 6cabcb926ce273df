#include "ragqa/bm25.hpp"

#include <cmath>
#include <numeric>

#include "ragqa/error.hpp"
#include "ragqa/text.hpp"

namespace ragqa {

InvertedIndex::InvertedIndex(std::span<const Chunk> chunks, Bm25Params params) : params_(params) {
    if (chunks.empty()) throw RetrievalError("cannot build a BM25 index over an empty chunk list");
    ids_.reserve(chunks.size());
    lengths_.reserve(chunks.size());
    std::uint64_t total = 0;
    for (std::size_t d = 0; d < chunks.size(); ++d) {
        const auto& chunk = chunks[d];
        if (!by_id_.emplace(chunk.id, d).second) throw RetrievalError("duplicate chunk id \"" + chunk.id + "\"");
        ids_.push_back(chunk.id);

        std::unordered_map<std::string, std::uint32_t> tf;
        const auto tokens = tokenize(chunk.text);
        for (const auto& t : tokens) ++tf[t];
        lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
        total += tokens.size();
        for (auto& [token, count] : tf) postings_[token].push_back({static_cast<std::uint32_t>(d), count});
    }
    avg_length_ = static_cast<double>(total) / static_cast<double>(chunks.size());
}

std::optional<std::size_t> InvertedIndex::doc_index(std::string_view chunk_id) const {
    const auto it = by_id_.find(std::string(chunk_id));
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

std::span<const InvertedIndex::Posting> InvertedIndex::postings(std::string_view token) const {
    const auto it = postings_.find(std::string(token));
    if (it == postings_.end()) return {};
    return it->second;
}

std::uint32_t InvertedIndex::term_frequency(std::string_view token, std::size_t doc) const {
    const auto list = postings(token);
    const auto it = std::lower_bound(list.begin(), list.end(), doc,
                                     [](const Posting& p, std::size_t d) { return p.doc < d; });
    return it != list.end() && it->doc == doc ? it->tf : 0;
}

double InvertedIndex::idf(std::size_t df) const {
    const double n = static_cast<double>(doc_count());
    const double f = static_cast<double>(df);
    return std::log(1.0 + (n - f + 0.5) / (f + 0.5));
}

double InvertedIndex::term_score(std::size_t df, std::uint32_t tf, std::size_t doc) const {
    if (tf == 0) return 0.0;
    const double t = static_cast<double>(tf);
    // All-empty corpora have avg length 0; every document then has length 0 too.
    const double rel_len = avg_length_ > 0.0 ? static_cast<double>(lengths_[doc]) / avg_length_ : 0.0;
    const double norm = params_.k1 * (1.0 - params_.b + params_.b * rel_len);
    return idf(df) * t * (params_.k1 + 1.0) / (t + norm);
}

InvertedIndex build_bm25(std::span<const Chunk> chunks, Bm25Params params) { return InvertedIndex(chunks, params); }

double bm25_score(const InvertedIndex& index, std::span<const std::string> query, std::string_view chunk_id) {
    const auto doc = index.doc_index(chunk_id);
    if (!doc) throw RetrievalError("bm25_score: unknown chunk id \"" + std::string(chunk_id) + "\"");
    double score = 0.0;
    for (const auto& term : query) {
        score += index.term_score(index.doc_freq(term), index.term_frequency(term, *doc), *doc);
    }
    return score;
}

RetrievalResult search_bm25(const InvertedIndex& index, std::string_view query, std::size_t k) {
    if (k < 1) throw RetrievalError("search_bm25: k must be >= 1");
    std::vector<double> scores(index.doc_count(), 0.0);
    std::vector<std::uint32_t> touched;
    std::vector<bool> seen(index.doc_count(), false);
    // Accumulate term by term in query order so every document's sum matches
    // bm25_score() bit for bit.
    for (const auto& term : tokenize(query)) {
        const auto list = index.postings(term);
        for (const auto& p : list) {
            scores[p.doc] += index.term_score(list.size(), p.tf, p.doc);
            if (!seen[p.doc]) {
                seen[p.doc] = true;
                touched.push_back(p.doc);
            }
        }
    }
    std::vector<ScoredChunk> scored;
    scored.reserve(touched.size());
    for (auto d : touched) {
        if (scores[d] > 0.0) scored.push_back({index.chunk_ids()[d], scores[d]});
    }
    rank_top_k(scored, k);
    return RetrievalResult{std::move(scored), "bm25", k};
}

}  // namespace ragqa
