#include "ragqa/retrieval.hpp"

#include <algorithm>
#include <random>

#include "ragqa/error.hpp"
#include "ragqa/text.hpp"

namespace ragqa {

std::size_t RetrievalResult::rank_of(std::string_view chunk_id) const {
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        if (ranked[i].chunk_id == chunk_id) return i + 1;
    }
    return 0;
}

json to_json(const RetrievalResult& r) {
    json ranked = json::array();
    for (const auto& s : r.ranked) ranked.push_back({{"chunk_id", s.chunk_id}, {"score", s.score}});
    return {{"retriever", r.retriever_id}, {"k", r.depth}, {"ranked", ranked}};
}

void rank_top_k(std::vector<ScoredChunk>& scored, std::size_t k) {
    auto better = [](const ScoredChunk& a, const ScoredChunk& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.chunk_id < b.chunk_id;
    };
    if (k < scored.size()) {
        std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(), better);
        scored.resize(k);
    } else {
        std::sort(scored.begin(), scored.end(), better);
    }
}

RetrievalResult search_random(std::span<const std::string> chunk_ids, std::size_t k, std::uint64_t seed) {
    if (k > chunk_ids.size()) {
        throw RetrievalError("random baseline: k (" + std::to_string(k) + ") exceeds corpus size (" +
                             std::to_string(chunk_ids.size()) + ")");
    }
    std::vector<std::size_t> order(chunk_ids.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(seed);
    RetrievalResult result;
    result.retriever_id = "random";
    result.depth = k;
    result.ranked.reserve(k);
    // Partial Fisher-Yates: the first k positions become the sample.
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + uniform_below(rng, order.size() - i);
        std::swap(order[i], order[j]);
        result.ranked.push_back({chunk_ids[order[i]], 0.0});
    }
    return result;
}

RandomRetriever::RandomRetriever(std::vector<std::string> chunk_ids, std::uint64_t seed)
    : ids_(std::move(chunk_ids)), seed_(seed) {}

RetrievalResult RandomRetriever::search(std::string_view query, std::size_t k) const {
    if (k == 0) throw RetrievalError("k must be >= 1");
    auto result = search_random(ids_, std::min(k, ids_.size()), stable_hash(query, seed_));
    result.depth = k;
    return result;
}

}  // namespace ragqa
