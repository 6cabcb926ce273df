#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ragqa/io.hpp"

namespace ragqa {

struct ScoredChunk {
    std::string chunk_id;
    double score = 0.0;

    bool operator==(const ScoredChunk&) const = default;
};

/// Ranked list, descending by score with ties broken by ascending chunk id.
/// `depth` is the k that was requested; `ranked` may be shorter when fewer
/// chunks have a positive score or the corpus is smaller than k.
struct RetrievalResult {
    std::vector<ScoredChunk> ranked;
    std::string retriever_id;
    std::size_t depth = 0;

    /// 1-based rank of the chunk, or 0 when absent.
    std::size_t rank_of(std::string_view chunk_id) const;
};

json to_json(const RetrievalResult& r);

/// Sorts by (score desc, chunk id asc) and keeps the first k.
void rank_top_k(std::vector<ScoredChunk>& scored, std::size_t k);

class Retriever {
public:
    virtual ~Retriever() = default;
    virtual RetrievalResult search(std::string_view query, std::size_t k) const = 0;
    virtual std::string id() const = 0;
};

/// Forwards to another retriever and counts calls.
class CountingRetriever final : public Retriever {
public:
    explicit CountingRetriever(const Retriever& inner) : inner_(inner) {}
    RetrievalResult search(std::string_view query, std::size_t k) const override {
        ++calls_;
        return inner_.search(query, k);
    }
    std::string id() const override { return inner_.id(); }
    std::size_t calls() const { return calls_.load(); }

private:
    const Retriever& inner_;
    mutable std::atomic<std::size_t> calls_{0};
};

/// Uniform sample of k ids without replacement, in draw order, all scores 0.
/// Throws RetrievalError when k exceeds the number of ids.
RetrievalResult search_random(std::span<const std::string> chunk_ids, std::size_t k, std::uint64_t seed);

/// Random baseline over a fixed id list. Each query draws with a seed derived
/// from the base seed and the query text, so runs are reproducible while
/// different questions get independent samples. k larger than the corpus
/// returns every chunk.
class RandomRetriever final : public Retriever {
public:
    RandomRetriever(std::vector<std::string> chunk_ids, std::uint64_t seed);
    RetrievalResult search(std::string_view query, std::size_t k) const override;
    std::string id() const override { return "random"; }

private:
    std::vector<std::string> ids_;
    std::uint64_t seed_;
};

}  // namespace ragqa
