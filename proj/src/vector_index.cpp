#include "ragqa/vector_index.hpp"

#include <cmath>
#include <fstream>
#include <unordered_set>

#include "ragqa/error.hpp"
#include "ragqa/io.hpp"

namespace ragqa {

namespace {
constexpr const char* kFormat = "ragqa-vector-index";
constexpr int kVersion = 1;
}  // namespace

const char* to_string(Similarity s) { return s == Similarity::Dot ? "dot" : "cosine"; }

Similarity similarity_from_string(std::string_view s) {
    if (s == "dot") return Similarity::Dot;
    if (s == "cosine") return Similarity::Cosine;
    throw RetrievalError("unknown similarity \"" + std::string(s) + "\" (expected dot or cosine)");
}

VectorIndex::VectorIndex(std::size_t dims, Similarity similarity, std::string model_id, std::string corpus_fingerprint)
    : dims_(dims), similarity_(similarity), model_id_(std::move(model_id)), fingerprint_(std::move(corpus_fingerprint)) {
    if (dims_ == 0) throw RetrievalError("vector index dims must be positive");
}

void VectorIndex::add(std::string chunk_id, Embedding vector) {
    if (vector.size() != dims_) {
        throw RetrievalError("dimension mismatch for \"" + chunk_id + "\": expected " + std::to_string(dims_) +
                             ", got " + std::to_string(vector.size()));
    }
    for (double x : vector) {
        if (!std::isfinite(x)) throw RetrievalError("non-finite embedding value for \"" + chunk_id + "\"");
    }
    if (!id_set_.insert(chunk_id).second) {
        throw RetrievalError("duplicate chunk id \"" + chunk_id + "\" in vector index");
    }
    norms_.push_back(l2_norm(vector));
    ids_.push_back(std::move(chunk_id));
    vectors_.push_back(std::move(vector));
}

std::vector<ScoredChunk> VectorIndex::score_all(std::span<const double> query) const {
    if (query.size() != dims_) {
        throw RetrievalError("query dimension mismatch: index has " + std::to_string(dims_) + ", query has " +
                             std::to_string(query.size()));
    }
    const double qnorm = l2_norm(query);
    std::vector<ScoredChunk> out;
    out.reserve(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        double s = dot(query, vectors_[i]);
        if (similarity_ == Similarity::Cosine) s = (qnorm == 0.0 || norms_[i] == 0.0) ? 0.0 : s / (qnorm * norms_[i]);
        out.push_back({ids_[i], s});
    }
    return out;
}

void VectorIndex::save(const std::filesystem::path& path) const {
    std::string out = json{{"format", kFormat},
                           {"version", kVersion},
                           {"dims", dims_},
                           {"similarity", to_string(similarity_)},
                           {"model", model_id_},
                           {"corpus_fingerprint", fingerprint_},
                           {"count", ids_.size()}}
                          .dump();
    out += '\n';
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        out += json{{"id", ids_[i]}, {"vector", vectors_[i]}}.dump();
        out += '\n';
    }
    write_file_atomic(path, out);
}

VectorIndex VectorIndex::load(const std::filesystem::path& path, std::optional<std::string_view> expected_fingerprint) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RetrievalError("cannot read vector index " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw RetrievalError("vector index " + path.string() + " is empty");
    const json header = json::parse(line);
    if (header.value("format", "") != kFormat || header.value("version", 0) != kVersion) {
        throw RetrievalError(path.string() + " is not a version " + std::to_string(kVersion) + " vector index");
    }
    VectorIndex index(header.at("dims").get<std::size_t>(),
                      similarity_from_string(header.at("similarity").get<std::string>()),
                      header.at("model").get<std::string>(), header.at("corpus_fingerprint").get<std::string>());
    if (expected_fingerprint && *expected_fingerprint != index.fingerprint_) {
        throw FingerprintMismatch("vector index " + path.string(), std::string(*expected_fingerprint), index.fingerprint_);
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json entry = json::parse(line);
        index.add(entry.at("id").get<std::string>(), entry.at("vector").get<Embedding>());
    }
    const auto count = header.at("count").get<std::size_t>();
    if (index.size() != count) {
        throw RetrievalError("vector index " + path.string() + " is truncated: header says " + std::to_string(count) +
                             " entries, found " + std::to_string(index.size()));
    }
    return index;
}

VectorIndex build_vector_index(const ChunkSet& chunks, const Embedder& embedder, Similarity similarity) {
    if (chunks.empty()) throw RetrievalError("cannot build a vector index over an empty chunk list");
    std::vector<std::string> texts;
    texts.reserve(chunks.size());
    for (const auto& c : chunks.chunks()) texts.push_back(c.text);

    std::vector<Embedding> vectors;
    try {
        vectors = embedder.embed(texts);
    } catch (const ProviderError& e) {
        std::string ids;
        for (std::size_t i = 0; i < e.failed_indices.size(); ++i) {
            if (i == 8) {
                ids += ", ... (" + std::to_string(e.failed_indices.size()) + " total)";
                break;
            }
            if (i) ids += ", ";
            ids += chunks.chunks()[e.failed_indices[i]].id;
        }
        ProviderError wrapped(e.error_kind(), std::string(e.what()) + " [failed chunks: " + ids + "]", e.status(), e.body());
        wrapped.failed_indices = e.failed_indices;
        throw wrapped;
    }

    VectorIndex index(embedder.dims(), similarity, embedder.model_id(), chunks.fingerprint());
    for (std::size_t i = 0; i < vectors.size(); ++i) index.add(chunks.chunks()[i].id, std::move(vectors[i]));
    return index;
}

RetrievalResult search_vector(const VectorIndex& index, std::string_view query, const Embedder& embedder, std::size_t k) {
    if (k < 1) throw RetrievalError("search_vector: k must be >= 1");
    if (embedder.model_id() != index.model_id()) {
        throw RetrievalError("index was built with model \"" + index.model_id() + "\", query embedder is \"" +
                             embedder.model_id() + "\"");
    }
    const Embedding q = embedder.embed_one(query);
    auto scored = index.score_all(q);
    rank_top_k(scored, k);
    return RetrievalResult{std::move(scored), "dense:" + index.model_id(), k};
}

}  // namespace ragqa
