#include "ragqa/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <unordered_set>

#include "ragqa/error.hpp"
#include "ragqa/text.hpp"

namespace ragqa {

ChunkingConfig ChunkingConfig::with_size(std::size_t chunk_size) {
    return ChunkingConfig{chunk_size, chunk_size / 10};
}

void ChunkingConfig::validate() const {
    if (chunk_size == 0) throw CorpusError("chunk_size must be positive");
    if (overlap >= chunk_size) {
        throw CorpusError("overlap (" + std::to_string(overlap) + ") must be smaller than chunk_size (" +
                          std::to_string(chunk_size) + ")");
    }
}

namespace {

std::string required_string(const json& j, const char* key, std::size_t record) {
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
        throw CorpusError("record " + std::to_string(record) + ": missing field \"" + key + "\"");
    }
    if (!it->is_string()) {
        throw CorpusError("record " + std::to_string(record) + ": field \"" + key + "\" must be a string");
    }
    return it->get<std::string>();
}

}  // namespace

Document document_from_json(const json& j) {
    Document d;
    d.id = j.at("id").get<std::string>();
    d.title = j.value("title", "");
    d.date = j.value("date", "");
    if (auto it = j.find("source_url"); it != j.end() && it->is_string()) d.source_url = it->get<std::string>();
    d.body = j.at("body").get<std::string>();
    return d;
}

json document_to_json(const Document& doc) {
    json j = {{"id", doc.id}, {"title", doc.title}, {"date", doc.date}};
    if (doc.source_url) j["source_url"] = *doc.source_url;
    j["body"] = doc.body;
    return j;
}

std::vector<Document> ingest(const std::filesystem::path& path, std::string_view format) {
    if (format != "jsonl") throw CorpusError("unsupported corpus format \"" + std::string(format) + "\"");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorpusError("cannot read corpus file " + path.string());

    std::vector<Document> docs;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t record = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const std::size_t index = record++;
        if (!is_valid_utf8(line)) throw CorpusError("record " + std::to_string(index) + ": invalid UTF-8");
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw CorpusError("record " + std::to_string(index) + ": malformed JSON: " + e.what());
        }
        if (!j.is_object()) throw CorpusError("record " + std::to_string(index) + ": not a JSON object");

        Document d;
        d.id = required_string(j, "id", index);
        d.title = required_string(j, "title", index);
        d.date = required_string(j, "date", index);
        if (auto it = j.find("source_url"); it != j.end() && !it->is_null()) {
            if (!it->is_string()) {
                throw CorpusError("record " + std::to_string(index) + ": field \"source_url\" must be a string");
            }
            d.source_url = it->get<std::string>();
        }
        d.body = required_string(j, "body", index);
        if (d.id.empty()) throw CorpusError("record " + std::to_string(index) + ": empty id");
        if (d.body.empty()) throw CorpusError("record " + std::to_string(index) + " (" + d.id + "): empty body");
        if (!seen.insert(d.id).second) {
            throw CorpusError("record " + std::to_string(index) + ": duplicate id \"" + d.id + "\"");
        }
        docs.push_back(std::move(d));
    }
    return docs;
}

std::vector<Chunk> chunk_document(const Document& doc, const ChunkingConfig& cfg) {
    cfg.validate();
    const auto offsets = codepoint_offsets(doc.body);
    const std::size_t length = offsets.size() - 1;

    std::vector<Chunk> chunks;
    chunks.reserve(length / cfg.chunk_size + 1);
    for (std::size_t start = 0, seq = 0; start < length; ++seq) {
        const std::size_t end = std::min(start + cfg.chunk_size, length);
        Chunk c;
        c.id = doc.id + "#" + std::to_string(seq);
        c.doc_id = doc.id;
        c.seq = seq;
        c.core_start = start;
        c.core_end = end;
        c.text_start = start - std::min(cfg.overlap, start);
        c.text_end = end + std::min(cfg.overlap, length - end);
        c.text = doc.body.substr(offsets[c.text_start], offsets[c.text_end] - offsets[c.text_start]);
        c.title = doc.title;
        c.date = doc.date;
        chunks.push_back(std::move(c));
        start = end;
    }
    return chunks;
}

std::string_view chunk_core(const Chunk& chunk) {
    const auto offsets = codepoint_offsets(chunk.text);
    const std::size_t b = offsets[chunk.overlap_pre()];
    const std::size_t e = offsets[chunk.core_end - chunk.text_start];
    return std::string_view(chunk.text).substr(b, e - b);
}

CorpusStats corpus_stats(std::span<const Chunk> chunks) {
    if (chunks.empty()) throw CorpusError("corpus_stats: empty chunk list");
    CorpusStats s;
    s.chunk_count = chunks.size();
    s.min_words = std::numeric_limits<std::size_t>::max();
    std::size_t total = 0;
    for (const auto& c : chunks) {
        const std::size_t w = word_count(c.text);
        s.min_words = std::min(s.min_words, w);
        s.max_words = std::max(s.max_words, w);
        total += w;
    }
    s.avg_words = static_cast<double>(total) / static_cast<double>(chunks.size());
    return s;
}

json chunk_to_json(const Chunk& c) {
    return {{"id", c.id},           {"doc_id", c.doc_id},     {"seq", c.seq},
            {"core_start", c.core_start}, {"core_end", c.core_end}, {"text", c.text},
            {"title", c.title},     {"date", c.date}};
}

json stats_to_json(const CorpusStats& s) {
    return {{"chunk_count", s.chunk_count},
            {"min_words", s.min_words},
            {"max_words", s.max_words},
            {"avg_words", s.avg_words},
            {"avg_words_rendered", format_fixed(s.avg_words, 2)}};
}

ChunkSet::ChunkSet(std::vector<Chunk> chunks, ChunkingConfig cfg) : chunks_(std::move(chunks)), config_(cfg) {
    std::string material = "chunk_size=" + std::to_string(cfg.chunk_size) + ";overlap=" + std::to_string(cfg.overlap) + "\n";
    for (std::size_t i = 0; i < chunks_.size(); ++i) {
        const auto& c = chunks_[i];
        if (!by_id_.emplace(c.id, i).second) throw CorpusError("duplicate chunk id \"" + c.id + "\"");
        material += c.id;
        material += '\0';
        material += c.title;
        material += '\0';
        material += c.date;
        material += '\0';
        material += c.text;
        material += '\n';
    }
    fingerprint_ = sha256_hex(material);
}

ChunkSet ChunkSet::from_documents(std::span<const Document> docs, const ChunkingConfig& cfg) {
    cfg.validate();
    std::vector<Chunk> all;
    for (const auto& d : docs) {
        auto part = chunk_document(d, cfg);
        std::move(part.begin(), part.end(), std::back_inserter(all));
    }
    return ChunkSet(std::move(all), cfg);
}

const Chunk* ChunkSet::find(std::string_view id) const {
    const auto it = by_id_.find(std::string(id));
    return it == by_id_.end() ? nullptr : &chunks_[it->second];
}

const Chunk& ChunkSet::at(std::string_view id) const {
    if (const auto* c = find(id)) return *c;
    throw CorpusError("unknown chunk id \"" + std::string(id) + "\"");
}

std::vector<std::string> ChunkSet::ids() const {
    std::vector<std::string> out;
    out.reserve(chunks_.size());
    for (const auto& c : chunks_) out.push_back(c.id);
    return out;
}

}  // namespace ragqa
