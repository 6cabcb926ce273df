#include <gtest/gtest.h>

#include <random>

#include "ragqa/corpus.hpp"
#include "ragqa/error.hpp"
#include "ragqa/text.hpp"
#include "test_support.hpp"

using namespace ragqa;
using ragqa::fixtures::make_doc;
using ragqa::fixtures::TempDir;
using ragqa::fixtures::write_text;

namespace {

std::string jsonl_record(const std::string& id, const std::string& body) {
    return json{{"id", id}, {"title", "T " + id}, {"date", "2024-05-01"}, {"body", body}}.dump() + "\n";
}

}  // namespace

TEST(Ingest, ThreeRecordsInOrder) {
    TempDir dir;
    write_text(dir / "c.jsonl", jsonl_record("b", "segundo") + jsonl_record("a", "primeiro") +
                                    "\n" + jsonl_record("c", "terceiro"));
    const auto docs = ingest(dir / "c.jsonl");
    ASSERT_EQ(docs.size(), 3u);
    EXPECT_EQ(docs[0].id, "b");
    EXPECT_EQ(docs[1].id, "a");
    EXPECT_EQ(docs[2].body, "terceiro");
    EXPECT_FALSE(docs[0].source_url.has_value());
}

TEST(Ingest, BodyIsLossFree) {
    TempDir dir;
    const std::string body = "Linha 1\n\tLinha \"2\" — ação € 𝄞  ";
    write_text(dir / "c.jsonl", jsonl_record("x", body));
    EXPECT_EQ(ingest(dir / "c.jsonl").at(0).body, body);
}

TEST(Ingest, MissingBodyNamesRecord) {
    TempDir dir;
    write_text(dir / "c.jsonl", jsonl_record("a", "ok") + R"({"id":"b","title":"t","date":"2024-01-01"})" "\n");
    try {
        ingest(dir / "c.jsonl");
        FAIL() << "expected CorpusError";
    } catch (const CorpusError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("record 1"), std::string::npos) << msg;
        EXPECT_NE(msg.find("body"), std::string::npos) << msg;
    }
}

TEST(Ingest, Errors) {
    TempDir dir;
    EXPECT_THROW(ingest(dir / "missing.jsonl"), CorpusError);

    write_text(dir / "dup.jsonl", jsonl_record("a", "x") + jsonl_record("a", "y"));
    EXPECT_THROW(ingest(dir / "dup.jsonl"), CorpusError);

    write_text(dir / "bad.jsonl", jsonl_record("a", "x") + "{not json\n");
    EXPECT_THROW(ingest(dir / "bad.jsonl"), CorpusError);

    write_text(dir / "empty_body.jsonl", jsonl_record("a", ""));
    EXPECT_THROW(ingest(dir / "empty_body.jsonl"), CorpusError);

    write_text(dir / "utf8.jsonl", std::string(R"({"id":"a","title":"t","date":"d","body":"\xC3("})") + "\n");
    EXPECT_THROW(ingest(dir / "utf8.jsonl"), CorpusError);

    write_text(dir / "ok.jsonl", jsonl_record("a", "x"));
    EXPECT_THROW(ingest(dir / "ok.jsonl", "csv"), CorpusError);
}

TEST(Ingest, CorpusOf866Documents) {
    TempDir dir;
    std::string content;
    for (int i = 0; i < 866; ++i) content += jsonl_record("doc" + std::to_string(i), "norma " + std::to_string(i));
    write_text(dir / "c.jsonl", content);
    EXPECT_EQ(ingest(dir / "c.jsonl").size(), 866u);
}

TEST(ChunkingConfig, DefaultsAndValidation) {
    const auto cfg = ChunkingConfig::with_size(2000);
    EXPECT_EQ(cfg.overlap, 200u);
    EXPECT_EQ(ChunkingConfig::with_size(8).overlap, 0u);
    EXPECT_THROW((ChunkingConfig{0, 0}.validate()), CorpusError);
    EXPECT_THROW((ChunkingConfig{100, 100}.validate()), CorpusError);
    EXPECT_NO_THROW((ChunkingConfig{100, 99}.validate()));
}

TEST(ChunkDocument, HandDerivedOffsets) {
    const auto doc = make_doc("d", std::string(5000, 'x'));
    const auto chunks = chunk_document(doc, {2000, 200});
    ASSERT_EQ(chunks.size(), 3u);
    const std::size_t core[3][2] = {{0, 2000}, {2000, 4000}, {4000, 5000}};
    const std::size_t text[3][2] = {{0, 2200}, {1800, 4200}, {3800, 5000}};
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(chunks[i].core_start, core[i][0]);
        EXPECT_EQ(chunks[i].core_end, core[i][1]);
        EXPECT_EQ(chunks[i].text_start, text[i][0]);
        EXPECT_EQ(chunks[i].text_end, text[i][1]);
        EXPECT_EQ(chunks[i].text.size(), text[i][1] - text[i][0]);
        EXPECT_EQ(chunks[i].seq, i);
        EXPECT_EQ(chunks[i].id, "d#" + std::to_string(i));
    }
    EXPECT_EQ(chunks[0].overlap_pre(), 0u);
    EXPECT_EQ(chunks[1].overlap_pre(), 200u);
    EXPECT_EQ(chunks[1].overlap_post(), 200u);
    EXPECT_EQ(chunks[2].overlap_post(), 0u);
}

TEST(ChunkDocument, SingleChunkCases) {
    const auto shorter = make_doc("s", std::string(1500, 'y'));
    auto chunks = chunk_document(shorter, {2000, 200});
    ASSERT_EQ(chunks.size(), 1u);
    EXPECT_EQ(chunks[0].text, shorter.body);

    const auto exact = make_doc("e", std::string(2000, 'z'));
    chunks = chunk_document(exact, {2000, 200});
    ASSERT_EQ(chunks.size(), 1u);
    EXPECT_EQ(chunks[0].overlap_pre(), 0u);
    EXPECT_EQ(chunks[0].overlap_post(), 0u);
    EXPECT_EQ(chunks[0].text, exact.body);
}

TEST(ChunkDocument, CountsCodePointsNotBytes) {
    // 10 characters, 20 bytes.
    const auto doc = make_doc("u", "ãéíõúãéíõú", "Ação", "2024-02-02");
    const auto chunks = chunk_document(doc, {4, 1});
    ASSERT_EQ(chunks.size(), 3u);
    EXPECT_EQ(chunks[0].text, "ãéíõú");   // core 4 + 1 following
    EXPECT_EQ(chunks[1].text, "õúãéíõ");  // 1 + core 4 + 1
    EXPECT_EQ(chunks[2].text, "íõú");
    EXPECT_EQ(chunk_core(chunks[1]), "úãéí");
    EXPECT_EQ(chunks[1].title, "Ação");
    EXPECT_EQ(chunks[1].date, "2024-02-02");
}

TEST(ChunkDocument, RandomizedInvariants) {
    std::mt19937_64 rng(20240601);
    for (int iter = 0; iter < 300; ++iter) {
        const std::size_t len = 1 + rng() % 700;
        const std::size_t size = 1 + rng() % 120;
        const std::size_t overlap = rng() % size;
        const auto doc = make_doc("d" + std::to_string(iter), ragqa::fixtures::random_body(rng, len));
        const auto chunks = chunk_document(doc, {size, overlap});
        const auto offsets = codepoint_offsets(doc.body);
        const std::size_t body_len = offsets.size() - 1;

        std::string rebuilt;
        for (std::size_t i = 0; i < chunks.size(); ++i) {
            const auto& c = chunks[i];
            if (i == 0) EXPECT_EQ(c.core_start, 0u);
            if (i > 0) EXPECT_EQ(c.core_start, chunks[i - 1].core_end);
            EXPECT_EQ(c.overlap_pre(), std::min(overlap, c.core_start));
            EXPECT_EQ(c.overlap_post(), std::min(overlap, body_len - c.core_end));
            EXPECT_EQ(c.text, doc.body.substr(offsets[c.text_start], offsets[c.text_end] - offsets[c.text_start]));
            EXPECT_LE(codepoint_length(c.text), size + 2 * overlap);
            EXPECT_TRUE(is_valid_utf8(c.text));
            rebuilt += chunk_core(c);
        }
        EXPECT_EQ(chunks.back().core_end, body_len);
        ASSERT_EQ(rebuilt, doc.body) << "iteration " << iter;

        const auto again = chunk_document(doc, {size, overlap});
        ASSERT_EQ(again.size(), chunks.size());
        for (std::size_t i = 0; i < chunks.size(); ++i) {
            EXPECT_EQ(again[i].id, chunks[i].id);
            EXPECT_EQ(again[i].text, chunks[i].text);
            EXPECT_EQ(again[i].core_start, chunks[i].core_start);
        }
    }
}

TEST(ChunkDocument, DoublingSizeNeverIncreasesCount) {
    std::mt19937_64 rng(7);
    for (int iter = 0; iter < 100; ++iter) {
        const auto doc = make_doc("d", ragqa::fixtures::random_body(rng, 1 + rng() % 5000));
        std::size_t previous = SIZE_MAX;
        for (std::size_t size : {200u, 400u, 800u, 1600u}) {
            const auto n = chunk_document(doc, ChunkingConfig::with_size(size)).size();
            EXPECT_LE(n, previous);
            previous = n;
        }
    }
}

TEST(CorpusStats, Arithmetic) {
    std::vector<Chunk> chunks(3);
    chunks[0].text = "um dois três quatro";
    chunks[1].text = "a b c d e f g h";
    chunks[2].text = "1 2 3 4 5 6 7 8 9 10 11 12";
    const auto s = corpus_stats(chunks);
    EXPECT_EQ(s.chunk_count, 3u);
    EXPECT_EQ(s.min_words, 4u);
    EXPECT_EQ(s.max_words, 12u);
    EXPECT_DOUBLE_EQ(s.avg_words, 8.0);
    EXPECT_EQ(stats_to_json(s).at("avg_words_rendered"), "8.00");
}

TEST(CorpusStats, SingleChunkAndEmpty) {
    std::vector<Chunk> one(1);
    one[0].text = "sete palavras aqui nesta frase de teste";
    const auto s = corpus_stats(one);
    EXPECT_EQ(s.min_words, 7u);
    EXPECT_EQ(s.max_words, 7u);
    EXPECT_DOUBLE_EQ(s.avg_words, 7.0);
    EXPECT_THROW(corpus_stats(std::vector<Chunk>{}), CorpusError);
}

TEST(ChunkSet, LookupAndFingerprint) {
    const std::vector<Document> docs = {make_doc("a", std::string(50, 'a')), make_doc("b", std::string(30, 'b'))};
    const auto set = ChunkSet::from_documents(docs, {20, 2});
    EXPECT_EQ(set.size(), 5u);
    EXPECT_EQ(set.at("b#1").doc_id, "b");
    EXPECT_EQ(set.find("c#0"), nullptr);
    EXPECT_THROW(set.at("c#0"), CorpusError);
    EXPECT_EQ(set.fingerprint(), ChunkSet::from_documents(docs, {20, 2}).fingerprint());
    EXPECT_NE(set.fingerprint(), ChunkSet::from_documents(docs, {20, 3}).fingerprint());
    EXPECT_EQ(set.fingerprint().size(), 64u);
}
