#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "oracles.hpp"
#include "ragqa/bm25.hpp"
#include "ragqa/error.hpp"
#include "ragqa/mock_providers.hpp"
#include "ragqa/vector_index.hpp"
#include "test_support.hpp"

using namespace ragqa;
using ragqa::fixtures::TempDir;

namespace {

Chunk text_chunk(std::string id, std::string text) {
    Chunk c;
    c.id = std::move(id);
    c.text = std::move(text);
    return c;
}

std::vector<Chunk> toy_chunks() {
    return {text_chunk("c1", "A USP oferece cursos de graduação e pós-graduação."),
            text_chunk("c2", "O estatuto da USP define os órgãos colegiados."),
            text_chunk("c3", "O prazo de matrícula é de trinta dias."),
            text_chunk("c4", "Bolsas de auxílio estudantil são concedidas pela pró-reitoria."),
            text_chunk("c5", "O conselho universitário aprova o orçamento anual de oito bilhões.")};
}

void expect_same_ranking(const RetrievalResult& got, const std::vector<ScoredChunk>& expected) {
    ASSERT_EQ(got.ranked.size(), expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
        EXPECT_EQ(got.ranked[i].chunk_id, expected[i].chunk_id) << "rank " << i + 1;
        EXPECT_NEAR(got.ranked[i].score, expected[i].score, 1e-9);
    }
}

// Returns vectors of a fixed, wrong length.
class WrongDimsEmbedder final : public Embedder {
public:
    WrongDimsEmbedder() : Embedder(EmbedderConfig{"mock://bad", "bad", 8, 2, 1, {}, {}}, nullptr) {}

protected:
    Batch embed_batch(std::span<const std::string> texts) const override {
        Batch b;
        for (std::size_t i = 0; i < texts.size(); ++i) b.vectors.emplace_back(5, 0.1);
        return b;
    }
};

// Fails every batch that contains the text "boom".
class FailingEmbedder final : public Embedder {
public:
    FailingEmbedder() : Embedder(EmbedderConfig{"mock://fail", "fail", 4, 1, 1, {}, {}}, nullptr) {}

protected:
    Batch embed_batch(std::span<const std::string> texts) const override {
        Batch b;
        for (const auto& t : texts) {
            if (t.find("boom") != std::string::npos) throw ProviderError(ProviderError::Kind::Http, "HTTP 500", 500);
            b.vectors.emplace_back(4, 0.5);
        }
        return b;
    }
};

}  // namespace

TEST(Bm25Index, Statistics) {
    std::vector<Chunk> chunks = {text_chunk("a", "usp usp norma"), text_chunk("b", "usp reitoria"),
                                 text_chunk("c", "um dois tres quatro cinco seis sete oito nove dez")};
    const auto index = build_bm25(chunks);
    EXPECT_EQ(index.doc_count(), 3u);
    EXPECT_EQ(index.doc_freq("usp"), 2u);
    EXPECT_EQ(index.doc_length(2), 10u);
    EXPECT_EQ(index.term_frequency("usp", 0), 2u);
    EXPECT_EQ(index.term_frequency("usp", 2), 0u);
    EXPECT_DOUBLE_EQ(index.avg_doc_length(), 15.0 / 3.0);
    EXPECT_EQ(index.doc_freq("ausente"), 0u);
    EXPECT_THROW(build_bm25(std::vector<Chunk>{}), RetrievalError);
}

TEST(Bm25Index, EqualLengthsGiveThatAverage) {
    std::vector<Chunk> chunks = {text_chunk("a", "x y z"), text_chunk("b", "p q r"), text_chunk("c", "x q w")};
    EXPECT_DOUBLE_EQ(build_bm25(chunks).avg_doc_length(), 3.0);
}

TEST(Bm25Score, HandExampleIsLn2) {
    std::vector<Chunk> chunks = {text_chunk("A", "usp alfa beta gama"), text_chunk("B", "delta epsilon zeta eta")};
    const auto index = build_bm25(chunks);
    const std::vector<std::string> q = {"usp"};
    EXPECT_NEAR(bm25_score(index, q, "A"), std::log(2.0), 1e-12);
    EXPECT_NEAR(bm25_score(index, q, "A"), 0.6931, 1e-4);
    EXPECT_EQ(bm25_score(index, q, "B"), 0.0);
    EXPECT_THROW(bm25_score(index, q, "Z"), RetrievalError);
}

TEST(Bm25Score, DuplicatedCorpusKeepsHandExample) {
    // N = 2 df = 1 becomes N = 4 df = 2; (N + 1) / (df + 0.5) stays 2 only
    // because N = 2 df here.
    std::vector<Chunk> chunks = {text_chunk("A", "usp alfa beta gama"), text_chunk("B", "delta epsilon zeta eta"),
                                 text_chunk("A2", "usp alfa beta gama"), text_chunk("B2", "delta epsilon zeta eta")};
    const std::vector<std::string> q = {"usp"};
    EXPECT_NEAR(bm25_score(build_bm25(chunks), q, "A"), std::log(2.0), 1e-12);
}

TEST(Bm25Score, ReplicationConvergesToRatioForm) {
    // idf = ln((N + 1) / (df + 0.5)); under m-fold replication the length
    // normalization is unchanged and idf tends to ln(N / df).
    std::mt19937_64 rng(99);
    std::vector<Chunk> base;
    for (int i = 0; i < 12; ++i) base.push_back(text_chunk("d" + std::to_string(i), fixtures::random_words(rng, 5 + rng() % 20, 15)));
    const std::string query = "w1 w3 w7";
    const auto q = tokenize(query);

    auto limit_score = [&](const std::string& id) {
        const auto index = build_bm25(base);
        const auto doc = *index.doc_index(id);
        double s = 0;
        for (const auto& t : q) {
            const auto tf = index.term_frequency(t, doc);
            if (tf == 0) continue;
            const double ratio_idf = std::log(static_cast<double>(index.doc_count()) / index.doc_freq(t));
            s += index.term_score(index.doc_freq(t), tf, doc) / index.idf(index.doc_freq(t)) * ratio_idf;
        }
        return s;
    };

    for (const auto& chunk : base) {
        const double target = limit_score(chunk.id);
        double previous_gap = INFINITY;
        for (int m : {1, 2, 4, 8, 16}) {
            std::vector<Chunk> replicated;
            for (int r = 0; r < m; ++r) {
                for (const auto& c : base) replicated.push_back(text_chunk(c.id + (r ? "~" + std::to_string(r) : ""), c.text));
            }
            const double gap = std::abs(bm25_score(build_bm25(replicated), q, chunk.id) - target);
            EXPECT_LE(gap, previous_gap + 1e-12);
            previous_gap = gap;
        }
    }
}

TEST(SearchBm25, ToyCorpusMatchesOracle) {
    const auto chunks = toy_chunks();
    const auto index = build_bm25(chunks);
    for (std::string q : {"USP", "prazo de matrícula", "orçamento da USP", "de", "órgãos colegiados do conselho"}) {
        expect_same_ranking(search_bm25(index, q, 5), oracle::sort_all(oracle::bm25_all(chunks, q), 5, true));
    }
}

TEST(SearchBm25, UniqueTextRanksFirst) {
    const auto chunks = toy_chunks();
    const auto index = build_bm25(chunks);
    const auto r = search_bm25(index, chunks[3].text, 3);
    ASSERT_FALSE(r.ranked.empty());
    EXPECT_EQ(r.ranked[0].chunk_id, "c4");
    EXPECT_EQ(r.retriever_id, "bm25");
    EXPECT_EQ(r.depth, 3u);
}

TEST(SearchBm25, NoCorpusTermsGivesEmptyResult) {
    const auto index = build_bm25(toy_chunks());
    EXPECT_TRUE(search_bm25(index, "xyzzy plugh", 5).ranked.empty());
    EXPECT_TRUE(search_bm25(index, "", 5).ranked.empty());
    EXPECT_THROW(search_bm25(index, "usp", 0), RetrievalError);
}

TEST(SearchBm25, RandomCorporaMatchOracle) {
    std::mt19937_64 rng(4242);
    for (int iter = 0; iter < 60; ++iter) {
        std::vector<Chunk> chunks;
        const std::size_t n = 1 + rng() % 50;
        for (std::size_t i = 0; i < n; ++i) {
            chunks.push_back(text_chunk("c" + std::to_string(rng() % 1000) + "_" + std::to_string(i),
                                        fixtures::random_words(rng, rng() % 40)));
        }
        const auto index = build_bm25(chunks);
        const std::string q = fixtures::random_words(rng, 1 + rng() % 30);
        const std::size_t k = 1 + rng() % 60;
        const auto got = search_bm25(index, q, k);
        expect_same_ranking(got, oracle::sort_all(oracle::bm25_all(chunks, q), k, true));
        for (const auto& s : got.ranked) EXPECT_NEAR(s.score, bm25_score(index, tokenize(q), s.chunk_id), 0.0);
    }
}

TEST(VectorIndex, ConstructionFromChunks) {
    const std::vector<Document> docs = {fixtures::make_doc("a", "alfa beta"), fixtures::make_doc("b", "gama delta"),
                                        fixtures::make_doc("c", "epsilon")};
    const auto set = ChunkSet::from_documents(docs, ChunkingConfig::with_size(100));
    HashEmbedder embedder("mock", 8);
    const auto index = build_vector_index(set, embedder, Similarity::Dot);
    EXPECT_EQ(index.size(), 3u);
    EXPECT_EQ(index.dims(), 8u);
    EXPECT_EQ(index.corpus_fingerprint(), set.fingerprint());
    EXPECT_EQ(index.model_id(), "mock");
}

TEST(VectorIndex, DimensionMismatchFromProvider) {
    const std::vector<Document> docs = {fixtures::make_doc("a", "alfa"), fixtures::make_doc("b", "beta")};
    const auto set = ChunkSet::from_documents(docs, ChunkingConfig::with_size(100));
    WrongDimsEmbedder bad;
    try {
        build_vector_index(set, bad, Similarity::Dot);
        FAIL() << "expected dimension mismatch";
    } catch (const ProviderError& e) {
        EXPECT_EQ(e.error_kind(), ProviderError::Kind::DimensionMismatch);
    }
}

TEST(VectorIndex, ProviderFailureNamesChunks) {
    const std::vector<Document> docs = {fixtures::make_doc("ok", "fine"), fixtures::make_doc("bad", "boom"),
                                        fixtures::make_doc("ok2", "fine too")};
    const auto set = ChunkSet::from_documents(docs, ChunkingConfig::with_size(100));
    FailingEmbedder failing;
    try {
        build_vector_index(set, failing, Similarity::Dot);
        FAIL() << "expected provider error";
    } catch (const ProviderError& e) {
        EXPECT_EQ(e.failed_indices, (std::vector<std::size_t>{1}));
        EXPECT_NE(std::string(e.what()).find("bad#0"), std::string::npos) << e.what();
    }
}

TEST(VectorIndex, OrthogonalUnitVectors) {
    VectorIndex index(3, Similarity::Dot, "m", "fp");
    index.add("x", {1, 0, 0});
    index.add("y", {0, 1, 0});
    index.add("z", {0, 0, 1});
    auto scored = index.score_all(std::vector<double>{0, 1, 0});
    rank_top_k(scored, 3);
    EXPECT_EQ(scored[0].chunk_id, "y");
    EXPECT_DOUBLE_EQ(scored[0].score, 1.0);
    // Remaining zero scores tie and fall back to id order.
    EXPECT_EQ(scored[1].chunk_id, "x");
    EXPECT_EQ(scored[2].chunk_id, "z");
    EXPECT_THROW(index.add("w", {1, 0}), RetrievalError);
    EXPECT_THROW(index.add("x", {1, 0, 0}), RetrievalError);
    EXPECT_THROW(index.score_all(std::vector<double>{1, 0}), RetrievalError);
}

TEST(VectorIndex, CosineIdentityAndZeroNorm) {
    VectorIndex index(2, Similarity::Cosine, "m", "fp");
    index.add("a", {3, 4});
    index.add("zero", {0, 0});
    const auto scored = index.score_all(std::vector<double>{3, 4});
    EXPECT_NEAR(scored[0].score, 1.0, 1e-15);
    EXPECT_EQ(scored[1].score, 0.0);
    for (const auto& s : index.score_all(std::vector<double>{0, 0})) EXPECT_EQ(s.score, 0.0);
}

TEST(VectorIndex, RandomVectorsMatchBruteForce) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> normal;
    for (auto sim : {Similarity::Dot, Similarity::Cosine}) {
        for (int iter = 0; iter < 50; ++iter) {
            const std::size_t dims = 1 + rng() % 16;
            VectorIndex index(dims, sim, "m", "fp");
            std::vector<ScoredChunk> expected;
            std::vector<double> q(dims);
            for (auto& x : q) x = normal(rng);
            const std::size_t n = 4 + rng() % 20;
            for (std::size_t i = 0; i < n; ++i) {
                std::vector<double> v(dims);
                for (auto& x : v) x = normal(rng);
                const std::string id = "e" + std::to_string(i);
                expected.push_back({id, sim == Similarity::Dot ? oracle::dot(q, v) : oracle::cosine(q, v)});
                index.add(id, v);
            }
            auto got = index.score_all(q);
            rank_top_k(got, n);
            const auto want = oracle::sort_all(expected, n, false);
            for (std::size_t i = 0; i < n; ++i) {
                EXPECT_EQ(got[i].chunk_id, want[i].chunk_id);
                EXPECT_NEAR(got[i].score, want[i].score, 1e-9);
                if (sim == Similarity::Cosine) {
                    EXPECT_LE(got[i].score, 1.0 + 1e-12);
                    EXPECT_GE(got[i].score, -1.0 - 1e-12);
                }
            }
        }
    }
}

TEST(SearchVector, MockEmbedderMatchesOracleAndSymmetry) {
    std::vector<Document> docs;
    for (int i = 0; i < 6; ++i) {
        docs.push_back(fixtures::make_doc("d" + std::to_string(i), "norma número " + std::to_string(i) + " sobre bolsas e prazos " +
                                                                     std::string(i, 'x')));
    }
    const auto set = ChunkSet::from_documents(docs, ChunkingConfig::with_size(500));
    HashEmbedder embedder("mock-mpnet", 64);
    for (auto sim : {Similarity::Dot, Similarity::Cosine}) {
        const auto index = build_vector_index(set, embedder, sim);
        const std::string query = "prazos das bolsas";
        const auto q = embedder.vector_for(query);
        std::vector<ScoredChunk> expected;
        for (const auto& c : set.chunks()) {
            const auto v = embedder.vector_for(c.text);
            expected.push_back({c.id, sim == Similarity::Dot ? oracle::dot(q, v) : oracle::cosine(q, v)});
            EXPECT_NEAR(oracle::dot(q, v), oracle::dot(v, q), 0.0);
        }
        expect_same_ranking(search_vector(index, query, embedder, 4), oracle::sort_all(expected, 4, false));
    }
    HashEmbedder other("other-model", 64);
    const auto index = build_vector_index(set, embedder, Similarity::Dot);
    EXPECT_THROW(search_vector(index, "x", other, 3), RetrievalError);
    EXPECT_THROW(search_vector(index, "x", embedder, 0), RetrievalError);
}

TEST(VectorIndex, PersistenceIsDeterministicAndFingerprinted) {
    TempDir dir;
    std::vector<Document> docs = {fixtures::make_doc("a", "alfa beta gama"), fixtures::make_doc("b", "delta")};
    const auto set = ChunkSet::from_documents(docs, ChunkingConfig::with_size(100));
    HashEmbedder embedder("mock", 16);
    build_vector_index(set, embedder, Similarity::Cosine).save(dir / "one.jsonl");
    build_vector_index(set, embedder, Similarity::Cosine).save(dir / "two.jsonl");
    EXPECT_EQ(read_file(dir / "one.jsonl"), read_file(dir / "two.jsonl"));

    const auto loaded = VectorIndex::load(dir / "one.jsonl", set.fingerprint());
    EXPECT_EQ(loaded.size(), 2u);
    EXPECT_EQ(loaded.similarity(), Similarity::Cosine);
    EXPECT_EQ(loaded.vector(0), embedder.vector_for(set.chunks()[0].text));
    EXPECT_THROW(VectorIndex::load(dir / "one.jsonl", std::string_view("deadbeef")), FingerprintMismatch);
}

TEST(SearchRandom, ExhaustiveAndDeterministic) {
    std::vector<std::string> ids;
    for (int i = 0; i < 20; ++i) ids.push_back("c" + std::to_string(i));
    const auto all = search_random(ids, ids.size(), 5);
    std::set<std::string> seen;
    for (const auto& s : all.ranked) {
        seen.insert(s.chunk_id);
        EXPECT_EQ(s.score, 0.0);
    }
    EXPECT_EQ(seen.size(), ids.size());
    EXPECT_EQ(search_random(ids, 5, 42).ranked, search_random(ids, 5, 42).ranked);
    EXPECT_NE(search_random(ids, 5, 42).ranked, search_random(ids, 5, 43).ranked);
    EXPECT_THROW(search_random(ids, 21, 1), RetrievalError);
}

TEST(SearchRandom, HitRateIsKOverC) {
    // C = 4780 chunks (the 2K database size), k = 5.
    std::vector<std::string> ids;
    for (int i = 0; i < 4780; ++i) ids.push_back("c" + std::to_string(i));
    const int trials = 20000;
    int hits = 0;
    for (int t = 0; t < trials; ++t) {
        const auto& gold = ids[static_cast<std::size_t>(t * 7919) % ids.size()];
        if (search_random(ids, 5, static_cast<std::uint64_t>(t)).rank_of(gold) > 0) ++hits;
    }
    const double p = 5.0 / 4780.0;
    const double sigma = std::sqrt(p * (1 - p) / trials);
    EXPECT_NEAR(static_cast<double>(hits) / trials, p, 3 * sigma);
}

TEST(RandomRetriever, ClampsToCorpusAndVariesByQuery) {
    RandomRetriever r({"a", "b", "c"}, 9);
    const auto all = r.search("q", 10);
    EXPECT_EQ(all.ranked.size(), 3u);
    EXPECT_EQ(all.depth, 10u);
    EXPECT_EQ(r.search("q", 2).ranked, r.search("q", 2).ranked);
    EXPECT_THROW(r.search("q", 0), RetrievalError);
}
