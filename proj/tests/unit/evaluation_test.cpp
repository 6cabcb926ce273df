#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "oracles.hpp"
#include "ragqa/bm25.hpp"
#include "ragqa/evaluation.hpp"
#include "ragqa/mock_providers.hpp"
#include "ragqa/prompt_format.hpp"
#include "test_support.hpp"

using namespace ragqa;
using ragqa::fixtures::TempDir;

namespace {

RetrievalResult ranking(std::vector<std::string> ids, std::size_t depth) {
    RetrievalResult r;
    r.depth = depth;
    for (auto& id : ids) r.ranked.push_back({std::move(id), 1.0});
    return r;
}

// Delegates to an inner retriever but hides the gold chunk from every third
// question it sees.
class LossyRetriever final : public Retriever {
public:
    LossyRetriever(const Retriever& inner, const QADataset& ds) : inner_(inner) {
        for (std::size_t i = 0; i < ds.items.size(); i += 3) hide_[ds.items[i].question] = ds.items[i].gold_chunk_id;
    }
    RetrievalResult search(std::string_view query, std::size_t k) const override {
        auto r = inner_.search(query, k + 1);
        if (auto it = hide_.find(std::string(query)); it != hide_.end()) {
            std::erase_if(r.ranked, [&](const ScoredChunk& s) { return s.chunk_id == it->second; });
        }
        if (r.ranked.size() > k) r.ranked.resize(k);
        r.depth = k;
        return r;
    }
    std::string id() const override { return "lossy"; }

private:
    const Retriever& inner_;
    std::map<std::string, std::string> hide_;
};

struct MockPipeline {
    ChunkSet chunks = fixtures::toy_chunks(400);
    InvertedIndex index = build_bm25(chunks.chunks());
    Bm25Retriever bm25{index};
    std::unique_ptr<LlmProvider> generator = make_echo_llm(EchoMode::MarkedSpan);
    std::unique_ptr<LlmProvider> judge = make_honest_judge_llm();
    HashEmbedder embedder{"mock", 256};
    QADataset ds;

    MockPipeline() {
        const auto qa = make_structured_qa_llm();
        ds = generate_dataset(chunks, *qa, chunks.size(), 17, 4).dataset;
    }

    GenerationSetup setup(const Retriever* retriever) const {
        GenerationSetup s;
        s.chunks = &chunks;
        s.retriever = retriever;
        s.generator = generator.get();
        s.cosine_embedder = &embedder;
        s.judge = judge.get();
        return s;
    }
};

}  // namespace

TEST(TopK, HitsAndDepth) {
    const auto first = score_retrieval("q1", "g", ranking({"g", "x", "y"}, 5));
    const auto third = score_retrieval("q2", "g", ranking({"x", "y", "g", "z"}, 5));
    const auto miss = score_retrieval("q3", "g", ranking({"x"}, 5));
    EXPECT_EQ(first.rank_of_gold, 1u);
    EXPECT_EQ(third.rank_of_gold, 3u);
    EXPECT_FALSE(miss.rank_of_gold);

    const std::vector<std::size_t> ks = {1, 3, 5};
    const std::vector<TopKResult> all_first = {first, first};
    for (const auto& [k, acc] : topk_accuracy(all_first, ks)) EXPECT_EQ(acc, 1.0) << k;

    const std::vector<TopKResult> only_third = {third};
    const auto acc = topk_accuracy(only_third, ks);
    EXPECT_EQ(acc.at(1), 0.0);
    EXPECT_EQ(acc.at(5), 1.0);

    const std::vector<TopKResult> mixed = {first, third, miss};
    const auto m = topk_accuracy(mixed, ks);
    EXPECT_DOUBLE_EQ(m.at(1), 1.0 / 3);
    EXPECT_DOUBLE_EQ(m.at(3), 2.0 / 3);

    const std::vector<std::size_t> deep = {10};
    EXPECT_THROW(topk_accuracy(mixed, deep), EvaluationError);
    EXPECT_THROW(topk_accuracy(std::vector<TopKResult>{}, ks), EvaluationError);
}

TEST(TopK, RandomRetrieverMatchesKOverC) {
    const std::size_t c = 200;
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < c; ++i) ids.push_back("c" + std::to_string(i));
    const RandomRetriever random(ids, 99);
    std::mt19937_64 rng(5);
    const std::size_t trials = 20000;
    std::vector<TopKResult> results;
    for (std::size_t t = 0; t < trials; ++t) {
        const std::string gold = ids[uniform_below(rng, c)];
        results.push_back(score_retrieval("q" + std::to_string(t), gold, random.search("pergunta " + std::to_string(t), 20)));
    }
    const std::vector<std::size_t> ks = {1, 5, 20};
    for (const auto& [k, acc] : topk_accuracy(results, ks)) {
        const double p = double(k) / double(c);
        const double sigma = std::sqrt(p * (1 - p) / double(trials));
        EXPECT_NEAR(acc, p, 3 * sigma) << "k=" << k;
    }
}

TEST(TokenF1, Cases) {
    EXPECT_DOUBLE_EQ(token_f1("o prazo é de dez dias", "o prazo é de dez dias"), 100.0);
    EXPECT_DOUBLE_EQ(token_f1("bolsa auxílio", "prazo matrícula"), 0.0);
    EXPECT_NEAR(token_f1("a b c d", "a b"), 200.0 / 3.0, 1e-9);
    EXPECT_NEAR(token_f1("a b c d", "a b"), 66.67, 0.01);
    EXPECT_DOUBLE_EQ(token_f1("", ""), 100.0);
    EXPECT_DOUBLE_EQ(token_f1("", "algo"), 0.0);
    EXPECT_DOUBLE_EQ(token_f1("algo", "..."), 0.0);
    // Multiset: the repeated "a" only matches once.
    EXPECT_NEAR(token_f1("a a", "a b"), 50.0, 1e-12);
}

TEST(TokenF1, SymmetricAndMatchesOracle) {
    std::mt19937_64 rng(8);
    for (int i = 0; i < 1000; ++i) {
        const auto a = fixtures::random_words(rng, 1 + uniform_below(rng, 12), 15);
        const auto b = fixtures::random_words(rng, 1 + uniform_below(rng, 12), 15);
        const double ab = token_f1(a, b);
        EXPECT_EQ(ab, token_f1(b, a));
        EXPECT_NEAR(ab, oracle::token_f1(a, b), 1e-9);
        EXPECT_GE(ab, 0.0);
        EXPECT_LE(ab, 100.0);
        EXPECT_DOUBLE_EQ(token_f1(a, a), 100.0);
    }
}

TEST(EmbeddingCosine, IdentityFloorAndMockValue) {
    HashEmbedder e("mock", 16);
    EXPECT_NEAR(embedding_cosine("prazo de matrícula", "prazo de matrícula", e), 100.0, 1e-9);
    EXPECT_EQ(embedding_cosine("", "prazo", e), 0.0);

    const double expected = std::max(0.0, oracle::cosine(e.vector_for("prazo de matrícula"), e.vector_for("bolsa auxílio"))) * 100;
    EXPECT_NEAR(embedding_cosine("prazo de matrícula", "bolsa auxílio", e), expected, 1e-12);

    // Find a pair whose mock vectors point away from each other; the score clips to 0.
    HashEmbedder small("mock", 4);
    std::mt19937_64 rng(1);
    bool found = false;
    for (int i = 0; i < 500 && !found; ++i) {
        const auto a = fixtures::random_words(rng, 2, 1000);
        const auto b = fixtures::random_words(rng, 2, 1000);
        if (oracle::cosine(small.vector_for(a), small.vector_for(b)) < -0.1) {
            EXPECT_EQ(embedding_cosine(a, b, small), 0.0);
            found = true;
        }
    }
    EXPECT_TRUE(found);
}

TEST(Judge, PointsMapping) {
    EXPECT_EQ(judge_points(Verdict::TotallyCorrect), 100.0);
    EXPECT_EQ(judge_points(Verdict::MostlyCorrect), 50.0);
    EXPECT_EQ(judge_points(Verdict::Incorrect), 0.0);
    for (auto v : {Verdict::TotallyCorrect, Verdict::MostlyCorrect, Verdict::Incorrect}) {
        EXPECT_EQ(parse_verdict(to_string(v)), v);
    }
}

TEST(Judge, GoldenVerdictFormats) {
    const json cases = json::parse(read_file(RAGQA_TEST_DATA "/verdict_golden.json"));
    ASSERT_GE(cases.size(), 10u);
    for (const auto& c : cases) {
        SCOPED_TRACE(c.at("name").get<std::string>());
        const auto got = parse_verdict(c.at("reply").get<std::string>());
        if (c.at("expected").is_null()) {
            EXPECT_FALSE(got);
        } else {
            ASSERT_TRUE(got);
            EXPECT_EQ(to_string(*got), c.at("expected").get<std::string>());
        }
    }
}

TEST(Judge, HonestMockAndEmptyCandidate) {
    const auto judge = make_honest_judge_llm();
    const auto r = llm_judge("Qual o prazo?", "O prazo é de dez dias.", "o prazo é de dez dias", "trecho", *judge);
    EXPECT_EQ(r.verdict, Verdict::TotallyCorrect);
    EXPECT_FALSE(r.parse_failed);

    FunctionLlm counting("j", [](std::string_view, std::string_view) { return std::string("Totally correct"); });
    const auto empty = llm_judge("q", "   ", "gold", "span", counting);
    EXPECT_EQ(empty.verdict, Verdict::Incorrect);
    EXPECT_EQ(counting.calls(), 0u);
}

TEST(Judge, UnparseableRetriedOnceThenFlagged) {
    FunctionLlm vague("vague", [](std::string_view, std::string_view) { return std::string("Hard to say."); });
    const auto r = llm_judge("q", "answer", "gold", "span", vague);
    EXPECT_EQ(r.verdict, Verdict::Incorrect);
    EXPECT_TRUE(r.parse_failed);
    EXPECT_EQ(vague.calls(), 2u);

    int n = 0;
    FunctionLlm second("second", [&](std::string_view, std::string_view) {
        return std::string(n++ == 0 ? "" : "Mostly correct");
    });
    const auto ok = llm_judge("q", "answer", "gold", "span", second);
    EXPECT_EQ(ok.verdict, Verdict::MostlyCorrect);
    EXPECT_FALSE(ok.parse_failed);
}

TEST(Judge, PromptCarriesAllFourParts) {
    const auto [system, user] = judge_prompt("Qual?", "candidata", "referência", "trecho de apoio");
    const auto blocks = extract_blocks(user);
    ASSERT_EQ(blocks.size(), 3u);
    EXPECT_EQ(blocks[0], "candidata");
    EXPECT_EQ(blocks[1], "referência");
    EXPECT_EQ(blocks[2], "trecho de apoio");
    EXPECT_NE(user.find("Qual?"), std::string::npos);
    for (auto label : {"Totally correct", "Mostly correct", "Incorrect"}) EXPECT_NE(user.find(label), std::string::npos);
}

TEST(Correlation, MatchesOracleOnFixture) {
    const auto rows = parse_csv(read_file(RAGQA_TEST_DATA "/correlation_fixture.csv"));
    std::vector<std::string> names(rows[0].begin() + 1, rows[0].end());
    std::vector<std::vector<double>> cols(names.size());
    for (std::size_t r = 1; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < names.size(); ++c) cols[c].push_back(std::stod(rows[r][c + 1]));
    }
    ASSERT_EQ(cols[0].size(), 10u);
    const auto m = metric_correlation(names, cols);
    for (std::size_t i = 0; i < names.size(); ++i) {
        EXPECT_EQ(m.r[i][i], 1.0);
        for (std::size_t j = 0; j < names.size(); ++j) {
            ASSERT_TRUE(m.r[i][j]);
            EXPECT_NEAR(*m.r[i][j], oracle::pearson(cols[i], cols[j]), 1e-9);
            EXPECT_EQ(m.r[i][j], m.r[j][i]);
        }
    }
}

TEST(Correlation, AffineConstantAndErrors) {
    std::vector<double> x = {1, 2, 3, 4, 7};
    std::vector<double> y, c(5, 50.0);
    for (double v : x) y.push_back(2 * v + 3);
    const auto m = metric_correlation({"x", "y", "c"}, {x, y, c});
    EXPECT_NEAR(*m.r[0][1], 1.0, 1e-12);
    EXPECT_FALSE(m.r[0][2]);
    EXPECT_FALSE(m.r[2][2]);
    EXPECT_EQ(m.constant_columns, std::vector<std::string>{"c"});
    EXPECT_TRUE(to_json(m)["r"][0][2].is_null());

    EXPECT_THROW(metric_correlation({"a", "b"}, {{1, 2}, {3, 4}}), EvaluationError);
    EXPECT_THROW(metric_correlation({"a", "b"}, {{1, 2, 3}, {3, 4}}), EvaluationError);
}

TEST(Correlation, HumanScoresCsv) {
    TempDir dir;
    fixtures::write_text(dir / "h.csv", "question_id,score\nq1,100\nq2,50\nq3,0\n");
    const auto h = load_human_scores(dir / "h.csv");
    EXPECT_EQ(h.size(), 3u);
    EXPECT_EQ(h.at("q2"), 50.0);
    fixtures::write_text(dir / "bad.csv", "question_id,score\nq1,75\n");
    EXPECT_THROW(load_human_scores(dir / "bad.csv"), EvaluationError);
    fixtures::write_text(dir / "dup.csv", "question_id,score\nq1,0\nq1,50\n");
    EXPECT_THROW(load_human_scores(dir / "dup.csv"), EvaluationError);
}

TEST(Experiment, PerfectPipelineOnGoldSubset) {
    const MockPipeline p;
    ASSERT_GE(p.ds.items.size(), 20u);
    const LossyRetriever lossy(p.bm25, p.ds);
    const auto reports = run_experiment(p.ds, p.setup(&lossy), std::vector<std::size_t>{3}, false);
    ASSERT_EQ(reports.size(), 1u);
    const auto& r = reports[0];
    EXPECT_TRUE(r.failures.empty());
    EXPECT_EQ(r.items.size(), p.ds.items.size());
    const auto& gold = r.aggregates.gold_in_context;
    ASSERT_GT(gold.n, 0u);
    EXPECT_DOUBLE_EQ(*gold.f1, 100.0);
    EXPECT_DOUBLE_EQ(*gold.judge, 100.0);
    EXPECT_LT(gold.n, r.aggregates.all.n);
    EXPECT_GE(*gold.f1, *r.aggregates.all.f1);
    EXPECT_GE(*gold.judge, *r.aggregates.all.judge);
    EXPECT_GE(*gold.cosine, *r.aggregates.all.cosine);
    for (const auto& item : r.items) {
        EXPECT_EQ(item.judge_points, judge_points(item.judge));
        for (const auto& id : item.chunk_ids) EXPECT_NE(p.chunks.find(id), nullptr);
    }
}

TEST(Experiment, RetrieverThatNeverFindsGold) {
    const MockPipeline p;
    std::vector<std::string> ids;
    std::set<std::string> golds;
    for (const auto& item : p.ds.items) golds.insert(item.gold_chunk_id);
    for (const auto& c : p.chunks.chunks()) {
        if (!golds.count(c.id)) ids.push_back(c.id);
    }
    ASSERT_GE(ids.size(), 1u);
    const RandomRetriever no_gold(ids, 1);
    const auto r = evaluate_generation(p.ds, p.setup(&no_gold), 1);
    EXPECT_EQ(r.aggregates.gold_in_context.n, 0u);
    EXPECT_FALSE(r.aggregates.gold_in_context.f1);
    const auto csv = parse_csv(table3_csv(std::vector<GenReport>{r}));
    ASSERT_EQ(csv.size(), 3u);
    EXPECT_EQ(csv[2][0], "gold_in_context");
    EXPECT_EQ(csv[2][4], "0");
    EXPECT_EQ(csv[2][5], "");
}

TEST(Experiment, AblationMakesNoRetrieverCalls) {
    const MockPipeline p;
    const CountingRetriever counting(p.bm25);
    const auto reports = run_experiment(p.ds, p.setup(&counting), std::vector<std::size_t>{}, true);
    ASSERT_EQ(reports.size(), 1u);
    EXPECT_EQ(counting.calls(), 0u);
    EXPECT_EQ(reports[0].k(), 0u);
    EXPECT_EQ(reports[0].config["retriever"], "none");
    for (const auto& item : reports[0].items) EXPECT_TRUE(item.chunk_ids.empty());
    const auto csv = parse_csv(table3_csv(reports));
    ASSERT_EQ(csv.size(), 2u);
    EXPECT_EQ(csv[1][0], "no_context");
    EXPECT_EQ(csv[1][2], "0");
}

TEST(Experiment, ReportRoundTripRecomputesExactly) {
    const MockPipeline p;
    const auto reports = run_experiment(p.ds, p.setup(&p.bm25), std::vector<std::size_t>{3, 5}, true);
    ASSERT_EQ(reports.size(), 3u);
    TempDir dir;
    for (const auto& r : reports) {
        const auto path = dir / ("report_k" + std::to_string(r.k()) + ".json");
        save_report(to_json(r), r.failures, path);
        const GenReport back = gen_report_from_json(json::parse(read_file(path)));
        EXPECT_EQ(recompute_aggregates(back.items), back.aggregates);
        EXPECT_EQ(back.aggregates, r.aggregates);
        EXPECT_EQ(back.items.size(), r.items.size());
        EXPECT_TRUE(std::is_sorted(back.items.begin(), back.items.end(), [](const auto& a, const auto& b) {
            return a.question_id < b.question_id;
        }));
    }
}

TEST(Experiment, ProviderFailuresGoToManifest) {
    MockPipeline p;
    std::atomic<int> n{0};
    FunctionLlm flaky("flaky", [&](std::string_view, std::string_view user) {
        return n++ % 4 == 0 ? std::string() : std::string(extract_blocks(user).front());
    });
    auto s = p.setup(&p.bm25);
    s.generator = &flaky;
    const auto r = evaluate_generation(p.ds, s, 3);
    EXPECT_GT(r.failures.size(), 0u);
    EXPECT_EQ(r.failures.size() + r.items.size(), p.ds.items.size());
    for (const auto& f : r.failures) {
        EXPECT_EQ(f["stage"], "generation");
        EXPECT_EQ(f["error_kind"], "empty_response");
        EXPECT_EQ(f["prompt_sha256"].get<std::string>().size(), 64u);
    }
    TempDir dir;
    save_report(to_json(r), r.failures, dir / "report.json");
    EXPECT_EQ(read_jsonl(dir / "report.failures.jsonl").size(), r.failures.size());
}

TEST(Experiment, FingerprintMismatchRejected) {
    const MockPipeline p;
    const ChunkSet other = fixtures::toy_chunks(500);
    auto s = p.setup(&p.bm25);
    s.chunks = &other;
    EXPECT_THROW(run_experiment(p.ds, s, std::vector<std::size_t>{3}, false), FingerprintMismatch);
}

TEST(Experiment, PublishedValuesShownForReferenceLabel) {
    const MockPipeline p;
    auto s = p.setup(&p.bm25);
    s.reference_label = "GPT-3.5";
    const auto r = evaluate_generation(p.ds, s, 8);
    const auto csv = parse_csv(table3_csv(std::vector<GenReport>{r}));
    EXPECT_EQ(csv[1][8], "36.24");
    EXPECT_EQ(csv[1][9], "89.56");
    EXPECT_EQ(csv[1][10], "22.04");
    EXPECT_EQ(csv[2][10], "50.24");
}

TEST(RetrievalReport, CurvesMonotoneAndShaped) {
    const MockPipeline p;
    std::vector<RetrievalReport> reports;
    for (std::size_t size : {400, 1000}) {
        const ChunkSet target = fixtures::toy_chunks(size);
        const auto index = build_bm25(target.chunks());
        const Bm25Retriever bm25(index);
        reports.push_back(evaluate_retrieval(p.ds, p.chunks, target, bm25, QuestionVariant::Original, 100));
        const RandomRetriever random(target.ids(), 3);
        reports.push_back(evaluate_retrieval(p.ds, p.chunks, target, random, QuestionVariant::Original, 100));
    }
    for (const auto& r : reports) {
        ASSERT_EQ(r.accuracy.size(), 100u);
        double prev = 0;
        for (const auto& [k, acc] : r.accuracy) {
            EXPECT_GE(acc, prev);
            prev = acc;
        }
        const auto back = retrieval_report_from_json(to_json(r));
        EXPECT_EQ(back.accuracy, r.accuracy);
    }
    EXPECT_GT(reports[0].accuracy.at(5), reports[1].accuracy.at(5));
    const auto curve = parse_csv(topk_curve_csv(reports));
    EXPECT_EQ(curve.size(), 1 + 100 * reports.size());
    const auto t2 = parse_csv(table2_csv(reports));
    EXPECT_EQ(t2.size(), 1 + reports.size());
    EXPECT_EQ(reports[2].config["gold_remapped"], true);
}

TEST(RetrievalReport, ParaphrasedVariantSkipsFlagged) {
    MockPipeline p;
    QADataset ds = paraphrase_dataset(p.ds, *make_synonym_paraphrase_llm(), 4);
    ds.items[0].paraphrase.reset();
    ds.items[0].paraphrase_flagged = true;
    const auto r = evaluate_retrieval(ds, p.chunks, p.chunks, p.bm25, QuestionVariant::Paraphrased, 10);
    EXPECT_EQ(r.skipped, 1u);
    EXPECT_EQ(r.items.size(), ds.items.size() - 1);
}
