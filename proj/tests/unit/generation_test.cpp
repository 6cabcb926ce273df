#include <gtest/gtest.h>

#include "oracles.hpp"
#include "ragqa/bm25.hpp"
#include "ragqa/generation.hpp"
#include "ragqa/mock_providers.hpp"
#include "ragqa/prompt_format.hpp"
#include "test_support.hpp"

using namespace ragqa;

namespace {

Chunk make_chunk(std::string id, std::string text, std::string title, std::string date) {
    Chunk c;
    c.id = std::move(id);
    c.doc_id = c.id.substr(0, c.id.find('#'));
    c.text = std::move(text);
    c.title = std::move(title);
    c.date = std::move(date);
    return c;
}

std::vector<Chunk> three_chunks() {
    return {make_chunk("a#0", "primeiro texto sobre bolsas", "Portaria A", "2020-01-01"),
            make_chunk("b#0", "segundo texto sobre matrícula", "Resolução B", "2021-02-02"),
            make_chunk("c#0", "terceiro texto sobre moradia", "Norma C", "2022-03-03")};
}

// Returns a fixed ranking regardless of the query.
class FixedRetriever final : public Retriever {
public:
    explicit FixedRetriever(std::vector<std::string> ids) : ids_(std::move(ids)) {}
    RetrievalResult search(std::string_view, std::size_t k) const override {
        RetrievalResult r;
        r.retriever_id = id();
        r.depth = k;
        for (std::size_t i = 0; i < ids_.size() && i < k; ++i) r.ranked.push_back({ids_[i], 1.0 / double(i + 1)});
        return r;
    }
    std::string id() const override { return "fixed"; }

private:
    std::vector<std::string> ids_;
};

}  // namespace

TEST(BuildPrompt, RendersChunksInRankOrderWithMetadata) {
    const auto chunks = three_chunks();
    const auto tmpl = PromptTemplate::portuguese();
    const Prompt p = build_prompt("Qual o prazo?", std::span<const Chunk>(chunks), tmpl);

    const auto blocks = extract_blocks(p.user);
    ASSERT_EQ(blocks.size(), 3u);
    std::size_t last = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(blocks[i], chunks[i].text);
        const auto header = "[" + std::to_string(i + 1) + "] " + chunks[i].title + " (" + chunks[i].date + ")";
        const auto pos = p.user.find(header);
        ASSERT_NE(pos, std::string::npos) << header;
        EXPECT_GT(pos, last);
        last = pos;
    }
    EXPECT_GT(p.user.find("Pergunta: Qual o prazo?"), p.user.rfind(">>>"));
    EXPECT_NE(p.user.find(tmpl.context_header), std::string::npos);
    EXPECT_EQ(p.chunk_ids, (std::vector<std::string>{"a#0", "b#0", "c#0"}));
    EXPECT_EQ(p.system, tmpl.system_preamble);
}

TEST(BuildPrompt, ZeroChunksOmitsContext) {
    const auto tmpl = PromptTemplate::portuguese();
    const Prompt p = build_prompt("Qual o prazo?", std::span<const Chunk>(), tmpl);
    EXPECT_EQ(p.user.find(tmpl.context_header), std::string::npos);
    EXPECT_TRUE(extract_blocks(p.user).empty());
    EXPECT_TRUE(p.chunk_ids.empty());
    EXPECT_EQ(extract_question_line(p.user), "Qual o prazo?");
}

TEST(BuildPrompt, Deterministic) {
    const auto chunks = three_chunks();
    const auto a = build_prompt("q", std::span<const Chunk>(chunks), PromptTemplate::portuguese());
    const auto b = build_prompt("q", std::span<const Chunk>(chunks), PromptTemplate::portuguese());
    EXPECT_EQ(a.system, b.system);
    EXPECT_EQ(a.user, b.user);
    EXPECT_EQ(a.sha256(), b.sha256());
}

TEST(BuildPrompt, SlotsInsideValuesStayLiteral) {
    std::vector<Chunk> chunks = {make_chunk("x#0", "texto com {title} e {question}", "{date}", "2020")};
    const auto p = build_prompt("{text}?", std::span<const Chunk>(chunks), PromptTemplate::english());
    EXPECT_NE(p.user.find("[1] {date} (2020)"), std::string::npos);
    EXPECT_EQ(extract_blocks(p.user)[0], "texto com {title} e {question}");
    EXPECT_EQ(extract_question_line(p.user), "{text}?");
}

TEST(PromptTemplate, ValidationVersionAndRoundTrip) {
    auto t = PromptTemplate::portuguese();
    EXPECT_NO_THROW(t.validate());
    EXPECT_NO_THROW(PromptTemplate::english().validate());
    EXPECT_NE(t.version(), PromptTemplate::english().version());
    EXPECT_EQ(t.version().size(), 16u);

    const auto back = prompt_template_from_json(to_json(t));
    EXPECT_EQ(back.version(), t.version());

    auto broken = t;
    broken.chunk_format = "{title} {text}";
    EXPECT_THROW(broken.validate(), GenerationError);
    auto j = to_json(t);
    j["question_format"] = "Q:";
    EXPECT_THROW(prompt_template_from_json(j), GenerationError);
    EXPECT_THROW(PromptTemplate::for_language("fr"), GenerationError);

    t.instructions += " ";
    EXPECT_NE(t.version(), PromptTemplate::portuguese().version());
}

TEST(Answer, EchoReturnsTopChunk) {
    const ChunkSet set(three_chunks(), ChunkingConfig{});
    const FixedRetriever retriever({"b#0", "a#0", "c#0"});
    const auto echo = make_echo_llm(EchoMode::FirstContextBlock);
    const auto a = answer("qualquer", retriever, set, *echo, 2, PromptTemplate::portuguese());
    EXPECT_EQ(a.answer, "segundo texto sobre matrícula");
    EXPECT_EQ(a.used_chunk_ids, (std::vector<std::string>{"b#0", "a#0"}));
    EXPECT_EQ(a.k, 2u);
    EXPECT_EQ(a.model_id, "echo");
    const auto p = build_prompt("qualquer", std::vector<const Chunk*>{&set.at("b#0"), &set.at("a#0")},
                                PromptTemplate::portuguese());
    EXPECT_EQ(a.prompt_hash, p.sha256());
}

TEST(Answer, ZeroKSkipsRetrieval) {
    const ChunkSet set(three_chunks(), ChunkingConfig{});
    const FixedRetriever fixed({"a#0"});
    const CountingRetriever counting(fixed);
    const auto echo = make_echo_llm(EchoMode::FirstContextBlock);
    const auto a = answer("Qual o prazo de matrícula?", counting, set, *echo, 0, PromptTemplate::portuguese());
    EXPECT_EQ(counting.calls(), 0u);
    EXPECT_TRUE(a.used_chunk_ids.empty());
    EXPECT_EQ(a.answer, "Qual o prazo de matrícula?");

    answer("outra", counting, set, *echo, 1, PromptTemplate::portuguese());
    EXPECT_EQ(counting.calls(), 1u);
}

TEST(Answer, ToyCorpusFindsGoldChunk) {
    const ChunkSet set = fixtures::toy_chunks();
    const auto index = build_bm25(set.chunks());
    const Bm25Retriever retriever(index);
    const auto echo = make_echo_llm(EchoMode::MarkedSpan);

    std::size_t checked = 0;
    for (const auto& doc : fixtures::toy_documents()) {
        for (auto span : extract_answer_spans(doc.body)) {
            const std::string fact(span);
            const std::string question = "O que a norma diz sobre: " + fact + "?";
            const auto expected = oracle::sort_all(oracle::bm25_all(set.chunks(), question), 3, true);
            const auto a = answer(question, retriever, set, *echo, 3, PromptTemplate::portuguese());

            ASSERT_EQ(a.used_chunk_ids.size(), expected.size());
            for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_EQ(a.used_chunk_ids[i], expected[i].chunk_id);
            const std::string marked = "[[" + fact + "]]";
            EXPECT_NE(set.at(a.used_chunk_ids[0]).text.find(marked), std::string::npos) << fact;
            EXPECT_EQ(a.answer, fact);
            for (const auto& id : a.used_chunk_ids) EXPECT_NE(set.find(id), nullptr);
            ++checked;
        }
    }
    EXPECT_EQ(checked, 40u);
}

TEST(Answer, TruncationDropsTailChunks) {
    const ChunkSet set(three_chunks(), ChunkingConfig{});
    const auto tmpl = PromptTemplate::portuguese();
    const auto two = build_prompt("q", std::vector<const Chunk*>{&set.at("a#0"), &set.at("b#0")}, tmpl);

    LlmConfig cfg;
    cfg.model_id = "limited";
    cfg.max_prompt_chars = two.size();
    FunctionLlm llm(cfg, [](std::string_view, std::string_view user) { return std::string(user); });
    const FixedRetriever retriever({"a#0", "b#0", "c#0"});

    const auto a = answer("q", retriever, set, llm, 3, tmpl);
    EXPECT_EQ(a.used_chunk_ids, (std::vector<std::string>{"a#0", "b#0"}));
    EXPECT_EQ(a.answer, two.user);
    EXPECT_EQ(a.retrieved.ranked.size(), 3u);

    cfg.max_prompt_chars = 10;
    FunctionLlm tiny(cfg, [](std::string_view, std::string_view) { return std::string("x"); });
    EXPECT_THROW(answer("q", retriever, set, tiny, 3, tmpl), GenerationError);
    EXPECT_EQ(tiny.calls(), 0u);
}

TEST(Answer, ProviderFailureCarriesProvenance) {
    const ChunkSet set(three_chunks(), ChunkingConfig{});
    const FixedRetriever retriever({"c#0"});
    const auto refusal = make_refusal_llm();
    try {
        answer("q", retriever, set, *refusal, 1, PromptTemplate::portuguese());
        FAIL();
    } catch (const AnswerError& e) {
        EXPECT_EQ(e.cause().error_kind(), ProviderError::Kind::EmptyResponse);
        EXPECT_EQ(e.chunk_ids(), std::vector<std::string>{"c#0"});
        EXPECT_EQ(e.model_id(), "refusal");
        EXPECT_EQ(e.prompt_hash().size(), 64u);
    }
}

TEST(Answer, UnknownChunkIsRejected) {
    const ChunkSet set(three_chunks(), ChunkingConfig{});
    const FixedRetriever retriever({"zzz#9"});
    const auto echo = make_echo_llm(EchoMode::FirstContextBlock);
    EXPECT_THROW(answer("q", retriever, set, *echo, 1, PromptTemplate::portuguese()), GenerationError);
}

TEST(AnswerAll, OrderAndPerJobFailures) {
    const ChunkSet set(three_chunks(), ChunkingConfig{});
    const FixedRetriever retriever({"a#0", "b#0"});
    FunctionLlm llm("picky", [](std::string_view, std::string_view user) {
        return extract_question_line(user).starts_with("fail") ? std::string() : extract_question_line(user);
    });
    std::vector<AnswerJob> jobs;
    for (int i = 0; i < 40; ++i) {
        jobs.push_back({"q" + std::to_string(i), (i % 7 == 3 ? "fail " : "ok ") + std::to_string(i)});
    }
    std::size_t last_progress = 0;
    const auto out = answer_all(jobs, retriever, set, llm, 2, PromptTemplate::portuguese(), 4,
                                [&](std::size_t n) { last_progress = n; });
    ASSERT_EQ(out.size(), jobs.size());
    EXPECT_EQ(last_progress, jobs.size());
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        EXPECT_EQ(out[i].question_id, jobs[i].question_id);
        if (i % 7 == 3) {
            EXPECT_FALSE(out[i].answer);
            EXPECT_EQ(out[i].error_kind, "empty_response");
            EXPECT_EQ(out[i].chunk_ids.size(), 2u);
        } else {
            ASSERT_TRUE(out[i].answer);
            EXPECT_EQ(out[i].answer->answer, jobs[i].question);
        }
    }
    EXPECT_EQ(llm.calls(), jobs.size());
}

TEST(AnswerRecord, Schema) {
    const ChunkSet set(three_chunks(), ChunkingConfig{});
    const FixedRetriever retriever({"a#0"});
    const auto echo = make_echo_llm(EchoMode::FirstContextBlock);
    const auto a = answer("q", retriever, set, *echo, 1, PromptTemplate::portuguese());
    const json r = answer_record("item-1", a);
    for (auto key : {"question_id", "question", "answer", "k", "model", "chunk_ids", "prompt_sha256", "ts"}) {
        EXPECT_TRUE(r.contains(key)) << key;
    }
    EXPECT_EQ(r["question_id"], "item-1");
    EXPECT_EQ(r["chunk_ids"], json::array({"a#0"}));
    EXPECT_EQ(r["k"], 1);
}
