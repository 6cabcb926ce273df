#include "ragqa/generation.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>

#include "ragqa/parallel.hpp"
#include "ragqa/prompt_format.hpp"
#include "ragqa/text.hpp"

namespace ragqa {

namespace {

using Slot = std::pair<std::string_view, std::string_view>;

// Single pass, so slot-like text inside a value is never expanded again.
std::string expand(std::string_view format, std::initializer_list<Slot> slots) {
    std::string out;
    out.reserve(format.size() + 256);
    std::size_t i = 0;
    while (i < format.size()) {
        if (format[i] == '{') {
            const auto close = format.find('}', i);
            if (close != std::string_view::npos) {
                const auto name = format.substr(i + 1, close - i - 1);
                const auto it = std::find_if(slots.begin(), slots.end(), [&](const Slot& s) { return s.first == name; });
                if (it != slots.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out += format[i++];
    }
    return out;
}

bool has_slot(std::string_view format, std::string_view name) {
    return format.find("{" + std::string(name) + "}") != std::string_view::npos;
}

}  // namespace

void PromptTemplate::validate() const {
    for (auto slot : {"title", "date", "text"}) {
        if (!has_slot(chunk_format, slot)) {
            throw GenerationError("prompt template: chunk_format lacks {" + std::string(slot) + "}");
        }
    }
    if (!has_slot(question_format, "question")) {
        throw GenerationError("prompt template: question_format lacks {question}");
    }
}

std::string PromptTemplate::version() const {
    return sha256_hex(to_json(*this).dump()).substr(0, 16);
}

PromptTemplate PromptTemplate::portuguese() {
    PromptTemplate t;
    t.language = "pt";
    t.system_preamble =
        "Você é um assistente virtual da Universidade de São Paulo (USP). A USP é uma universidade pública "
        "do estado de São Paulo, com campi na capital e no interior, e suas normas são publicadas em "
        "resoluções, portarias e regimentos. Você ajuda estudantes, docentes e funcionários a entender "
        "essas normas.";
    t.instructions =
        "Responda à pergunta usando somente as informações dos trechos de documentos abaixo. "
        "Se os trechos não trouxerem a resposta, diga que não encontrou a informação. "
        "Seja direto e responda sempre em português.";
    t.no_context_instructions =
        "Responda à pergunta com o que você sabe sobre as normas da USP. "
        "Se não souber, diga que não sabe. Seja direto e responda sempre em português.";
    t.context_header = "Trechos de documentos:";
    t.chunk_format = "[{rank}] {title} ({date})\n{text}";
    t.question_format = "Pergunta: {question}";
    return t;
}

PromptTemplate PromptTemplate::english() {
    PromptTemplate t;
    t.language = "en";
    t.system_preamble =
        "You are a virtual assistant for the University of São Paulo (USP). USP is a public university in "
        "the state of São Paulo, with campuses in the capital and the countryside, and its rules are "
        "published as resolutions, ordinances and bylaws. You help students, faculty and staff "
        "understand those rules.";
    t.instructions =
        "Answer the question using only the information in the document excerpts below. "
        "If the excerpts do not contain the answer, say that you could not find it. "
        "Be direct and always answer in English.";
    t.no_context_instructions =
        "Answer the question from what you know about USP rules. "
        "If you do not know, say so. Be direct and always answer in English.";
    t.context_header = "Document excerpts:";
    t.chunk_format = "[{rank}] {title} ({date})\n{text}";
    t.question_format = "Question: {question}";
    return t;
}

PromptTemplate PromptTemplate::for_language(std::string_view language) {
    if (language == "pt") return portuguese();
    if (language == "en") return english();
    throw GenerationError("unknown prompt language '" + std::string(language) + "' (expected pt or en)");
}

json to_json(const PromptTemplate& t) {
    return {{"language", t.language},
            {"system_preamble", t.system_preamble},
            {"instructions", t.instructions},
            {"no_context_instructions", t.no_context_instructions},
            {"context_header", t.context_header},
            {"chunk_format", t.chunk_format},
            {"question_format", t.question_format},
            {"no_context_variant", t.no_context_variant},
            {"reconstructed", t.reconstructed}};
}

PromptTemplate prompt_template_from_json(const json& j) {
    PromptTemplate t = PromptTemplate::for_language(j.value("language", std::string("pt")));
    auto take = [&](const char* key, std::string& field) {
        if (j.contains(key)) field = j.at(key).get<std::string>();
    };
    take("system_preamble", t.system_preamble);
    take("instructions", t.instructions);
    take("no_context_instructions", t.no_context_instructions);
    take("context_header", t.context_header);
    take("chunk_format", t.chunk_format);
    take("question_format", t.question_format);
    t.no_context_variant = j.value("no_context_variant", t.no_context_variant);
    t.reconstructed = j.value("reconstructed", t.reconstructed);
    t.validate();
    return t;
}

Prompt build_prompt(std::string_view question, std::span<const Chunk* const> chunks, const PromptTemplate& tmpl) {
    Prompt p;
    p.system = tmpl.system_preamble;
    const bool with_context = !chunks.empty() || !tmpl.no_context_variant;
    p.user = with_context ? tmpl.instructions : tmpl.no_context_instructions;
    p.user += "\n\n";
    if (with_context) {
        p.user += tmpl.context_header;
        p.user += '\n';
        std::size_t rank = 0;
        for (const Chunk* c : chunks) {
            const std::string r = std::to_string(++rank);
            const std::string block = wrap_block(c->text);
            p.user += expand(tmpl.chunk_format, {{"rank", r}, {"title", c->title}, {"date", c->date}, {"text", block}});
            p.user += "\n\n";
            p.chunk_ids.push_back(c->id);
        }
    }
    p.user += expand(tmpl.question_format, {{"question", question}});
    return p;
}

Prompt build_prompt(std::string_view question, std::span<const Chunk> chunks, const PromptTemplate& tmpl) {
    std::vector<const Chunk*> ptrs;
    ptrs.reserve(chunks.size());
    for (const auto& c : chunks) ptrs.push_back(&c);
    return build_prompt(question, ptrs, tmpl);
}

Prompt fit_prompt(std::string_view question, std::vector<const Chunk*> chunks, const PromptTemplate& tmpl,
                  std::size_t max_chars) {
    Prompt p = build_prompt(question, chunks, tmpl);
    if (max_chars == 0) return p;
    while (p.size() > max_chars && !chunks.empty()) {
        chunks.pop_back();
        p = build_prompt(question, chunks, tmpl);
    }
    if (p.size() > max_chars) {
        throw GenerationError("prompt of " + std::to_string(p.size()) + " chars exceeds the limit of " +
                              std::to_string(max_chars) + " even without context");
    }
    return p;
}

AnswerError::AnswerError(const ProviderError& cause, std::string model_id, std::string prompt_hash,
                         std::vector<std::string> chunk_ids)
    : GenerationError(std::string("model ") + model_id + " failed (" + to_string(cause.error_kind()) +
                      "): " + cause.what()),
      cause_(cause), model_id_(std::move(model_id)), prompt_hash_(std::move(prompt_hash)),
      chunk_ids_(std::move(chunk_ids)) {}

GroundedAnswer answer(std::string_view question, const Retriever& retriever, const ChunkSet& chunks,
                      const LlmProvider& llm, std::size_t k, const PromptTemplate& tmpl) {
    GroundedAnswer out;
    out.question = std::string(question);
    out.k = k;
    out.model_id = llm.model_id();
    out.template_version = tmpl.version();

    std::vector<const Chunk*> context;
    if (k > 0) {
        out.retrieved = retriever.search(question, k);
        for (const auto& sc : out.retrieved.ranked) {
            const Chunk* c = chunks.find(sc.chunk_id);
            if (!c) {
                throw GenerationError("retriever " + out.retrieved.retriever_id + " returned unknown chunk " +
                                      sc.chunk_id);
            }
            context.push_back(c);
        }
    } else {
        out.retrieved.depth = 0;
        out.retrieved.retriever_id = "none";
    }

    Prompt prompt = fit_prompt(question, std::move(context), tmpl, llm.config().max_prompt_chars);
    out.prompt_hash = prompt.sha256();
    out.used_chunk_ids = prompt.chunk_ids;
    try {
        const ChatExchange ex = llm.complete(prompt.system, prompt.user);
        out.answer = ex.response;
        out.tokens_in = ex.tokens_in;
        out.tokens_out = ex.tokens_out;
        out.latency_ms = static_cast<double>(ex.latency.count());
    } catch (const ProviderError& e) {
        throw AnswerError(e, out.model_id, out.prompt_hash, out.used_chunk_ids);
    }
    return out;
}

std::vector<AnswerOutcome> answer_all(std::span<const AnswerJob> jobs, const Retriever& retriever,
                                      const ChunkSet& chunks, const LlmProvider& llm, std::size_t k,
                                      const PromptTemplate& tmpl, std::size_t max_parallel,
                                      const std::function<void(std::size_t)>& progress) {
    std::vector<AnswerOutcome> results(jobs.size());
    std::atomic<std::size_t> done{0};
    std::mutex progress_mutex;

    parallel_for(jobs.size(), max_parallel, [&](std::size_t i) {
        AnswerOutcome& r = results[i];
        r.question_id = jobs[i].question_id;
        try {
            r.answer = answer(jobs[i].question, retriever, chunks, llm, k, tmpl);
            r.prompt_hash = r.answer->prompt_hash;
            r.chunk_ids = r.answer->used_chunk_ids;
        } catch (const AnswerError& e) {
            r.error_kind = to_string(e.cause().error_kind());
            r.error = e.what();
            r.prompt_hash = e.prompt_hash();
            r.chunk_ids = e.chunk_ids();
        } catch (const Error& e) {
            r.error_kind = e.kind();
            r.error = e.what();
        }
        const std::size_t n = ++done;
        if (progress) {
            std::lock_guard lock(progress_mutex);
            progress(n);
        }
    });
    return results;
}

json answer_record(std::string_view question_id, const GroundedAnswer& a) {
    return {{"question_id", question_id},
            {"question", a.question},
            {"answer", a.answer},
            {"k", a.k},
            {"model", a.model_id},
            {"chunk_ids", a.used_chunk_ids},
            {"prompt_sha256", a.prompt_hash},
            {"ts", utc_timestamp()},
            {"retriever", a.retrieved.retriever_id},
            {"template_version", a.template_version}};
}

}  // namespace ragqa
