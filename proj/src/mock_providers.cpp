#include "ragqa/mock_providers.hpp"

#include <algorithm>
#include <unordered_map>

#include "ragqa/prompt_format.hpp"
#include "ragqa/text.hpp"

namespace ragqa {

namespace {

std::size_t shared_tokens(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::unordered_map<std::string_view, long> counts;
    for (const auto& t : a) ++counts[t];
    std::size_t shared = 0;
    for (const auto& t : b) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++shared;
        }
    }
    return shared;
}

std::string join(const std::vector<std::string>& words, std::size_t limit) {
    std::string out;
    for (std::size_t i = 0; i < std::min(limit, words.size()); ++i) {
        if (i) out += ' ';
        out += words[i];
    }
    return out;
}

}  // namespace

HashEmbedder::HashEmbedder(std::string model_id, std::size_t dims, std::shared_ptr<AuditLog> audit,
                           std::size_t batch_size)
    : Embedder(EmbedderConfig{"mock://hash", model_id, dims, batch_size, 1, std::chrono::milliseconds(0), {}},
               std::move(audit)),
      seed_(stable_hash(model_id)) {}

Embedding HashEmbedder::vector_for(std::string_view text) const {
    Embedding v(dims(), 0.0);
    auto add = [&](std::string_view feature) {
        const std::uint64_t h = stable_hash(feature, seed_);
        v[h % dims()] += (h >> 63) ? -1.0 : 1.0;
    };
    for (const auto& token : tokenize(text)) {
        add("w:" + token);
        const std::string padded = "<" + token + ">";
        const auto offsets = codepoint_offsets(padded);
        for (std::size_t i = 0; i + 3 < offsets.size(); ++i) {
            add("g:" + padded.substr(offsets[i], offsets[i + 3] - offsets[i]));
        }
    }
    const double norm = l2_norm(v);
    if (norm > 0.0) {
        for (double& x : v) x /= norm;
    }
    return v;
}

Embedder::Batch HashEmbedder::embed_batch(std::span<const std::string> texts) const {
    Batch b;
    b.vectors.reserve(texts.size());
    for (const auto& t : texts) {
        b.vectors.push_back(vector_for(t));
        b.tokens_in += static_cast<long>(word_count(t));
    }
    return b;
}

namespace {

LlmConfig mock_llm_config(const std::string& model_id) {
    LlmConfig cfg;
    cfg.endpoint = "mock://" + model_id;
    cfg.model_id = model_id;
    return cfg;
}

}  // namespace

FunctionLlm::FunctionLlm(std::string model_id, Fn fn, std::shared_ptr<AuditLog> audit)
    : LlmProvider(mock_llm_config(model_id), std::move(audit)), fn_(std::move(fn)) {}

FunctionLlm::FunctionLlm(LlmConfig cfg, Fn fn, std::shared_ptr<AuditLog> audit)
    : LlmProvider(std::move(cfg), std::move(audit)), fn_(std::move(fn)) {}

LlmProvider::Completion FunctionLlm::do_complete(std::string_view system, std::string_view user) const {
    ++calls_;
    Completion c;
    c.text = fn_(system, user);
    c.tokens_in = static_cast<long>(word_count(system) + word_count(user));
    c.tokens_out = static_cast<long>(word_count(c.text));
    return c;
}

std::unique_ptr<LlmProvider> make_echo_llm(EchoMode mode, std::shared_ptr<AuditLog> audit) {
    const char* name = mode == EchoMode::FirstContextBlock ? "echo" : "echo-span";
    return std::make_unique<FunctionLlm>(
        name,
        [mode](std::string_view, std::string_view user) -> std::string {
            const auto blocks = extract_blocks(user);
            const std::string question = extract_question_line(user);
            if (blocks.empty()) return question;
            if (mode == EchoMode::FirstContextBlock) return std::string(blocks.front());

            const auto q_tokens = tokenize(question);
            std::string_view best;
            std::size_t best_overlap = 0;
            bool found = false;
            for (auto block : blocks) {
                for (auto span : extract_answer_spans(block)) {
                    const std::size_t overlap = shared_tokens(q_tokens, tokenize(span));
                    if (!found || overlap > best_overlap) {
                        best = span;
                        best_overlap = overlap;
                        found = true;
                    }
                }
            }
            return found ? std::string(best) : std::string(blocks.front());
        },
        std::move(audit));
}

std::unique_ptr<LlmProvider> make_refusal_llm(std::shared_ptr<AuditLog> audit) {
    return std::make_unique<FunctionLlm>(
        "refusal", [](std::string_view, std::string_view) { return std::string(); }, std::move(audit));
}

std::unique_ptr<LlmProvider> make_honest_judge_llm(std::shared_ptr<AuditLog> audit) {
    return std::make_unique<FunctionLlm>(
        "judge",
        [](std::string_view, std::string_view user) -> std::string {
            const auto blocks = extract_blocks(user);
            if (blocks.size() < 2) return "Incorrect";
            const auto cand = tokenize(blocks[0]);
            const auto gold = tokenize(blocks[1]);
            if (cand.empty() || gold.empty()) return "Incorrect";
            const double shared = static_cast<double>(shared_tokens(cand, gold));
            const double f1 = 200.0 * shared / static_cast<double>(cand.size() + gold.size());
            if (shared == static_cast<double>(cand.size()) && cand.size() == gold.size()) return "Totally correct";
            if (f1 >= 50.0) return "Mostly correct";
            return "Incorrect";
        },
        std::move(audit));
}

namespace {

// First [[...]] span of the chunk, else its first sentence of >= 8 words, else
// the whole trimmed text. Always a verbatim substring of `text`.
std::string pick_span(std::string_view text) {
    const auto spans = extract_answer_spans(text);
    for (auto s : spans) {
        std::string t = trim(s);
        if (!t.empty()) return t;
    }
    std::size_t start = 0;
    while (start < text.size()) {
        auto end = text.find(". ", start);
        const std::size_t stop = end == std::string_view::npos ? text.size() : end + 1;
        std::string sentence = trim(text.substr(start, stop - start));
        if (word_count(sentence) >= 8) return sentence;
        start = stop;
    }
    return trim(text);
}

}  // namespace

std::unique_ptr<LlmProvider> make_structured_qa_llm(QaMockMode mode, std::shared_ptr<AuditLog> audit) {
    return std::make_unique<FunctionLlm>(
        "structured",
        [mode](std::string_view, std::string_view user) -> std::string {
            const auto blocks = extract_blocks(user);
            const std::string_view chunk = blocks.empty() ? std::string_view() : blocks.front();
            const std::string span = pick_span(chunk);
            const std::string question = "O que as normas estabelecem sobre " + join(tokenize(span), 8) + "?";
            std::string out = "PERGUNTA: " + question + "\n";
            if (mode != QaMockMode::MissingAnswer) out += "RESPOSTA: " + span + "\n";
            out += "TRECHO: " + (mode == QaMockMode::SpanNotInText ? std::string("trecho inexistente no documento") : span);
            return out;
        },
        std::move(audit));
}

std::unique_ptr<LlmProvider> make_synonym_paraphrase_llm(std::shared_ptr<AuditLog> audit) {
    return std::make_unique<FunctionLlm>(
        "synonym",
        [](std::string_view, std::string_view user) -> std::string {
            static const std::unordered_map<std::string, std::string> synonyms = {
                {"qual", "que"},         {"quais", "que"},          {"normas", "regras"},
                {"estabelecem", "determinam"}, {"sobre", "acerca de"}, {"prazo", "período"},
                {"universidade", "instituição"}, {"alunos", "estudantes"}, {"curso", "programa"},
                {"what", "which"},       {"rules", "norms"},        {"about", "regarding"}};
            const auto blocks = extract_blocks(user);
            if (blocks.empty()) return std::string();
            std::string out = "Em outras palavras,";
            for (const auto& t : tokenize(blocks.front())) {
                const auto it = synonyms.find(t);
                out += ' ';
                out += it == synonyms.end() ? t : it->second;
            }
            return out + "?";
        },
        std::move(audit));
}

std::unique_ptr<LlmProvider> make_identity_paraphrase_llm(std::shared_ptr<AuditLog> audit) {
    return std::make_unique<FunctionLlm>(
        "identity",
        [](std::string_view, std::string_view user) -> std::string {
            const auto blocks = extract_blocks(user);
            return blocks.empty() ? std::string() : std::string(blocks.front());
        },
        std::move(audit));
}

std::unique_ptr<LlmProvider> make_mock_llm(std::string_view name, std::shared_ptr<AuditLog> audit) {
    if (name == "echo") return make_echo_llm(EchoMode::FirstContextBlock, std::move(audit));
    if (name == "echo-span") return make_echo_llm(EchoMode::MarkedSpan, std::move(audit));
    if (name == "refusal") return make_refusal_llm(std::move(audit));
    if (name == "judge") return make_honest_judge_llm(std::move(audit));
    if (name == "structured") return make_structured_qa_llm(QaMockMode::Canonical, std::move(audit));
    if (name == "synonym") return make_synonym_paraphrase_llm(std::move(audit));
    if (name == "identity") return make_identity_paraphrase_llm(std::move(audit));
    return nullptr;
}

}  // namespace ragqa
