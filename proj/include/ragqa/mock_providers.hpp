#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <string>
#include <string_view>

#include "ragqa/providers.hpp"

namespace ragqa {

/// Deterministic offline embedder. Each token and each character trigram of
/// the padded token ("<word>") is hashed with a seed derived from the model id
/// into one of `dims` buckets with a +/-1 sign; the sum is L2-normalized.
/// Texts that share more n-grams therefore have higher cosine similarity.
/// Texts without tokens embed to the zero vector.
class HashEmbedder final : public Embedder {
public:
    HashEmbedder(std::string model_id, std::size_t dims, std::shared_ptr<AuditLog> audit = nullptr,
                 std::size_t batch_size = 32);

    Embedding vector_for(std::string_view text) const;

protected:
    Batch embed_batch(std::span<const std::string> texts) const override;

private:
    std::uint64_t seed_;
};

/// LLM whose response is computed by a caller-supplied function.
class FunctionLlm final : public LlmProvider {
public:
    using Fn = std::function<std::string(std::string_view system, std::string_view user)>;
    FunctionLlm(std::string model_id, Fn fn, std::shared_ptr<AuditLog> audit = nullptr);
    FunctionLlm(LlmConfig cfg, Fn fn, std::shared_ptr<AuditLog> audit = nullptr);

    std::size_t calls() const { return calls_.load(); }

protected:
    Completion do_complete(std::string_view system, std::string_view user) const override;

private:
    Fn fn_;
    mutable std::atomic<std::size_t> calls_{0};
};

enum class EchoMode {
    /// Text of the first context block; the question when there is no context.
    FirstContextBlock,
    /// The [[...]] span inside the context that shares the most tokens with the
    /// question (earliest wins ties); the question when there is no context.
    MarkedSpan,
};

std::unique_ptr<LlmProvider> make_echo_llm(EchoMode mode, std::shared_ptr<AuditLog> audit = nullptr);

/// Always answers with an empty string.
std::unique_ptr<LlmProvider> make_refusal_llm(std::shared_ptr<AuditLog> audit = nullptr);

/// Grades the first delimited block (candidate) against the second (gold) by
/// token F1: identical token multisets give "Totally correct", F1 >= 50 gives
/// "Mostly correct", anything else "Incorrect".
std::unique_ptr<LlmProvider> make_honest_judge_llm(std::shared_ptr<AuditLog> audit = nullptr);

enum class QaMockMode { Canonical, MissingAnswer, SpanNotInText };

/// Question generator for the dataset pipeline. Picks the first [[...]] span of
/// the chunk in the prompt (else the first sentence of at least eight words)
/// and emits it as PERGUNTA/RESPOSTA/TRECHO.
std::unique_ptr<LlmProvider> make_structured_qa_llm(QaMockMode mode = QaMockMode::Canonical,
                                                    std::shared_ptr<AuditLog> audit = nullptr);

/// Paraphrase mocks: the synonym mock rewrites the question in the first block,
/// the identity mock returns it unchanged.
std::unique_ptr<LlmProvider> make_synonym_paraphrase_llm(std::shared_ptr<AuditLog> audit = nullptr);
std::unique_ptr<LlmProvider> make_identity_paraphrase_llm(std::shared_ptr<AuditLog> audit = nullptr);

/// Resolves a mock model name ("echo", "echo-span", "refusal", "judge",
/// "structured", "synonym", "identity"); null when the name is not a mock.
std::unique_ptr<LlmProvider> make_mock_llm(std::string_view name, std::shared_ptr<AuditLog> audit = nullptr);

}  // namespace ragqa
