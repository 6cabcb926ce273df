#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ragqa/corpus.hpp"
#include "ragqa/error.hpp"
#include "ragqa/io.hpp"
#include "ragqa/providers.hpp"
#include "ragqa/retrieval.hpp"

namespace ragqa {

/// Prompt wording for the grounded assistant. chunk_format understands the
/// slots {rank}, {title}, {date} and {text}; {text} is rendered as a delimited
/// block. question_format understands {question}.
struct PromptTemplate {
    std::string language;  // "pt" or "en"
    std::string system_preamble;
    std::string instructions;
    std::string no_context_instructions;
    std::string context_header;
    std::string chunk_format;
    std::string question_format;
    /// With zero chunks, omit the context header entirely.
    bool no_context_variant = true;
    /// The shipped wording is our own; no published prompt exists to copy.
    bool reconstructed = true;

    /// Throws GenerationError when a required slot is missing.
    void validate() const;
    /// Content hash over every field, 16 hex chars.
    std::string version() const;

    static PromptTemplate portuguese();
    static PromptTemplate english();
    /// "pt" or "en"; throws GenerationError otherwise.
    static PromptTemplate for_language(std::string_view language);
};

json to_json(const PromptTemplate& t);
PromptTemplate prompt_template_from_json(const json& j);

struct Prompt {
    std::string system;
    std::string user;
    std::vector<std::string> chunk_ids;  // rank order, as rendered

    std::size_t size() const { return system.size() + user.size(); }
    std::string sha256() const { return prompt_sha256(system, user); }
};

/// Renders chunks in the order given, each with its title and date, followed
/// by the question. Deterministic.
Prompt build_prompt(std::string_view question, std::span<const Chunk* const> chunks, const PromptTemplate& tmpl);
Prompt build_prompt(std::string_view question, std::span<const Chunk> chunks, const PromptTemplate& tmpl);

/// Drops chunks from the tail until the prompt fits in max_chars (0 means no
/// limit). Throws GenerationError when even the context-free prompt is too long.
Prompt fit_prompt(std::string_view question, std::vector<const Chunk*> chunks, const PromptTemplate& tmpl,
                  std::size_t max_chars);

struct GroundedAnswer {
    std::string question;
    std::string answer;
    std::vector<std::string> used_chunk_ids;
    RetrievalResult retrieved;
    std::size_t k = 0;
    std::string model_id;
    std::string prompt_hash;
    std::string template_version;
    long tokens_in = 0;
    long tokens_out = 0;
    double latency_ms = 0.0;
};

/// Provider failure during answer(), carrying what was sent.
class AnswerError : public GenerationError {
public:
    AnswerError(const ProviderError& cause, std::string model_id, std::string prompt_hash,
                std::vector<std::string> chunk_ids);
    const ProviderError& cause() const noexcept { return cause_; }
    const std::string& model_id() const noexcept { return model_id_; }
    const std::string& prompt_hash() const noexcept { return prompt_hash_; }
    const std::vector<std::string>& chunk_ids() const noexcept { return chunk_ids_; }

private:
    ProviderError cause_;
    std::string model_id_;
    std::string prompt_hash_;
    std::vector<std::string> chunk_ids_;
};

/// Retrieve top-k, build the prompt, ask the model. With k = 0 the retriever
/// is not called. The answer is returned verbatim.
GroundedAnswer answer(std::string_view question, const Retriever& retriever, const ChunkSet& chunks,
                      const LlmProvider& llm, std::size_t k, const PromptTemplate& tmpl);

struct AnswerJob {
    std::string question_id;
    std::string question;
};

struct AnswerOutcome {
    std::string question_id;
    std::optional<GroundedAnswer> answer;
    std::string error_kind;  // empty on success
    std::string error;
    std::string prompt_hash;
    std::vector<std::string> chunk_ids;
};

/// Answers every job with up to max_parallel concurrent calls. Results are in
/// job order; failures are reported per job rather than thrown.
std::vector<AnswerOutcome> answer_all(std::span<const AnswerJob> jobs, const Retriever& retriever,
                                      const ChunkSet& chunks, const LlmProvider& llm, std::size_t k,
                                      const PromptTemplate& tmpl, std::size_t max_parallel,
                                      const std::function<void(std::size_t done)>& progress = {});

/// {question_id, question, answer, k, model, chunk_ids, prompt_sha256, ts, ...}
json answer_record(std::string_view question_id, const GroundedAnswer& a);

}  // namespace ragqa
