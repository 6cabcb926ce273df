#pragma once

#include <memory>
#include <string>

#include "ragqa/providers.hpp"

namespace ragqa {

/// Reads PROVIDER_API_KEY; empty when unset.
std::string api_key_from_env();

/// Client for POST {endpoint}/v1/embeddings in the OpenAI-compatible schema.
/// Transport failures, timeouts, 429 and 5xx are retried with exponential
/// backoff; other HTTP errors surface immediately with status and body.
class OpenAiEmbedder final : public Embedder {
public:
    OpenAiEmbedder(EmbedderConfig cfg, std::shared_ptr<AuditLog> audit, std::string api_key = api_key_from_env());

protected:
    Batch embed_batch(std::span<const std::string> texts) const override;

private:
    std::string api_key_;
};

/// Client for POST {endpoint}/v1/chat/completions.
class OpenAiChat final : public LlmProvider {
public:
    OpenAiChat(LlmConfig cfg, std::shared_ptr<AuditLog> audit, std::string api_key = api_key_from_env());

protected:
    Completion do_complete(std::string_view system, std::string_view user) const override;

private:
    std::string api_key_;
};

}  // namespace ragqa
