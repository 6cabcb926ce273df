#pragma once

#include <memory>

#include "ragqa/providers.hpp"

namespace ragqa {

/// Endpoints of the form "mock" select the in-process mocks: the embedder
/// becomes a HashEmbedder and the LLM is looked up by model id in
/// make_mock_llm(). Anything else is an OpenAI-compatible base URL.
bool is_mock_endpoint(std::string_view endpoint);

std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& cfg, std::shared_ptr<AuditLog> audit = nullptr);

/// Throws ProviderError(Protocol) for an unknown mock name.
std::unique_ptr<LlmProvider> make_llm(const LlmConfig& cfg, std::shared_ptr<AuditLog> audit = nullptr);

}  // namespace ragqa
