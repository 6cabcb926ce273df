#include "ragqa/provider_factory.hpp"

#include "ragqa/mock_providers.hpp"
#include "ragqa/openai.hpp"

namespace ragqa {

bool is_mock_endpoint(std::string_view endpoint) {
    return endpoint == "mock" || endpoint.starts_with("mock:");
}

std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& cfg, std::shared_ptr<AuditLog> audit) {
    if (is_mock_endpoint(cfg.endpoint)) {
        return std::make_unique<HashEmbedder>(cfg.model_id, cfg.dims, std::move(audit), cfg.batch_size);
    }
    return std::make_unique<OpenAiEmbedder>(cfg, std::move(audit));
}

std::unique_ptr<LlmProvider> make_llm(const LlmConfig& cfg, std::shared_ptr<AuditLog> audit) {
    if (is_mock_endpoint(cfg.endpoint)) {
        auto llm = make_mock_llm(cfg.model_id, std::move(audit));
        if (!llm) {
            throw ProviderError(ProviderError::Kind::Protocol, "unknown mock model: " + cfg.model_id);
        }
        return llm;
    }
    return std::make_unique<OpenAiChat>(cfg, std::move(audit));
}

}  // namespace ragqa
