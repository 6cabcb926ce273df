#include "ragqa/openai.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "ragqa/io.hpp"

namespace ragqa {

std::string api_key_from_env() {
    const char* key = std::getenv("PROVIDER_API_KEY");
    return key ? std::string(key) : std::string();
}

namespace {

struct Endpoint {
    std::string origin;  // scheme://host[:port]
    std::string prefix;  // path before /v1/..., without trailing slash
};

Endpoint parse_endpoint(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) {
        throw ProviderError(ProviderError::Kind::Protocol, "endpoint must be an absolute URL: " + url);
    }
    const auto slash = url.find('/', scheme + 3);
    Endpoint e;
    e.origin = url.substr(0, slash);
    e.prefix = slash == std::string::npos ? std::string() : url.substr(slash);
    while (!e.prefix.empty() && e.prefix.back() == '/') e.prefix.pop_back();
    return e;
}

std::string api_path(const Endpoint& e, std::string_view resource) {
    std::string path = e.prefix;
    if (path.size() < 3 || path.compare(path.size() - 3, 3, "/v1") != 0) path += "/v1";
    path += resource;
    return path;
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

json post_json(const std::string& endpoint, std::string_view resource, const json& body,
               std::chrono::milliseconds timeout, const RetryPolicy& retry, const std::string& api_key) {
    const Endpoint e = parse_endpoint(endpoint);
    const std::string path = api_path(e, resource);
    const std::string payload = body.dump();

    httplib::Headers headers;
    if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);

    auto backoff = retry.initial_backoff;
    for (int attempt = 0;; ++attempt) {
        httplib::Client client(e.origin);
        const auto secs = timeout.count() / 1000;
        const auto usecs = (timeout.count() % 1000) * 1000;
        client.set_connection_timeout(secs, usecs);
        client.set_read_timeout(secs, usecs);
        client.set_write_timeout(secs, usecs);

        auto res = client.Post(path, headers, payload, "application/json");
        std::optional<ProviderError> failure;
        if (!res) {
            const auto err = res.error();
            const bool timed_out = err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read;
            failure.emplace(timed_out ? ProviderError::Kind::Timeout : ProviderError::Kind::Transport,
                            "request to " + e.origin + path + " failed: " + httplib::to_string(err));
        } else if (res->status != 200) {
            ProviderError http(ProviderError::Kind::Http,
                               "HTTP " + std::to_string(res->status) + " from " + e.origin + path + ": " + res->body,
                               res->status, res->body);
            if (!retryable_status(res->status)) throw http;
            failure.emplace(std::move(http));
        } else {
            try {
                return json::parse(res->body);
            } catch (const json::parse_error& pe) {
                throw ProviderError(ProviderError::Kind::Protocol, std::string("invalid JSON response: ") + pe.what(),
                                    res->status, res->body);
            }
        }
        if (attempt >= retry.max_retries) throw *failure;
        std::this_thread::sleep_for(backoff);
        backoff = std::chrono::milliseconds(static_cast<long>(std::llround(backoff.count() * retry.multiplier)));
    }
}

long usage_field(const json& response, const char* key) {
    const auto u = response.find("usage");
    if (u == response.end() || !u->is_object()) return 0;
    const auto it = u->find(key);
    return it != u->end() && it->is_number_integer() ? it->get<long>() : 0;
}

}  // namespace

OpenAiEmbedder::OpenAiEmbedder(EmbedderConfig cfg, std::shared_ptr<AuditLog> audit, std::string api_key)
    : Embedder(std::move(cfg), std::move(audit)), api_key_(std::move(api_key)) {}

Embedder::Batch OpenAiEmbedder::embed_batch(std::span<const std::string> texts) const {
    const json body = {{"model", config().model_id}, {"input", std::vector<std::string>(texts.begin(), texts.end())}};
    const json response = post_json(config().endpoint, "/embeddings", body, config().timeout, config().retry, api_key_);

    const auto data = response.find("data");
    if (data == response.end() || !data->is_array()) {
        throw ProviderError(ProviderError::Kind::Protocol, "embeddings response lacks a data array");
    }
    Batch batch;
    batch.vectors.resize(texts.size());
    std::vector<bool> filled(texts.size(), false);
    for (std::size_t pos = 0; pos < data->size(); ++pos) {
        const auto& item = (*data)[pos];
        const std::size_t index = item.value("index", pos);
        if (index >= texts.size() || filled[index]) {
            throw ProviderError(ProviderError::Kind::Protocol, "embeddings response has an invalid index");
        }
        batch.vectors[index] = item.at("embedding").get<Embedding>();
        filled[index] = true;
    }
    if (std::find(filled.begin(), filled.end(), false) != filled.end()) {
        throw ProviderError(ProviderError::Kind::Protocol, "embeddings response is missing entries");
    }
    batch.tokens_in = usage_field(response, "prompt_tokens");
    return batch;
}

OpenAiChat::OpenAiChat(LlmConfig cfg, std::shared_ptr<AuditLog> audit, std::string api_key)
    : LlmProvider(std::move(cfg), std::move(audit)), api_key_(std::move(api_key)) {}

LlmProvider::Completion OpenAiChat::do_complete(std::string_view system, std::string_view user) const {
    json messages = json::array();
    if (!system.empty()) messages.push_back({{"role", "system"}, {"content", system}});
    messages.push_back({{"role", "user"}, {"content", user}});
    const json body = {{"model", config().model_id},
                       {"messages", messages},
                       {"temperature", config().temperature},
                       {"max_tokens", config().max_output_tokens}};
    const json response = post_json(config().endpoint, "/chat/completions", body, config().timeout, config().retry, api_key_);

    const auto choices = response.find("choices");
    if (choices == response.end() || !choices->is_array()) {
        throw ProviderError(ProviderError::Kind::Protocol, "chat response lacks a choices array");
    }
    Completion c;
    if (!choices->empty()) {
        const auto& message = (*choices)[0].value("message", json::object());
        if (auto it = message.find("content"); it != message.end() && it->is_string()) c.text = it->get<std::string>();
    }
    c.tokens_in = usage_field(response, "prompt_tokens");
    c.tokens_out = usage_field(response, "completion_tokens");
    return c;
}

}  // namespace ragqa
