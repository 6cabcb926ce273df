#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ragqa/error.hpp"

namespace ragqa {

using Embedding = std::vector<double>;

class ProviderError : public Error {
public:
    enum class Kind { Timeout, Transport, Http, DimensionMismatch, EmptyResponse, Protocol };

    ProviderError(Kind kind, const std::string& what, int status = 0, std::string body = {})
        : Error(what), kind_(kind), status_(status), body_(std::move(body)) {}

    const char* kind() const noexcept override { return "provider"; }
    Kind error_kind() const noexcept { return kind_; }
    int status() const noexcept { return status_; }
    const std::string& body() const noexcept { return body_; }

    /// Input positions (for embed) whose batch failed.
    std::vector<std::size_t> failed_indices;

private:
    Kind kind_;
    int status_;
    std::string body_;
};

const char* to_string(ProviderError::Kind kind);

/// Append-only JSONL record of every provider call:
/// {ts, kind, model, prompt_sha256, latency_ms, tokens_in, tokens_out, ok}.
class AuditLog {
public:
    explicit AuditLog(std::filesystem::path path);

    void record(std::string_view kind, std::string_view model, std::string_view prompt_sha256,
                double latency_ms, long tokens_in, long tokens_out, bool ok);

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::mutex mutex_;
};

struct RetryPolicy {
    int max_retries = 3;
    std::chrono::milliseconds initial_backoff{250};
    double multiplier = 2.0;
};

struct EmbedderConfig {
    std::string endpoint;  // base URL, e.g. http://localhost:8080
    std::string model_id;
    std::size_t dims = 0;
    std::size_t batch_size = 32;
    std::size_t max_parallel = 4;
    std::chrono::milliseconds timeout{30000};
    RetryPolicy retry;
};

struct LlmConfig {
    std::string endpoint;
    std::string model_id;
    double temperature = 0.0;
    int max_output_tokens = 512;
    /// Upper bound on system + user prompt characters; 0 means unlimited.
    std::size_t max_prompt_chars = 0;
    std::chrono::milliseconds timeout{60000};
    RetryPolicy retry;
};

struct ChatExchange {
    std::string system;
    std::string user;
    std::string response;
    long tokens_in = 0;
    long tokens_out = 0;
    std::chrono::milliseconds latency{0};
};

/// Embedding service contract. embed() splits the input into batches, runs up
/// to max_parallel batches at once, and reassembles results in input order.
/// Implementations only provide embed_batch().
class Embedder {
public:
    Embedder(EmbedderConfig cfg, std::shared_ptr<AuditLog> audit);
    virtual ~Embedder() = default;

    std::vector<Embedding> embed(std::span<const std::string> texts) const;
    Embedding embed_one(std::string_view text) const;

    const EmbedderConfig& config() const { return config_; }
    const std::string& model_id() const { return config_.model_id; }
    std::size_t dims() const { return config_.dims; }

protected:
    struct Batch {
        std::vector<Embedding> vectors;
        long tokens_in = 0;
    };
    virtual Batch embed_batch(std::span<const std::string> texts) const = 0;

private:
    EmbedderConfig config_;
    std::shared_ptr<AuditLog> audit_;
};

/// Chat-completion contract. complete() times the call, rejects empty
/// responses with ProviderError::Kind::EmptyResponse and writes the audit record.
class LlmProvider {
public:
    LlmProvider(LlmConfig cfg, std::shared_ptr<AuditLog> audit);
    virtual ~LlmProvider() = default;

    ChatExchange complete(std::string_view system, std::string_view user) const;

    const LlmConfig& config() const { return config_; }
    const std::string& model_id() const { return config_.model_id; }

protected:
    struct Completion {
        std::string text;
        long tokens_in = 0;
        long tokens_out = 0;
    };
    virtual Completion do_complete(std::string_view system, std::string_view user) const = 0;

private:
    LlmConfig config_;
    std::shared_ptr<AuditLog> audit_;
};

/// Hash identifying a rendered prompt pair in audit logs and answer records.
std::string prompt_sha256(std::string_view system, std::string_view user);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);
/// Zero-norm inputs give 0.
double cosine(std::span<const double> a, std::span<const double> b);

}  // namespace ragqa
