#include "ragqa/providers.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <thread>

#include "ragqa/io.hpp"
#include "ragqa/text.hpp"

namespace ragqa {

const char* to_string(ProviderError::Kind kind) {
    switch (kind) {
        case ProviderError::Kind::Timeout: return "timeout";
        case ProviderError::Kind::Transport: return "transport";
        case ProviderError::Kind::Http: return "http";
        case ProviderError::Kind::DimensionMismatch: return "dimension_mismatch";
        case ProviderError::Kind::EmptyResponse: return "empty_response";
        case ProviderError::Kind::Protocol: return "protocol";
    }
    return "unknown";
}

AuditLog::AuditLog(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
}

void AuditLog::record(std::string_view kind, std::string_view model, std::string_view prompt_sha,
                      double latency_ms, long tokens_in, long tokens_out, bool ok) {
    const json line = {{"ts", utc_timestamp()},       {"kind", kind},           {"model", model},
                       {"prompt_sha256", prompt_sha}, {"latency_ms", latency_ms}, {"tokens_in", tokens_in},
                       {"tokens_out", tokens_out},    {"ok", ok}};
    const std::string text = line.dump() + "\n";
    std::lock_guard lock(mutex_);
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    out << text;
}

std::string prompt_sha256(std::string_view system, std::string_view user) {
    std::string material(system);
    material += '\0';
    material += user;
    return sha256_hex(material);
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double cosine(std::span<const double> a, std::span<const double> b) {
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

Embedder::Embedder(EmbedderConfig cfg, std::shared_ptr<AuditLog> audit)
    : config_(std::move(cfg)), audit_(std::move(audit)) {
    if (config_.dims == 0) throw ProviderError(ProviderError::Kind::Protocol, "embedder dims must be positive");
    if (config_.batch_size == 0) throw ProviderError(ProviderError::Kind::Protocol, "embedder batch_size must be >= 1");
    if (config_.max_parallel == 0) config_.max_parallel = 1;
}

std::vector<Embedding> Embedder::embed(std::span<const std::string> texts) const {
    if (texts.empty()) throw ProviderError(ProviderError::Kind::Protocol, "embed: no input texts");
    const std::size_t n = texts.size();
    const std::size_t bs = config_.batch_size;
    const std::size_t batches = (n + bs - 1) / bs;

    std::vector<Embedding> out(n);
    std::vector<std::exception_ptr> errors(batches);
    std::atomic<std::size_t> next{0};

    auto run = [&] {
        for (std::size_t b = next++; b < batches; b = next++) {
            const std::size_t begin = b * bs;
            const std::size_t count = std::min(bs, n - begin);
            const auto slice = texts.subspan(begin, count);
            std::string material;
            for (const auto& t : slice) {
                material += t;
                material += '\0';
            }
            const auto started = std::chrono::steady_clock::now();
            try {
                Batch result = embed_batch(slice);
                if (result.vectors.size() != count) {
                    throw ProviderError(ProviderError::Kind::Protocol,
                                        "embedder returned " + std::to_string(result.vectors.size()) +
                                            " vectors for " + std::to_string(count) + " inputs");
                }
                for (std::size_t i = 0; i < count; ++i) {
                    auto& v = result.vectors[i];
                    if (v.size() != config_.dims) {
                        throw ProviderError(ProviderError::Kind::DimensionMismatch,
                                            "embedding dimension mismatch: expected " + std::to_string(config_.dims) +
                                                ", got " + std::to_string(v.size()));
                    }
                    for (double x : v) {
                        if (!std::isfinite(x)) {
                            throw ProviderError(ProviderError::Kind::Protocol, "embedder returned a non-finite value");
                        }
                    }
                    out[begin + i] = std::move(v);
                }
                if (audit_) {
                    audit_->record("embed", config_.model_id, sha256_hex(material), elapsed_ms(started),
                                   result.tokens_in, 0, true);
                }
            } catch (...) {
                if (audit_) audit_->record("embed", config_.model_id, sha256_hex(material), elapsed_ms(started), 0, 0, false);
                errors[b] = std::current_exception();
            }
        }
    };

    const std::size_t workers = std::min(config_.max_parallel, batches);
    if (workers <= 1) {
        run();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run);
    }

    std::vector<std::size_t> failed;
    std::exception_ptr first;
    for (std::size_t b = 0; b < batches; ++b) {
        if (!errors[b]) continue;
        if (!first) first = errors[b];
        for (std::size_t i = b * bs; i < std::min(n, (b + 1) * bs); ++i) failed.push_back(i);
    }
    if (first) {
        try {
            std::rethrow_exception(first);
        } catch (ProviderError& e) {
            ProviderError copy = e;
            copy.failed_indices = std::move(failed);
            throw copy;
        } catch (const std::exception& e) {
            ProviderError wrapped(ProviderError::Kind::Protocol, e.what());
            wrapped.failed_indices = std::move(failed);
            throw wrapped;
        }
    }
    return out;
}

Embedding Embedder::embed_one(std::string_view text) const {
    const std::string owned(text);
    return std::move(embed(std::span<const std::string>(&owned, 1)).front());
}

LlmProvider::LlmProvider(LlmConfig cfg, std::shared_ptr<AuditLog> audit)
    : config_(std::move(cfg)), audit_(std::move(audit)) {
    if (config_.temperature < 0.0) throw ProviderError(ProviderError::Kind::Protocol, "temperature must be >= 0");
}

ChatExchange LlmProvider::complete(std::string_view system, std::string_view user) const {
    const std::string hash = audit_ ? prompt_sha256(system, user) : std::string();
    const auto started = std::chrono::steady_clock::now();
    Completion c;
    try {
        c = do_complete(system, user);
    } catch (...) {
        if (audit_) audit_->record("complete", config_.model_id, hash, elapsed_ms(started), 0, 0, false);
        throw;
    }
    const double ms = elapsed_ms(started);
    const bool ok = !trim(c.text).empty();
    if (audit_) audit_->record("complete", config_.model_id, hash, ms, c.tokens_in, c.tokens_out, ok);
    if (!ok) {
        throw ProviderError(ProviderError::Kind::EmptyResponse, "model " + config_.model_id + " returned an empty response");
    }
    ChatExchange ex;
    ex.system = std::string(system);
    ex.user = std::string(user);
    ex.response = std::move(c.text);
    ex.tokens_in = c.tokens_in;
    ex.tokens_out = c.tokens_out;
    ex.latency = std::chrono::milliseconds(static_cast<long>(ms));
    return ex;
}

}  // namespace ragqa
