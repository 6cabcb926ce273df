#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "ragqa/corpus.hpp"
#include "ragqa/generation.hpp"
#include "ragqa/session_store.hpp"

namespace httplib {
class Server;
}

namespace ragqa {

/// Invalid request parameters; mapped to HTTP 400.
class RequestError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "bad_request"; }
};

/// The pipeline failed after the question was accepted. The user turn and an
/// assistant turn flagged as error are already stored; mapped to HTTP 502.
class AskFailed : public Error {
public:
    AskFailed(std::string what, std::string cause_kind, Message recorded)
        : Error(std::move(what)), cause_kind_(std::move(cause_kind)), recorded_(std::move(recorded)) {}
    const char* kind() const noexcept override { return "provider_failure"; }
    const std::string& cause_kind() const noexcept { return cause_kind_; }
    const Message& recorded() const noexcept { return recorded_; }

private:
    std::string cause_kind_;
    Message recorded_;
};

struct ServiceOptions {
    std::size_t default_k = 5;
    std::size_t max_k = 100;
    /// Code points of chunk text shown in search previews.
    std::size_t preview_chars = 280;
    /// Served at / when non-empty.
    std::filesystem::path static_dir;
};

/// Chat and search over one loaded corpus. Retrievers, corpus and model are
/// shared read-only; the session store is the only mutable state. History is
/// shown to the user but never fed back into the prompt.
class ChatService {
public:
    ChatService(const ChunkSet& chunks, std::map<std::string, const Retriever*, std::less<>> retrievers,
                std::string default_retriever, const LlmProvider& llm, PromptTemplate tmpl, SessionStore& store,
                ServiceOptions options = {});

    /// Throws SessionNotFound, RequestError or AskFailed.
    Message ask(std::string_view session_id, std::string_view question, std::optional<std::size_t> k = std::nullopt);

    /// {query, k, retriever, results: [{rank, chunk_id, score, doc_id, title, date, preview}]}.
    /// Throws RequestError for k = 0, k > max_k or an unknown retriever.
    json search(std::string_view query, std::size_t k, std::string_view retriever = {}) const;

    json health() const;

    /// Registers every /api route (and the static mount) on the server.
    void install(httplib::Server& server);

    SessionStore& store() { return store_; }
    const ServiceOptions& options() const { return options_; }

private:
    const Retriever& retriever(std::string_view id) const;

    const ChunkSet& chunks_;
    std::map<std::string, const Retriever*, std::less<>> retrievers_;
    std::string default_retriever_;
    const LlmProvider& llm_;
    PromptTemplate template_;
    SessionStore& store_;
    ServiceOptions options_;
};

}  // namespace ragqa
