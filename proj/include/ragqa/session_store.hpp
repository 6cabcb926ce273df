#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "ragqa/error.hpp"
#include "ragqa/io.hpp"

namespace ragqa {

class StoreError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "store"; }
};

class SessionNotFound : public StoreError {
public:
    explicit SessionNotFound(std::string_view id) : StoreError("session not found: " + std::string(id)) {}
    const char* kind() const noexcept override { return "not_found"; }
};

struct Citation {
    std::string chunk_id;
    std::string title;
    std::string date;
    double score = 0.0;
};

struct Message {
    std::string role;  // user | assistant
    std::string text;
    std::vector<Citation> citations;
    std::int64_t ts_us = 0;  // microseconds since the epoch, assigned by the store
    bool error = false;      // assistant turn recording a failed ask
};

struct ChatSession {
    std::string id;
    std::string title;
    std::int64_t created_us = 0;
    std::vector<Message> messages;
};

struct SessionSummary {
    std::string id;
    std::string title;
    std::int64_t created_us = 0;
    std::size_t message_count = 0;
};

std::string format_timestamp(std::int64_t micros);
json to_json(const Citation& c);
json to_json(const Message& m);
json to_json(const ChatSession& s);
json to_json(const SessionSummary& s);
Message message_from_json(const json& j);

/// Directory-per-session store:
///   <root>/sessions/<id>/session.json    written once, atomically
///   <root>/sessions/<id>/messages.jsonl  append-only, fsynced per append
/// A trailing partial line left by a crash is cut off when the store opens.
/// One process at a time may hold a store (advisory lock on <root>/.lock).
class SessionStore {
public:
    explicit SessionStore(std::filesystem::path root);
    ~SessionStore();
    SessionStore(const SessionStore&) = delete;
    SessionStore& operator=(const SessionStore&) = delete;

    ChatSession create(std::string title = {});
    std::optional<ChatSession> get(std::string_view id) const;
    /// Newest first.
    std::vector<SessionSummary> list() const;
    /// True when the session existed.
    bool remove(std::string_view id);

    /// Appends in order with strictly increasing timestamps and returns the
    /// stored copies. Readers see all of the messages or none of them.
    /// Throws SessionNotFound.
    std::vector<Message> append(std::string_view id, std::vector<Message> messages);

    /// Holds the session's writer lock so that a read-compute-append cycle
    /// (an ask) is not interleaved with another one on the same session.
    struct Session;

    class WriteGuard {
    public:
        std::vector<Message> append(std::vector<Message> messages);

    private:
        friend class SessionStore;
        WriteGuard(SessionStore& store, std::shared_ptr<Session> session);
        SessionStore* store_;
        std::shared_ptr<Session> session_;
        std::unique_lock<std::mutex> lock_;
    };
    WriteGuard lock_for_write(std::string_view id);

    const std::filesystem::path& root() const { return root_; }
    /// Partial trailing lines dropped while opening.
    std::size_t recovered_lines() const { return recovered_lines_; }

private:
    std::shared_ptr<Session> find(std::string_view id) const;
    std::vector<Message> append_locked(Session& s, std::vector<Message> messages);
    void load();

    std::filesystem::path root_;
    int lock_fd_ = -1;
    mutable std::shared_mutex mutex_;
    std::map<std::string, std::shared_ptr<Session>, std::less<>> sessions_;
    std::size_t recovered_lines_ = 0;
};

}  // namespace ragqa
