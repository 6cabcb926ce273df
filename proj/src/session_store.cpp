#include "ragqa/session_store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <random>

namespace ragqa {

namespace fs = std::filesystem;

namespace {

std::int64_t now_micros() {
    using namespace std::chrono;
    return duration_cast<microseconds>(system_clock::now().time_since_epoch()).count();
}

std::string errno_text(const std::string& what, const fs::path& path) {
    return what + " " + path.string() + ": " + std::strerror(errno);
}

std::string new_session_id() {
    static thread_local std::mt19937_64 rng{std::random_device{}()};
    static constexpr char hex[] = "0123456789abcdef";
    std::string id(32, '0');
    for (std::size_t i = 0; i < id.size(); i += 16) {
        std::uint64_t v = rng();
        for (std::size_t j = 0; j < 16; ++j, v >>= 4) id[i + j] = hex[v & 0xf];
    }
    return id;
}

void fsync_dir(const fs::path& dir) {
    const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
    if (fd < 0) return;
    ::fsync(fd);
    ::close(fd);
}

void append_durably(const fs::path& path, std::string_view data) {
    const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd < 0) throw StoreError(errno_text("cannot open", path));
    std::size_t done = 0;
    while (done < data.size()) {
        const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
        if (n < 0) {
            if (errno == EINTR) continue;
            const std::string msg = errno_text("write failed", path);
            ::close(fd);
            throw StoreError(msg);
        }
        done += static_cast<std::size_t>(n);
    }
    if (::fsync(fd) != 0) {
        const std::string msg = errno_text("fsync failed", path);
        ::close(fd);
        throw StoreError(msg);
    }
    ::close(fd);
}

}  // namespace

std::string format_timestamp(std::int64_t micros) {
    const std::time_t secs = static_cast<std::time_t>(micros / 1000000);
    const int frac = static_cast<int>(micros % 1000000);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[40];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[56];
    std::snprintf(out, sizeof out, "%s.%06dZ", buf, frac);
    return out;
}

json to_json(const Citation& c) {
    return {{"chunk_id", c.chunk_id}, {"title", c.title}, {"date", c.date}, {"score", c.score}};
}

json to_json(const Message& m) {
    json cites = json::array();
    for (const auto& c : m.citations) cites.push_back(to_json(c));
    json j = {{"role", m.role},
              {"text", m.text},
              {"citations", std::move(cites)},
              {"ts", format_timestamp(m.ts_us)},
              {"ts_us", m.ts_us}};
    if (m.error) j["error"] = true;
    return j;
}

json to_json(const ChatSession& s) {
    json msgs = json::array();
    for (const auto& m : s.messages) msgs.push_back(to_json(m));
    return {{"id", s.id},
            {"title", s.title},
            {"created_at", format_timestamp(s.created_us)},
            {"messages", std::move(msgs)}};
}

json to_json(const SessionSummary& s) {
    return {{"id", s.id},
            {"title", s.title},
            {"created_at", format_timestamp(s.created_us)},
            {"message_count", s.message_count}};
}

Message message_from_json(const json& j) {
    Message m;
    m.role = j.at("role").get<std::string>();
    m.text = j.at("text").get<std::string>();
    for (const auto& c : j.value("citations", json::array())) {
        m.citations.push_back({c.at("chunk_id").get<std::string>(), c.value("title", ""),
                               c.value("date", ""), c.value("score", 0.0)});
    }
    m.ts_us = j.at("ts_us").get<std::int64_t>();
    m.error = j.value("error", false);
    return m;
}

struct SessionStore::Session {
    fs::path dir;
    std::mutex write_mutex;
    mutable std::shared_mutex data_mutex;
    ChatSession data;
    std::int64_t last_ts = 0;
    bool deleted = false;
};

SessionStore::SessionStore(fs::path root) : root_(std::move(root)) {
    std::error_code ec;
    fs::create_directories(root_ / "sessions", ec);
    if (ec) throw StoreError("cannot create store " + root_.string() + ": " + ec.message());
    const fs::path lock_path = root_ / ".lock";
    lock_fd_ = ::open(lock_path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (lock_fd_ < 0) throw StoreError(errno_text("cannot open", lock_path));
    if (::flock(lock_fd_, LOCK_EX | LOCK_NB) != 0) {
        ::close(lock_fd_);
        throw StoreError("session store is in use by another process: " + root_.string());
    }
    try {
        load();
    } catch (...) {
        ::close(lock_fd_);
        throw;
    }
}

SessionStore::~SessionStore() {
    if (lock_fd_ >= 0) ::close(lock_fd_);
}

void SessionStore::load() {
    for (const auto& entry : fs::directory_iterator(root_ / "sessions")) {
        if (!entry.is_directory()) continue;
        const fs::path dir = entry.path();
        const fs::path meta = dir / "session.json";
        if (!fs::exists(meta)) {
            // creation never completed
            fs::remove_all(dir);
            continue;
        }
        auto s = std::make_shared<Session>();
        s->dir = dir;
        const json j = json::parse(read_file(meta));
        s->data.id = j.at("id").get<std::string>();
        s->data.title = j.value("title", "");
        s->data.created_us = j.at("created_us").get<std::int64_t>();
        s->last_ts = s->data.created_us;

        const fs::path log = dir / "messages.jsonl";
        if (fs::exists(log)) {
            const std::string text = read_file(log);
            std::size_t good = 0;
            std::size_t pos = 0;
            while (pos < text.size()) {
                const std::size_t nl = text.find('\n', pos);
                if (nl == std::string::npos) break;
                const std::string_view line(text.data() + pos, nl - pos);
                if (!line.empty()) {
                    json rec = json::parse(line, nullptr, false);
                    if (rec.is_discarded()) {
                        throw StoreError("corrupt message log " + log.string() + " at byte " +
                                         std::to_string(pos));
                    }
                    Message m = message_from_json(rec);
                    s->last_ts = std::max(s->last_ts, m.ts_us);
                    s->data.messages.push_back(std::move(m));
                }
                pos = nl + 1;
                good = pos;
            }
            if (good < text.size()) {
                fs::resize_file(log, good);
                ++recovered_lines_;
            }
        }
        sessions_.emplace(s->data.id, std::move(s));
    }
}

std::shared_ptr<SessionStore::Session> SessionStore::find(std::string_view id) const {
    std::shared_lock lock(mutex_);
    const auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
}

ChatSession SessionStore::create(std::string title) {
    auto s = std::make_shared<Session>();
    std::unique_lock lock(mutex_);
    std::string id;
    do id = new_session_id();
    while (sessions_.count(id));
    s->data.id = id;
    s->data.title = std::move(title);
    s->data.created_us = now_micros();
    s->last_ts = s->data.created_us;
    s->dir = root_ / "sessions" / id;

    fs::create_directory(s->dir);
    append_durably(s->dir / "messages.jsonl", "");
    const json meta = {{"id", id}, {"title", s->data.title}, {"created_us", s->data.created_us}};
    write_file_atomic(s->dir / "session.json", meta.dump() + "\n");
    fsync_dir(root_ / "sessions");

    sessions_.emplace(id, s);
    return s->data;
}

std::optional<ChatSession> SessionStore::get(std::string_view id) const {
    const auto s = find(id);
    if (!s) return std::nullopt;
    std::shared_lock lock(s->data_mutex);
    if (s->deleted) return std::nullopt;
    return s->data;
}

std::vector<SessionSummary> SessionStore::list() const {
    std::vector<std::shared_ptr<Session>> all;
    {
        std::shared_lock lock(mutex_);
        for (const auto& [_, s] : sessions_) all.push_back(s);
    }
    std::vector<SessionSummary> out;
    for (const auto& s : all) {
        std::shared_lock lock(s->data_mutex);
        if (s->deleted) continue;
        out.push_back({s->data.id, s->data.title, s->data.created_us, s->data.messages.size()});
    }
    std::sort(out.begin(), out.end(), [](const SessionSummary& a, const SessionSummary& b) {
        if (a.created_us != b.created_us) return a.created_us > b.created_us;
        return a.id < b.id;
    });
    return out;
}

bool SessionStore::remove(std::string_view id) {
    std::shared_ptr<Session> s;
    {
        std::unique_lock lock(mutex_);
        const auto it = sessions_.find(id);
        if (it == sessions_.end()) return false;
        s = it->second;
        sessions_.erase(it);
    }
    std::unique_lock lock(s->data_mutex);
    s->deleted = true;
    // drop the metadata first so a crash mid-removal leaves an ignorable directory
    std::error_code ec;
    fs::remove(s->dir / "session.json", ec);
    fsync_dir(s->dir);
    fs::remove_all(s->dir, ec);
    fsync_dir(root_ / "sessions");
    return true;
}

std::vector<Message> SessionStore::append_locked(Session& s, std::vector<Message> messages) {
    std::unique_lock lock(s.data_mutex);
    if (s.deleted) throw SessionNotFound(s.data.id);
    std::int64_t ts = s.last_ts;
    std::string blob;
    for (auto& m : messages) {
        ts = std::max(now_micros(), ts + 1);
        m.ts_us = ts;
        blob += to_json(m).dump();
        blob += '\n';
    }
    append_durably(s.dir / "messages.jsonl", blob);
    s.last_ts = ts;
    for (const auto& m : messages) s.data.messages.push_back(m);
    return messages;
}

std::vector<Message> SessionStore::append(std::string_view id, std::vector<Message> messages) {
    auto guard = lock_for_write(id);
    return guard.append(std::move(messages));
}

SessionStore::WriteGuard SessionStore::lock_for_write(std::string_view id) {
    auto s = find(id);
    if (!s) throw SessionNotFound(id);
    return WriteGuard(*this, std::move(s));
}

SessionStore::WriteGuard::WriteGuard(SessionStore& store, std::shared_ptr<Session> session)
    : store_(&store), session_(std::move(session)), lock_(session_->write_mutex) {}

std::vector<Message> SessionStore::WriteGuard::append(std::vector<Message> messages) {
    return store_->append_locked(*session_, std::move(messages));
}

}  // namespace ragqa
