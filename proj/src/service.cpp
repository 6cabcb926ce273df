#include "ragqa/service.hpp"

#include <httplib.h>

#include <charconv>

#include "ragqa/text.hpp"

namespace ragqa {

namespace {

std::string preview(std::string_view text, std::size_t max_cp) {
    const auto offsets = codepoint_offsets(text);
    if (offsets.size() <= max_cp) return std::string(text);
    return std::string(text.substr(0, offsets[max_cp])) + "…";
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, std::string_view message,
                json detail = json::object()) {
    send_json(res, status, {{"code", code}, {"message", message}, {"detail", std::move(detail)}});
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) throw RequestError("request body must be a JSON object");
    return body;
}

std::size_t parse_k(std::string_view text) {
    std::size_t k = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), k);
    if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) {
        throw RequestError("k must be a positive integer");
    }
    return k;
}

}  // namespace

ChatService::ChatService(const ChunkSet& chunks, std::map<std::string, const Retriever*, std::less<>> retrievers,
                         std::string default_retriever, const LlmProvider& llm, PromptTemplate tmpl,
                         SessionStore& store, ServiceOptions options)
    : chunks_(chunks),
      retrievers_(std::move(retrievers)),
      default_retriever_(std::move(default_retriever)),
      llm_(llm),
      template_(std::move(tmpl)),
      store_(store),
      options_(std::move(options)) {
    if (!retrievers_.count(default_retriever_)) {
        throw RequestError("default retriever not configured: " + default_retriever_);
    }
    template_.validate();
}

const Retriever& ChatService::retriever(std::string_view id) const {
    const auto it = retrievers_.find(id.empty() ? std::string_view(default_retriever_) : id);
    if (it == retrievers_.end()) throw RequestError("unknown retriever: " + std::string(id));
    return *it->second;
}

Message ChatService::ask(std::string_view session_id, std::string_view question, std::optional<std::size_t> k) {
    const std::string q = trim(question);
    if (q.empty()) throw RequestError("question must not be empty");
    const std::size_t depth = k.value_or(options_.default_k);
    if (depth > options_.max_k) throw RequestError("k must be at most " + std::to_string(options_.max_k));

    auto guard = store_.lock_for_write(session_id);
    Message user{"user", q, {}, 0, false};
    Message reply{"assistant", {}, {}, 0, false};
    std::string failure;
    std::string cause_kind;
    try {
        const GroundedAnswer a = answer(q, retriever({}), chunks_, llm_, depth, template_);
        reply.text = a.answer;
        for (const auto& id : a.used_chunk_ids) {
            const Chunk& c = chunks_.at(id);
            double score = 0.0;
            for (const auto& s : a.retrieved.ranked) {
                if (s.chunk_id == id) score = s.score;
            }
            reply.citations.push_back({id, c.title, c.date, score});
        }
    } catch (const AnswerError& e) {
        failure = e.what();
        cause_kind = to_string(e.cause().error_kind());
    } catch (const ProviderError& e) {
        failure = e.what();
        cause_kind = to_string(e.error_kind());
    } catch (const Error& e) {
        failure = e.what();
        cause_kind = e.kind();
    }

    if (!failure.empty()) {
        reply.text = "The answer could not be generated: " + failure;
        reply.error = true;
        auto stored = guard.append({std::move(user), std::move(reply)});
        throw AskFailed(failure, cause_kind, stored.back());
    }
    auto stored = guard.append({std::move(user), std::move(reply)});
    return stored.back();
}

json ChatService::search(std::string_view query, std::size_t k, std::string_view retriever_id) const {
    if (k == 0) throw RequestError("k must be a positive integer");
    if (k > options_.max_k) throw RequestError("k must be at most " + std::to_string(options_.max_k));
    if (trim(query).empty()) throw RequestError("q must not be empty");
    const Retriever& r = retriever(retriever_id);
    const RetrievalResult result = r.search(query, k);
    json rows = json::array();
    std::size_t rank = 0;
    for (const auto& s : result.ranked) {
        const Chunk& c = chunks_.at(s.chunk_id);
        rows.push_back({{"rank", ++rank},
                        {"chunk_id", s.chunk_id},
                        {"score", s.score},
                        {"doc_id", c.doc_id},
                        {"title", c.title},
                        {"date", c.date},
                        {"preview", preview(c.text, options_.preview_chars)}});
    }
    return {{"query", query}, {"k", k}, {"retriever", r.id()}, {"results", std::move(rows)}};
}

json ChatService::health() const {
    json ids = json::array();
    for (const auto& [id, _] : retrievers_) ids.push_back(id);
    return {{"status", "ok"},
            {"chunks", chunks_.size()},
            {"corpus_fingerprint", chunks_.fingerprint()},
            {"retrievers", std::move(ids)},
            {"default_retriever", default_retriever_},
            {"default_k", options_.default_k},
            {"model", llm_.model_id()},
            {"template_version", template_.version()}};
}

void ChatService::install(httplib::Server& server) {
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const RequestError& e) {
            send_error(res, 400, "bad_request", e.what());
        } catch (const SessionNotFound& e) {
            send_error(res, 404, "not_found", e.what());
        } catch (const AskFailed& e) {
            send_error(res, 502, "provider_failure", e.what(),
                       {{"cause", e.cause_kind()}, {"message", to_json(e.recorded())}});
        } catch (const Error& e) {
            send_error(res, 500, e.kind(), e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, "internal", e.what());
        }
    });

    server.Get("/api/health", [this](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, health());
    });

    server.Post("/api/sessions", [this](const httplib::Request& req, httplib::Response& res) {
        const json body = parse_body(req);
        std::string title;
        if (body.contains("title")) {
            if (!body["title"].is_string()) throw RequestError("title must be a string");
            title = body["title"].get<std::string>();
        }
        send_json(res, 201, to_json(store_.create(std::move(title))));
    });

    server.Get("/api/sessions", [this](const httplib::Request&, httplib::Response& res) {
        json rows = json::array();
        for (const auto& s : store_.list()) rows.push_back(to_json(s));
        send_json(res, 200, {{"sessions", std::move(rows)}});
    });

    server.Get("/api/sessions/:id", [this](const httplib::Request& req, httplib::Response& res) {
        const std::string& id = req.path_params.at("id");
        const auto s = store_.get(id);
        if (!s) throw SessionNotFound(id);
        send_json(res, 200, to_json(*s));
    });

    server.Delete("/api/sessions/:id", [this](const httplib::Request& req, httplib::Response& res) {
        const std::string& id = req.path_params.at("id");
        const bool existed = store_.remove(id);
        send_json(res, 200, {{"id", id}, {"deleted", existed}});
    });

    server.Post("/api/sessions/:id/ask", [this](const httplib::Request& req, httplib::Response& res) {
        const json body = parse_body(req);
        if (!body.contains("question") || !body["question"].is_string()) {
            throw RequestError("question must be a string");
        }
        std::optional<std::size_t> k;
        if (body.contains("k") && !body["k"].is_null()) {
            if (!body["k"].is_number_integer() || body["k"].get<long long>() < 0) {
                throw RequestError("k must be a non-negative integer");
            }
            k = body["k"].get<std::size_t>();
        }
        const Message m = ask(req.path_params.at("id"), body["question"].get<std::string>(), k);
        send_json(res, 200, to_json(m));
    });

    server.Get("/api/search", [this](const httplib::Request& req, httplib::Response& res) {
        const std::string q = req.get_param_value("q");
        const std::size_t k = req.has_param("k") ? parse_k(req.get_param_value("k")) : options_.default_k;
        send_json(res, 200, search(q, k, req.get_param_value("retriever")));
    });

    if (!options_.static_dir.empty()) {
        if (!server.set_mount_point("/", options_.static_dir.string())) {
            throw RequestError("static directory not found: " + options_.static_dir.string());
        }
    }
}

}  // namespace ragqa
