#include "cli.hpp"

#include <httplib.h>

#include <CLI11.hpp>
#include <atomic>
#include <csignal>
#include <iostream>
#include <map>
#include <thread>

#include "ragqa/bm25.hpp"
#include "ragqa/dataset.hpp"
#include "ragqa/evaluation.hpp"
#include "ragqa/generation.hpp"
#include "ragqa/provider_factory.hpp"
#include "ragqa/service.hpp"
#include "ragqa/settings.hpp"
#include "ragqa/text.hpp"
#include "ragqa/vector_index.hpp"

namespace ragqa::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kToolVersion = "0.1.0";

class UsageError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> out;
    for (const auto& part : split(s, ',')) {
        std::string t = trim(part);
        if (!t.empty()) out.push_back(std::move(t));
    }
    return out;
}

std::vector<std::size_t> split_sizes(std::string_view s, std::string_view what) {
    std::vector<std::size_t> out;
    for (const auto& part : split_list(s)) {
        Settings one;
        one.set("v", part);
        const std::size_t v = one.get_size("v", 0);
        if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
    }
    if (out.empty()) throw ConfigError(std::string(what) + " must list at least one value");
    return out;
}

std::string safe_name(std::string_view s) {
    std::string out;
    for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' ? c : '_';
    return out;
}

/// One subcommand invocation: resolved settings plus the manifest being built.
struct Context {
    std::string command;
    Settings settings;
    fs::path out_dir;
    json inputs = json::object();
    std::vector<fs::path> outputs;
    json effective = json::object();
    std::ostream& out;

    std::string get(std::string_view key, std::string fallback = {}) const {
        return settings.get_or(key, std::move(fallback));
    }

    fs::path input(std::string_view key, std::string_view flag) {
        const auto v = settings.get(key);
        if (!v || v->empty()) throw UsageError("missing required input " + std::string(flag));
        const fs::path p(*v);
        if (!fs::exists(p)) throw ConfigError("input not found: " + p.string());
        inputs[p.string()] = file_sha256(p);
        return p;
    }

    fs::path output(const std::string& name) {
        fs::create_directories(out_dir);
        const fs::path p = out_dir / name;
        outputs.push_back(p);
        return p;
    }

    void write_manifest() {
        if (outputs.empty()) return;
        json outs = json::object();
        for (const auto& p : outputs) {
            if (fs::exists(p)) outs[p.filename().string()] = file_sha256(p);
        }
        const json manifest = {{"command", command},
                               {"tool_version", kToolVersion},
                               {"inputs", inputs},
                               {"settings", settings.to_json()},
                               {"effective", effective},
                               {"outputs", std::move(outs)},
                               {"created_at", utc_timestamp()}};
        write_file_atomic(out_dir / (command + ".manifest.json"), manifest.dump(2) + "\n");
    }
};

ChunkingConfig chunking(const Settings& s) {
    ChunkingConfig cfg = ChunkingConfig::with_size(s.get_size("chunk_size", 2000));
    if (s.get("overlap")) cfg.overlap = s.get_size("overlap", cfg.overlap);
    cfg.validate();
    return cfg;
}

std::vector<Document> load_documents(Context& ctx) {
    const fs::path path = ctx.input("corpus_path", "--corpus");
    return ingest(path, ctx.get("corpus_format", "jsonl"));
}

std::shared_ptr<AuditLog> audit_log(const Settings& s) {
    const auto p = s.get("audit_log");
    return p && !p->empty() ? std::make_shared<AuditLog>(*p) : nullptr;
}

RetryPolicy retry_policy(const Settings& s) {
    RetryPolicy r;
    r.max_retries = static_cast<int>(s.get_size("max_retries", 3));
    r.initial_backoff = std::chrono::milliseconds(s.get_size("retry_backoff_ms", 250));
    return r;
}

EmbedderConfig embedder_config(const Settings& s, std::string model_override = {}) {
    EmbedderConfig c;
    c.endpoint = s.get_or("embedder_endpoint", "mock");
    c.model_id = model_override.empty() ? s.get_or("embedder_model", "hash-256") : std::move(model_override);
    c.dims = s.get_size("embedder_dims", 256);
    c.batch_size = s.get_size("embedder_batch_size", 32);
    c.max_parallel = s.get_size("max_parallel", 4);
    c.timeout = std::chrono::milliseconds(s.get_size("timeout_ms", 30000));
    c.retry = retry_policy(s);
    return c;
}

LlmConfig llm_config(const Settings& s, const std::string& role, const std::string& default_model) {
    LlmConfig c;
    c.endpoint = s.get_or(role + "_endpoint", "mock");
    c.model_id = s.get_or(role + "_model", default_model);
    c.temperature = s.get_double(role + "_temperature", 0.0);
    c.max_output_tokens = static_cast<int>(s.get_size(role + "_max_output_tokens", 512));
    c.max_prompt_chars = s.get_size(role + "_max_prompt_chars", 0);
    c.timeout = std::chrono::milliseconds(s.get_size("timeout_ms", 60000));
    c.retry = retry_policy(s);
    return c;
}

/// Owns everything a retriever needs to stay alive.
struct RetrieverBundle {
    std::unique_ptr<InvertedIndex> bm25;
    std::unique_ptr<Embedder> embedder;
    std::unique_ptr<VectorIndex> vectors;
    std::unique_ptr<Retriever> retriever;
    std::string label;
};

RetrieverBundle make_retriever(Context& ctx, std::string_view spec, const ChunkSet& chunks, bool use_index_file) {
    RetrieverBundle b;
    if (spec == "bm25") {
        b.bm25 = std::make_unique<InvertedIndex>(build_bm25(chunks.chunks()));
        b.retriever = std::make_unique<Bm25Retriever>(*b.bm25);
        b.label = "BM25";
    } else if (spec == "random") {
        b.retriever = std::make_unique<RandomRetriever>(chunks.ids(), ctx.settings.get_size("seed", 42));
        b.label = "Random";
    } else if (spec == "dense" || spec.starts_with("dense:")) {
        const std::string model = spec == "dense" ? std::string() : std::string(spec.substr(6));
        b.embedder = make_embedder(embedder_config(ctx.settings, model), audit_log(ctx.settings));
        const auto index_path = ctx.settings.get("index_path");
        if (use_index_file && index_path && !index_path->empty()) {
            const fs::path p = ctx.input("index_path", "--index");
            b.vectors = std::make_unique<VectorIndex>(VectorIndex::load(p, chunks.fingerprint()));
            if (b.vectors->model_id() != b.embedder->model_id()) {
                throw RetrievalError("index " + p.string() + " was built with " + b.vectors->model_id() +
                                     ", not " + b.embedder->model_id());
            }
        } else {
            b.vectors = std::make_unique<VectorIndex>(build_vector_index(
                chunks, *b.embedder, similarity_from_string(ctx.get("similarity", "cosine"))));
        }
        b.retriever = std::make_unique<DenseRetriever>(*b.vectors, *b.embedder);
        b.label = ctx.get("reference_label", b.embedder->model_id());
    } else {
        throw ConfigError("unknown retriever: " + std::string(spec) + " (expected bm25, dense, dense:<model> or random)");
    }
    return b;
}

void check_dataset_corpus(const QADataset& ds, const ChunkSet& chunks) {
    if (ds.corpus_fingerprint != chunks.fingerprint()) {
        throw FingerprintMismatch("dataset", ds.corpus_fingerprint, chunks.fingerprint());
    }
}

// ---------------------------------------------------------------------------

int cmd_ingest(Context& ctx) {
    const auto docs = load_documents(ctx);
    std::vector<json> rows;
    for (const auto& d : docs) rows.push_back(document_to_json(d));
    write_file_atomic(ctx.output("documents.jsonl"), to_jsonl(rows));
    ctx.effective["documents"] = docs.size();
    ctx.out << json{{"documents", docs.size()}}.dump() << "\n";
    return kOk;
}

int cmd_chunk(Context& ctx) {
    const ChunkingConfig cfg = chunking(ctx.settings);
    const auto docs = load_documents(ctx);
    const ChunkSet chunks = ChunkSet::from_documents(docs, cfg);
    std::vector<json> rows;
    for (const auto& c : chunks.chunks()) rows.push_back(chunk_to_json(c));
    write_file_atomic(ctx.output("chunks.jsonl"), to_jsonl(rows));
    const json stats = {{"chunk_size", cfg.chunk_size},
                        {"overlap", cfg.overlap},
                        {"documents", docs.size()},
                        {"corpus_fingerprint", chunks.fingerprint()},
                        {"stats", stats_to_json(corpus_stats(chunks.chunks()))}};
    write_file_atomic(ctx.output("chunk_stats.json"), stats.dump(2) + "\n");
    ctx.effective = stats;
    ctx.out << stats.dump() << "\n";
    return kOk;
}

int cmd_index(Context& ctx) {
    const ChunkSet chunks = ChunkSet::from_documents(load_documents(ctx), chunking(ctx.settings));
    const auto embedder = make_embedder(embedder_config(ctx.settings), audit_log(ctx.settings));
    const VectorIndex index =
        build_vector_index(chunks, *embedder, similarity_from_string(ctx.get("similarity", "cosine")));
    const fs::path path = ctx.output("index.jsonl");
    index.save(path);
    ctx.effective = {{"chunk_size", chunks.config().chunk_size},
                     {"overlap", chunks.config().overlap},
                     {"model", index.model_id()},
                     {"dims", index.dims()},
                     {"similarity", to_string(index.similarity())},
                     {"corpus_fingerprint", chunks.fingerprint()}};
    ctx.out << json{{"index", path.string()}, {"count", index.size()}, {"model", index.model_id()}}.dump() << "\n";
    return kOk;
}

int cmd_search(Context& ctx) {
    const auto query = ctx.settings.get("query");
    if (!query || trim(*query).empty()) throw UsageError("missing required --query");
    const std::size_t k = ctx.settings.get_size("k", ctx.settings.get_size("default_k", 5));
    if (k == 0) throw ConfigError("k must be positive");
    const ChunkSet chunks = ChunkSet::from_documents(load_documents(ctx), chunking(ctx.settings));
    const auto bundle = make_retriever(ctx, ctx.get("retriever", "bm25"), chunks, true);
    const RetrievalResult r = bundle.retriever->search(*query, k);
    json result = to_json(r);
    result["query"] = *query;
    json rows = json::array();
    for (const auto& s : r.ranked) {
        const Chunk& c = chunks.at(s.chunk_id);
        rows.push_back({{"chunk_id", s.chunk_id}, {"score", s.score}, {"title", c.title}, {"date", c.date}});
    }
    result["chunks"] = std::move(rows);
    if (!ctx.out_dir.empty()) write_file_atomic(ctx.output("search.json"), result.dump(2) + "\n");
    ctx.out << result.dump() << "\n";
    return kOk;
}

int cmd_ask(Context& ctx) {
    const auto question = ctx.settings.get("question");
    if (!question || trim(*question).empty()) throw UsageError("missing required --question");
    const std::size_t k = ctx.settings.get_size("k", ctx.settings.get_size("default_k", 5));
    const ChunkSet chunks = ChunkSet::from_documents(load_documents(ctx), chunking(ctx.settings));
    const auto bundle = make_retriever(ctx, ctx.get("retriever", "bm25"), chunks, true);
    const auto llm = make_llm(llm_config(ctx.settings, "llm", "echo"), audit_log(ctx.settings));
    const PromptTemplate tmpl = PromptTemplate::for_language(ctx.get("language", "pt"));
    const GroundedAnswer a = answer(*question, *bundle.retriever, chunks, *llm, k, tmpl);
    json record = answer_record("cli", a);
    if (!ctx.out_dir.empty()) write_file_atomic(ctx.output("answer.json"), record.dump(2) + "\n");
    ctx.out << record.dump() << "\n";
    return kOk;
}

int cmd_gen_dataset(Context& ctx) {
    const ChunkSet chunks = ChunkSet::from_documents(load_documents(ctx), chunking(ctx.settings));
    const auto llm = make_llm(llm_config(ctx.settings, "llm", "structured"), audit_log(ctx.settings));
    const std::size_t n = ctx.settings.get_size("n", 100);
    const std::uint64_t seed = ctx.settings.get_size("seed", 42);
    GenerationRun run = generate_dataset(chunks, *llm, n, seed, ctx.settings.get_size("max_parallel", 4));

    const fs::path path = ctx.output("dataset.jsonl");
    save_dataset(run.dataset, path);
    ctx.outputs.push_back(manifest_path(path));
    save_rejects(run.rejects, ctx.output("rejects.jsonl"));
    write_review_csv(run.dataset, chunks, ctx.output("review.csv"));
    const auto violations = validate_dataset(run.dataset, chunks);
    std::vector<json> rows;
    for (const auto& v : violations) rows.push_back(to_json(v));
    write_file_atomic(ctx.output("violations.jsonl"), to_jsonl(rows));

    ctx.effective = manifest_json(run.dataset);
    ctx.out << json{{"sampled", run.dataset.counts.sampled},
                    {"accepted", run.dataset.counts.accepted},
                    {"rejected", run.dataset.counts.rejected},
                    {"reject_reasons", run.dataset.counts.reject_reasons},
                    {"violations", violations.size()}}
                   .dump()
            << "\n";
    return kOk;
}

int cmd_paraphrase(Context& ctx) {
    const QADataset ds = load_dataset(ctx.input("dataset_path", "--dataset"));
    const auto llm = make_llm(llm_config(ctx.settings, "llm", "synonym"), audit_log(ctx.settings));
    const QADataset out = paraphrase_dataset(ds, *llm, ctx.settings.get_size("max_parallel", 4));
    const fs::path path = ctx.output("dataset.paraphrased.jsonl");
    save_dataset(out, path);
    ctx.outputs.push_back(manifest_path(path));
    std::size_t flagged = 0;
    for (const auto& item : out.items) flagged += item.paraphrase_flagged ? 1 : 0;
    ctx.effective = manifest_json(out);
    ctx.out << json{{"items", out.items.size()}, {"flagged", flagged}, {"model", out.paraphrase_model}}.dump()
            << "\n";
    return kOk;
}

int cmd_eval_retrieval(Context& ctx, bool sweep) {
    const QADataset ds = load_dataset(ctx.input("dataset_path", "--dataset"));
    const auto docs = load_documents(ctx);
    const ChunkSet dataset_chunks = ChunkSet::from_documents(docs, ds.chunking);
    check_dataset_corpus(ds, dataset_chunks);

    const std::size_t max_k = ctx.settings.get_size("max_k", 100);
    const std::size_t parallel = ctx.settings.get_size("max_parallel", 4);
    const auto retrievers =
        split_list(sweep ? ctx.get("retrievers", "bm25,dense,random") : ctx.get("retriever", "bm25"));
    const auto sizes = split_sizes(
        sweep ? ctx.get("chunk_sizes", std::to_string(ds.chunking.chunk_size))
              : ctx.get("chunk_size", std::to_string(ds.chunking.chunk_size)),
        "chunk sizes");
    const auto variant_names = split_list(sweep ? ctx.get("variants", "original,paraphrased") : ctx.get("variant", "original"));
    if (!sweep && (retrievers.size() != 1 || variant_names.size() != 1 || sizes.size() != 1)) {
        throw UsageError("lists of retrievers, sizes or variants need --sweep");
    }
    std::vector<QuestionVariant> variants;
    for (const auto& v : variant_names) variants.push_back(question_variant_from_string(v));

    std::vector<RetrievalReport> reports;
    for (const std::size_t size : sizes) {
        const ChunkingConfig cfg = size == ds.chunking.chunk_size ? ds.chunking : ChunkingConfig::with_size(size);
        const ChunkSet chunks = size == ds.chunking.chunk_size ? dataset_chunks : ChunkSet::from_documents(docs, cfg);
        for (const auto& spec : retrievers) {
            const auto bundle = make_retriever(ctx, spec, chunks, !sweep);
            for (const auto variant : variants) {
                RetrievalReport r = evaluate_retrieval(ds, dataset_chunks, chunks, *bundle.retriever, variant, max_k, parallel);
                r.config["reference_label"] = bundle.label;
                r.config["retriever_spec"] = spec;
                const std::string name = "retrieval_" + safe_name(spec) + "_" + std::to_string(size) + "_" +
                                         to_string(variant) + ".json";
                save_report(to_json(r), r.failures, ctx.output(name));
                if (!r.failures.empty()) ctx.outputs.push_back(ctx.out_dir / (fs::path(name).stem().string() + ".failures.jsonl"));
                reports.push_back(std::move(r));
            }
        }
    }
    const auto ks = split_sizes(ctx.get("ks", "1,5"), "ks");
    json summary = json::array();
    for (const auto& r : reports) {
        json acc = json::object();
        for (const std::size_t k : ks) {
            if (k == 0 || k > max_k) throw ConfigError("ks must lie in 1.." + std::to_string(max_k));
            const auto it = r.accuracy.find(k);
            acc[std::to_string(k)] = it == r.accuracy.end() ? json(nullptr) : json(it->second);
        }
        summary.push_back({{"retriever", r.config["retriever"]},
                           {"chunk_size", r.config["chunk_size"]},
                           {"variant", r.config["variant"]},
                           {"n", r.items.size()},
                           {"skipped", r.skipped},
                           {"failures", r.failures.size()},
                           {"accuracy", std::move(acc)}});
    }
    write_file_atomic(ctx.output("summary.json"), summary.dump(2) + "\n");
    const std::string table = table2_csv(reports);
    write_file_atomic(ctx.output("table2.csv"), table);
    write_file_atomic(ctx.output("topk_curve.csv"), topk_curve_csv(reports));
    ctx.effective = {{"retrievers", retrievers}, {"chunk_sizes", sizes}, {"variants", variant_names}, {"max_k", max_k}};
    ctx.out << table;
    return kOk;
}

int cmd_eval_generation(Context& ctx, bool ablation) {
    const QADataset ds = load_dataset(ctx.input("dataset_path", "--dataset"));
    const ChunkSet chunks = ChunkSet::from_documents(load_documents(ctx), ds.chunking);
    check_dataset_corpus(ds, chunks);
    const auto bundle = make_retriever(ctx, ctx.get("retriever", "bm25"), chunks, true);
    const auto audit = audit_log(ctx.settings);
    const auto generator = make_llm(llm_config(ctx.settings, "llm", "echo"), audit);
    const auto judge = make_llm(llm_config(ctx.settings, "judge", "judge"), audit);
    const auto cosine_embedder = make_embedder(embedder_config(ctx.settings, ctx.get("cosine_model")), audit);

    GenerationSetup setup;
    setup.chunks = &chunks;
    setup.retriever = bundle.retriever.get();
    setup.generator = generator.get();
    setup.judge = judge.get();
    setup.cosine_embedder = cosine_embedder.get();
    setup.prompt = PromptTemplate::for_language(ctx.get("language", "pt"));
    setup.variant = question_variant_from_string(ctx.get("variant", "original"));
    setup.max_parallel = ctx.settings.get_size("max_parallel", 4);
    setup.judge_interval = std::chrono::milliseconds(ctx.settings.get_size("judge_interval_ms", 0));
    setup.reference_label = ctx.get("reference_label");

    const auto ks = split_sizes(ctx.get("ks", "3,5,8"), "ks");
    const auto reports = run_experiment(ds, setup, ks, ablation);
    for (const auto& r : reports) {
        const std::string name = "generation_k" + std::to_string(r.k()) + ".json";
        save_report(to_json(r), r.failures, ctx.output(name));
        if (!r.failures.empty()) ctx.outputs.push_back(ctx.out_dir / ("generation_k" + std::to_string(r.k()) + ".failures.jsonl"));
    }
    const std::string table = table3_csv(reports);
    write_file_atomic(ctx.output("table3.csv"), table);
    ctx.effective = {{"ks", ks},
                     {"ablation", ablation},
                     {"retriever", bundle.retriever->id()},
                     {"generator", generator->model_id()},
                     {"judge", judge->model_id()},
                     {"cosine_model", cosine_embedder->model_id()},
                     {"template_version", setup.prompt.version()}};
    ctx.out << table;
    return kOk;
}

int cmd_correlate(Context& ctx) {
    const GenReport report = gen_report_from_json(json::parse(read_file(ctx.input("report_path", "--report"))));
    std::map<std::string, double> human;
    const bool with_human = ctx.settings.get("human_path").has_value();
    if (with_human) human = load_human_scores(ctx.input("human_path", "--human"));
    const CorrelationMatrix m = correlate_report(report, with_human ? &human : nullptr);
    write_file_atomic(ctx.output("correlation.json"), to_json(m).dump(2) + "\n");
    const std::string csv = correlation_csv(m);
    write_file_atomic(ctx.output("correlation.csv"), csv);
    ctx.out << csv;
    return kOk;
}

std::atomic<bool> g_serving{false};

int cmd_serve(Context& ctx) {
    const ChunkSet chunks = ChunkSet::from_documents(load_documents(ctx), chunking(ctx.settings));
    std::vector<RetrieverBundle> bundles;
    std::map<std::string, const Retriever*, std::less<>> retrievers;
    for (const auto& spec : split_list(ctx.get("retrievers", "bm25,random"))) {
        bundles.push_back(make_retriever(ctx, spec, chunks, true));
        retrievers[spec] = bundles.back().retriever.get();
    }
    const std::string default_retriever = ctx.get("retriever", "bm25");
    if (!retrievers.count(default_retriever)) {
        bundles.push_back(make_retriever(ctx, default_retriever, chunks, true));
        retrievers[default_retriever] = bundles.back().retriever.get();
    }
    const auto llm = make_llm(llm_config(ctx.settings, "llm", "echo"), audit_log(ctx.settings));
    SessionStore store(ctx.get("store_path", "sessions"));
    ServiceOptions options;
    options.default_k = ctx.settings.get_size("default_k", 5);
    options.max_k = ctx.settings.get_size("max_k", 100);
    options.static_dir = ctx.get("static_dir");
    ChatService service(chunks, retrievers, default_retriever, *llm, PromptTemplate::for_language(ctx.get("language", "pt")),
                        store, options);

    const std::string addr = ctx.get("addr", "127.0.0.1:8080");
    const auto colon = addr.rfind(':');
    if (colon == std::string::npos) throw ConfigError("addr must be host:port");
    Settings port_setting;
    port_setting.set("port", addr.substr(colon + 1));
    const int port = static_cast<int>(port_setting.get_size("port", 0));
    const std::string host = addr.substr(0, colon);

    httplib::Server server;
    service.install(server);

    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);
    g_serving = true;
    std::thread waiter([&] {
        const timespec tick{0, 200'000'000};
        while (g_serving) {
            if (sigtimedwait(&signals, nullptr, &tick) > 0) {
                server.stop();
                break;
            }
        }
    });

    ctx.out << json{{"listening", addr}, {"chunks", chunks.size()}, {"store", store.root().string()}}.dump() << "\n"
            << std::flush;
    const bool ok = server.listen(host, port);
    g_serving = false;
    waiter.join();
    pthread_sigmask(SIG_UNBLOCK, &signals, nullptr);
    if (!ok) throw ConfigError("cannot listen on " + addr);
    return kOk;
}

int report_error(std::ostream& err, int code, std::string_view kind, std::string_view message) {
    err << json{{"error", kind}, {"message", message}, {"exit_code", code}}.dump() << "\n";
    return code;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Retrieval-augmented question answering over normative documents"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::string out_dir;
    std::map<std::string, std::string> overrides;
    app.add_option("--config", config_path, "key=value settings file");
    app.add_option("-o,--out", out_dir, "output directory");

    // Flags write into the same keys the config file uses.
    const auto setting = [&overrides](CLI::App* sub, const std::string& flags, const std::string& key,
                                      const std::string& help) {
        sub->add_option_function<std::string>(flags, [&overrides, key](const std::string& v) { overrides[key] = v; },
                                              help);
    };
    const auto corpus_flags = [&](CLI::App* sub) {
        setting(sub, "--corpus", "corpus_path", "corpus JSONL");
        setting(sub, "--format", "corpus_format", "corpus format id");
    };
    const auto chunk_flags = [&](CLI::App* sub) {
        setting(sub, "--size,--chunk-size", "chunk_size", "chunk size in code points");
        setting(sub, "--overlap", "overlap", "overlap in code points (default size/10)");
    };
    const auto embedder_flags = [&](CLI::App* sub) {
        setting(sub, "--embedder-endpoint", "embedder_endpoint", "embedding service base URL or 'mock'");
        setting(sub, "--embedder-model", "embedder_model", "embedding model id");
        setting(sub, "--dims", "embedder_dims", "embedding dimensionality");
        setting(sub, "--similarity", "similarity", "dot or cosine");
    };
    const auto llm_flags = [&](CLI::App* sub) {
        setting(sub, "--llm-endpoint", "llm_endpoint", "chat service base URL or 'mock'");
        setting(sub, "--llm-model", "llm_model", "chat model id (mock names: echo, echo-span, refusal, structured, synonym, identity)");
        setting(sub, "--max-prompt-chars", "llm_max_prompt_chars", "prompt size limit");
    };
    const auto retriever_flags = [&](CLI::App* sub) {
        setting(sub, "--retriever", "retriever", "bm25, dense, dense:<model> or random");
        setting(sub, "--index", "index_path", "prebuilt vector index");
        setting(sub, "--seed", "seed", "random seed");
    };

    auto* ingest_cmd = app.add_subcommand("ingest", "normalize a corpus");
    corpus_flags(ingest_cmd);

    auto* chunk_cmd = app.add_subcommand("chunk", "split documents into overlapping chunks");
    corpus_flags(chunk_cmd);
    chunk_flags(chunk_cmd);

    auto* index_cmd = app.add_subcommand("index", "embed every chunk into a vector index");
    corpus_flags(index_cmd);
    chunk_flags(index_cmd);
    embedder_flags(index_cmd);

    auto* search_cmd = app.add_subcommand("search", "rank chunks for a query");
    corpus_flags(search_cmd);
    chunk_flags(search_cmd);
    embedder_flags(search_cmd);
    retriever_flags(search_cmd);
    setting(search_cmd, "-q,--query", "query", "query text");
    setting(search_cmd, "-k", "k", "number of chunks");

    auto* ask_cmd = app.add_subcommand("ask", "answer one question");
    corpus_flags(ask_cmd);
    chunk_flags(ask_cmd);
    embedder_flags(ask_cmd);
    retriever_flags(ask_cmd);
    llm_flags(ask_cmd);
    setting(ask_cmd, "-q,--question", "question", "question text");
    setting(ask_cmd, "-k", "k", "chunks passed to the model");
    setting(ask_cmd, "--language", "language", "prompt language (pt or en)");

    auto* gen_cmd = app.add_subcommand("gen-dataset", "generate a synthetic QA dataset");
    corpus_flags(gen_cmd);
    chunk_flags(gen_cmd);
    llm_flags(gen_cmd);
    setting(gen_cmd, "-n", "n", "chunks to sample");
    setting(gen_cmd, "--seed", "seed", "sampling seed");
    setting(gen_cmd, "--max-parallel", "max_parallel", "concurrent provider calls");

    auto* para_cmd = app.add_subcommand("paraphrase", "add paraphrased questions to a dataset");
    setting(para_cmd, "--dataset", "dataset_path", "dataset JSONL");
    llm_flags(para_cmd);
    setting(para_cmd, "--max-parallel", "max_parallel", "concurrent provider calls");

    bool sweep = false;
    auto* evr_cmd = app.add_subcommand("eval-retrieval", "top-k accuracy of retrievers");
    setting(evr_cmd, "--dataset", "dataset_path", "dataset JSONL");
    corpus_flags(evr_cmd);
    embedder_flags(evr_cmd);
    retriever_flags(evr_cmd);
    setting(evr_cmd, "--size,--chunk-size", "chunk_size", "chunk size of the evaluated index");
    setting(evr_cmd, "--variant", "variant", "original or paraphrased");
    setting(evr_cmd, "--max-k", "max_k", "deepest k evaluated");
    setting(evr_cmd, "--ks", "ks", "k values listed in summary.json");
    setting(evr_cmd, "--retrievers", "retrievers", "sweep: comma-separated retrievers");
    setting(evr_cmd, "--sizes", "chunk_sizes", "sweep: comma-separated chunk sizes");
    setting(evr_cmd, "--variants", "variants", "sweep: comma-separated variants");
    setting(evr_cmd, "--reference-label", "reference_label", "published row label for dense retrievers");
    evr_cmd->add_flag("--sweep", sweep, "evaluate retrievers x sizes x variants");

    bool ablation = false;
    auto* evg_cmd = app.add_subcommand("eval-generation", "answer quality at several k");
    setting(evg_cmd, "--dataset", "dataset_path", "dataset JSONL");
    corpus_flags(evg_cmd);
    embedder_flags(evg_cmd);
    retriever_flags(evg_cmd);
    llm_flags(evg_cmd);
    setting(evg_cmd, "--judge-endpoint", "judge_endpoint", "judge service base URL or 'mock'");
    setting(evg_cmd, "--judge-model", "judge_model", "judge model id");
    setting(evg_cmd, "--cosine-model", "cosine_model", "embedding model for the cosine metric");
    setting(evg_cmd, "--ks", "ks", "comma-separated k values");
    setting(evg_cmd, "--variant", "variant", "original or paraphrased");
    setting(evg_cmd, "--language", "language", "prompt language (pt or en)");
    setting(evg_cmd, "--judge-interval-ms", "judge_interval_ms", "minimum spacing between judge calls");
    setting(evg_cmd, "--reference-label", "reference_label", "published row label for the generator");
    setting(evg_cmd, "--max-parallel", "max_parallel", "concurrent provider calls");
    evg_cmd->add_flag("--ablation", ablation, "also run with no retrieved context");

    auto* corr_cmd = app.add_subcommand("correlate", "correlation between metrics");
    setting(corr_cmd, "--report", "report_path", "generation report JSON");
    setting(corr_cmd, "--human", "human_path", "human scores CSV");

    auto* serve_cmd = app.add_subcommand("serve", "HTTP API");
    corpus_flags(serve_cmd);
    chunk_flags(serve_cmd);
    embedder_flags(serve_cmd);
    retriever_flags(serve_cmd);
    llm_flags(serve_cmd);
    setting(serve_cmd, "--addr", "addr", "host:port");
    setting(serve_cmd, "--store", "store_path", "session store directory");
    setting(serve_cmd, "--static", "static_dir", "directory served at /");
    setting(serve_cmd, "--retrievers", "retrievers", "comma-separated retrievers exposed by search");

    std::vector<const char*> argv{"ragqa"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return kOk;
        }
        return report_error(err, kUsage, "usage", e.what());
    }

    CLI::App* sub = app.get_subcommands().front();
    try {
        Context ctx{sub->get_name(), {}, out_dir.empty() ? fs::path() : fs::path(out_dir), json::object(), {}, json::object(), out};
        if (!config_path.empty()) ctx.settings = Settings::load(config_path);
        ctx.settings.apply_env();
        for (const auto& [k, v] : overrides) ctx.settings.set(k, v);
        if (ctx.out_dir.empty() && sub != search_cmd && sub != ask_cmd && sub != serve_cmd) ctx.out_dir = "out";

        int code = kOk;
        if (sub == ingest_cmd) code = cmd_ingest(ctx);
        else if (sub == chunk_cmd) code = cmd_chunk(ctx);
        else if (sub == index_cmd) code = cmd_index(ctx);
        else if (sub == search_cmd) code = cmd_search(ctx);
        else if (sub == ask_cmd) code = cmd_ask(ctx);
        else if (sub == gen_cmd) code = cmd_gen_dataset(ctx);
        else if (sub == para_cmd) code = cmd_paraphrase(ctx);
        else if (sub == evr_cmd) code = cmd_eval_retrieval(ctx, sweep);
        else if (sub == evg_cmd) code = cmd_eval_generation(ctx, ablation);
        else if (sub == corr_cmd) code = cmd_correlate(ctx);
        else if (sub == serve_cmd) code = cmd_serve(ctx);
        if (code == kOk) ctx.write_manifest();
        return code;
    } catch (const UsageError& e) {
        return report_error(err, kUsage, "usage", e.what());
    } catch (const ConfigError& e) {
        return report_error(err, kBadInput, e.kind(), e.what());
    } catch (const FingerprintMismatch& e) {
        return report_error(err, kFingerprint, e.kind(), e.what());
    } catch (const AnswerError& e) {
        return report_error(err, kProvider, "provider", e.what());
    } catch (const ProviderError& e) {
        return report_error(err, kProvider, e.kind(), e.what());
    } catch (const StoreError& e) {
        return report_error(err, kStore, e.kind(), e.what());
    } catch (const Error& e) {
        return report_error(err, kData, e.kind(), e.what());
    } catch (const json::exception& e) {
        return report_error(err, kData, "json", e.what());
    } catch (const std::exception& e) {
        return report_error(err, kInternal, "internal", e.what());
    }
}

}  // namespace ragqa::cli
