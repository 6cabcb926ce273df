#include "ragqa/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <mutex>
#include <set>
#include <thread>
#include <unordered_map>

#include "ragqa/parallel.hpp"
#include "ragqa/prompt_format.hpp"
#include "ragqa/text.hpp"

namespace ragqa {

const char* to_string(QuestionVariant v) {
    return v == QuestionVariant::Original ? "original" : "paraphrased";
}

QuestionVariant question_variant_from_string(std::string_view s) {
    if (s == "original") return QuestionVariant::Original;
    if (s == "paraphrased") return QuestionVariant::Paraphrased;
    throw EvaluationError("unknown question variant '" + std::string(s) + "' (expected original or paraphrased)");
}

namespace {

const std::string* question_for(const QAItem& item, QuestionVariant v) {
    if (v == QuestionVariant::Original) return &item.question;
    return item.paraphrase ? &*item.paraphrase : nullptr;
}

json failure_record(std::string_view question_id, std::string_view stage, std::string_view kind,
                    std::string_view message) {
    return {{"question_id", question_id}, {"stage", stage}, {"error_kind", kind}, {"error", message}};
}

json mean_or_null(const std::optional<double>& v) {
    return v ? json(*v) : json(nullptr);
}

std::optional<double> opt_double(const json& j, const char* key) {
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<double>();
}

}  // namespace

// ---------------------------------------------------------------------------
// Retrieval

json to_json(const TopKResult& r) {
    return {{"question_id", r.question_id},
            {"gold_chunk_id", r.gold_chunk_id},
            {"rank_of_gold", r.rank_of_gold ? json(*r.rank_of_gold) : json(nullptr)},
            {"depth", r.depth}};
}

TopKResult topk_result_from_json(const json& j) {
    TopKResult r;
    r.question_id = j.at("question_id").get<std::string>();
    r.gold_chunk_id = j.at("gold_chunk_id").get<std::string>();
    if (!j.at("rank_of_gold").is_null()) r.rank_of_gold = j.at("rank_of_gold").get<std::size_t>();
    r.depth = j.at("depth").get<std::size_t>();
    return r;
}

TopKResult score_retrieval(std::string_view question_id, std::string_view gold_chunk_id, const RetrievalResult& r) {
    TopKResult out;
    out.question_id = std::string(question_id);
    out.gold_chunk_id = std::string(gold_chunk_id);
    out.depth = r.depth;
    if (const std::size_t rank = r.rank_of(gold_chunk_id); rank > 0) out.rank_of_gold = rank;
    return out;
}

std::map<std::size_t, double> topk_accuracy(std::span<const TopKResult> results, std::span<const std::size_t> ks) {
    if (results.empty()) throw EvaluationError("top-k accuracy over zero results");
    const std::size_t max_k = ks.empty() ? 0 : *std::max_element(ks.begin(), ks.end());
    for (const auto& r : results) {
        if (r.depth < max_k) {
            throw EvaluationError("result for " + r.question_id + " was retrieved with depth " +
                                  std::to_string(r.depth) + ", below k = " + std::to_string(max_k));
        }
    }
    std::map<std::size_t, double> out;
    for (std::size_t k : ks) {
        std::size_t hits = 0;
        for (const auto& r : results) hits += r.hit(k);
        out[k] = static_cast<double>(hits) / static_cast<double>(results.size());
    }
    return out;
}

json to_json(const RetrievalReport& r) {
    json items = json::array();
    for (const auto& i : r.items) items.push_back(to_json(i));
    json acc = json::object();
    for (const auto& [k, v] : r.accuracy) acc[std::to_string(k)] = v;
    return {{"config", r.config},
            {"items", items},
            {"failures", r.failures},
            {"accuracy", acc},
            {"counts", {{"scored", r.items.size()}, {"failed", r.failures.size()}, {"skipped", r.skipped}}},
            {"created_at", r.created_at}};
}

RetrievalReport retrieval_report_from_json(const json& j) {
    RetrievalReport r;
    r.config = j.at("config");
    for (const auto& i : j.at("items")) r.items.push_back(topk_result_from_json(i));
    for (const auto& f : j.value("failures", json::array())) r.failures.push_back(f);
    for (const auto& [k, v] : j.at("accuracy").items()) r.accuracy[std::stoul(k)] = v.get<double>();
    r.skipped = j.at("counts").value("skipped", std::size_t{0});
    r.created_at = j.value("created_at", "");
    return r;
}

RetrievalReport evaluate_retrieval(const QADataset& ds, const ChunkSet& dataset_chunks, const ChunkSet& chunks,
                                   const Retriever& retriever, QuestionVariant variant, std::size_t max_k,
                                   std::size_t max_parallel) {
    if (ds.corpus_fingerprint != dataset_chunks.fingerprint()) {
        throw FingerprintMismatch("dataset", ds.corpus_fingerprint, dataset_chunks.fingerprint());
    }
    if (max_k == 0) throw EvaluationError("max_k must be >= 1");
    const bool same = chunks.fingerprint() == dataset_chunks.fingerprint();
    GoldMapping mapping;
    if (!same) mapping = remap_gold(ds, dataset_chunks, chunks);

    std::vector<std::optional<TopKResult>> scored(ds.items.size());
    std::vector<std::optional<json>> failed(ds.items.size());
    parallel_for(ds.items.size(), max_parallel, [&](std::size_t i) {
        const QAItem& item = ds.items[i];
        const std::string* question = question_for(item, variant);
        const std::optional<std::string>& gold = same ? std::optional<std::string>(item.gold_chunk_id) : mapping.gold[i];
        if (!question || !gold) return;
        try {
            scored[i] = score_retrieval(item.id, *gold, retriever.search(*question, max_k));
        } catch (const Error& e) {
            failed[i] = failure_record(item.id, "retrieval", e.kind(), e.what());
        }
    });

    RetrievalReport report;
    for (std::size_t i = 0; i < ds.items.size(); ++i) {
        if (scored[i]) {
            report.items.push_back(std::move(*scored[i]));
        } else if (failed[i]) {
            report.failures.push_back(std::move(*failed[i]));
        } else {
            ++report.skipped;
        }
    }
    std::sort(report.items.begin(), report.items.end(),
              [](const TopKResult& a, const TopKResult& b) { return a.question_id < b.question_id; });
    if (!report.items.empty()) {
        std::vector<std::size_t> ks(max_k);
        for (std::size_t k = 1; k <= max_k; ++k) ks[k - 1] = k;
        report.accuracy = topk_accuracy(report.items, ks);
    }
    report.config = {{"retriever", retriever.id()},
                     {"chunk_size", chunks.config().chunk_size},
                     {"overlap", chunks.config().overlap},
                     {"corpus_fingerprint", chunks.fingerprint()},
                     {"dataset_fingerprint", ds.corpus_fingerprint},
                     {"dataset_items", ds.items.size()},
                     {"variant", to_string(variant)},
                     {"max_k", max_k},
                     {"gold_remapped", !same},
                     {"gold_unmapped", mapping.unmapped}};
    report.created_at = utc_timestamp();
    return report;
}

namespace {

const PublishedRetrievalRow* find_published(std::string_view label, std::size_t chunk_size, std::string_view variant) {
    for (const auto& row : published_retrieval()) {
        if (label == row.retriever && chunk_size == row.chunk_size && variant == row.variant) return &row;
    }
    return nullptr;
}

const PublishedGenRow* find_published(std::string_view label, std::string_view block, std::size_t k) {
    for (const auto& row : published_generation()) {
        if (label == row.model && block == row.block && k == row.k) return &row;
    }
    return nullptr;
}

std::string fixed_or_empty(const std::optional<double>& v) {
    return v ? format_fixed(*v, 2) : std::string();
}

}  // namespace

std::string table2_csv(std::span<const RetrievalReport> reports) {
    std::string out = csv_row({"retriever", "chunk_size", "variant", "n", "top1", "top5", "published_top1",
                               "published_top5"});
    for (const auto& r : reports) {
        const auto at = [&](std::size_t k) -> std::optional<double> {
            const auto it = r.accuracy.find(k);
            return it == r.accuracy.end() ? std::nullopt : std::optional<double>(it->second);
        };
        const std::size_t chunk_size = r.config.value("chunk_size", std::size_t{0});
        const std::string variant = r.config.value("variant", "");
        const auto* pub = find_published(r.config.value("reference_label", ""), chunk_size, variant);
        out += csv_row({r.config.value("retriever", ""), std::to_string(chunk_size), variant,
                        std::to_string(r.items.size()), fixed_or_empty(at(1)), fixed_or_empty(at(5)),
                        pub ? format_fixed(pub->top1, 2) : "", pub ? format_fixed(pub->top5, 2) : ""});
    }
    return out;
}

std::string topk_curve_csv(std::span<const RetrievalReport> reports) {
    std::string out = csv_row({"retriever", "chunk_size", "variant", "k", "accuracy"});
    for (const auto& r : reports) {
        const std::string retriever = r.config.value("retriever", "");
        const std::string chunk_size = std::to_string(r.config.value("chunk_size", std::size_t{0}));
        const std::string variant = r.config.value("variant", "");
        for (const auto& [k, acc] : r.accuracy) {
            out += csv_row({retriever, chunk_size, variant, std::to_string(k), format_fixed(acc, 6)});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Generation metrics

double token_f1(std::string_view predicted, std::string_view reference) {
    const auto pred = tokenize(predicted);
    const auto ref = tokenize(reference);
    if (pred.empty() && ref.empty()) return 100.0;
    if (pred.empty() || ref.empty()) return 0.0;
    std::unordered_map<std::string, long> counts;
    for (const auto& t : ref) ++counts[t];
    long shared = 0;
    for (const auto& t : pred) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++shared;
        }
    }
    // 2PR / (P + R) reduces to this, which is also exactly symmetric in floating point.
    return 100.0 * 2.0 * static_cast<double>(shared) / static_cast<double>(pred.size() + ref.size());
}

double embedding_cosine(std::string_view predicted, std::string_view reference, const Embedder& embedder) {
    if (trim(predicted).empty()) return 0.0;
    const std::vector<std::string> texts = {std::string(predicted), std::string(reference)};
    const auto v = embedder.embed(texts);
    return std::max(0.0, cosine(v[0], v[1])) * 100.0;
}

const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::TotallyCorrect: return "Totally correct";
        case Verdict::MostlyCorrect: return "Mostly correct";
        case Verdict::Incorrect: return "Incorrect";
    }
    return "Incorrect";
}

double judge_points(Verdict v) {
    switch (v) {
        case Verdict::TotallyCorrect: return 100.0;
        case Verdict::MostlyCorrect: return 50.0;
        case Verdict::Incorrect: return 0.0;
    }
    return 0.0;
}

namespace {

Verdict verdict_from_label(std::string_view label) {
    if (label == "Totally correct") return Verdict::TotallyCorrect;
    if (label == "Mostly correct") return Verdict::MostlyCorrect;
    if (label == "Incorrect") return Verdict::Incorrect;
    throw EvaluationError("unknown verdict '" + std::string(label) + "'");
}

struct VerdictAlias {
    std::vector<std::string> tokens;
    Verdict verdict;
};

const std::vector<VerdictAlias>& verdict_aliases() {
    static const std::vector<VerdictAlias> aliases = [] {
        std::vector<VerdictAlias> a;
        auto add = [&](std::string_view phrase, Verdict v) { a.push_back({tokenize(phrase), v}); };
        for (auto p : {"totally correct", "completely correct", "fully correct", "totalmente correta",
                       "totalmente correto", "completamente correta", "completamente correto"}) {
            add(p, Verdict::TotallyCorrect);
        }
        for (auto p : {"mostly correct", "largely correct", "partially correct", "majoritariamente correta",
                       "majoritariamente correto", "parcialmente correta", "parcialmente correto",
                       "em grande parte correta", "em grande parte correto", "quase totalmente correta",
                       "quase totalmente correto"}) {
            add(p, Verdict::MostlyCorrect);
        }
        for (auto p : {"incorrect", "incorreta", "incorreto", "errada", "errado"}) add(p, Verdict::Incorrect);
        return a;
    }();
    return aliases;
}

}  // namespace

std::optional<Verdict> parse_verdict(std::string_view reply) {
    std::string text(reply);
    std::replace(text.begin(), text.end(), '_', ' ');
    const auto tokens = tokenize(text);
    std::optional<Verdict> best;
    std::size_t best_pos = tokens.size();
    std::size_t best_len = 0;
    for (const auto& alias : verdict_aliases()) {
        const auto it = std::search(tokens.begin(), tokens.end(), alias.tokens.begin(), alias.tokens.end());
        if (it == tokens.end()) continue;
        const auto pos = static_cast<std::size_t>(it - tokens.begin());
        // Earliest match wins; at the same position the longer phrase does
        // ("quase totalmente correta" over "totalmente correta").
        if (pos < best_pos || (pos == best_pos && alias.tokens.size() > best_len)) {
            best = alias.verdict;
            best_pos = pos;
            best_len = alias.tokens.size();
        }
    }
    return best;
}

std::pair<std::string, std::string> judge_prompt(std::string_view question, std::string_view candidate,
                                                 std::string_view gold_answer, std::string_view gold_span) {
    std::string system =
        "You grade answers produced by a virtual assistant for the University of São Paulo against a reference "
        "answer and the supporting text it was taken from.";
    std::string user =
        "Rate the candidate answer with exactly one of these labels:\n"
        "Totally correct: the answer completely matches the reference and addresses the question based on the "
        "supporting text.\n"
        "Mostly correct: the answer is largely accurate but has minor errors or omissions.\n"
        "Incorrect: the answer is wrong or fails to address the question.\n"
        "Reply with the label first.\n\n"
        "Candidate answer:\n" + wrap_block(candidate) +
        "\n\nReference answer:\n" + wrap_block(gold_answer) +
        "\n\nSupporting text:\n" + wrap_block(gold_span) +
        "\n\nQuestion: " + std::string(question);
    return {std::move(system), std::move(user)};
}

JudgeResult llm_judge(std::string_view question, std::string_view candidate, std::string_view gold_answer,
                      std::string_view gold_span, const LlmProvider& judge) {
    JudgeResult result;
    if (trim(candidate).empty()) return result;
    const auto [system, user] = judge_prompt(question, candidate, gold_answer, gold_span);
    for (int attempt = 0; attempt < 2; ++attempt) {
        ++result.calls;
        try {
            result.raw = judge.complete(system, user).response;
        } catch (const ProviderError& e) {
            if (e.error_kind() != ProviderError::Kind::EmptyResponse) throw;
            result.raw.clear();
        }
        if (auto v = parse_verdict(result.raw)) {
            result.verdict = *v;
            return result;
        }
    }
    result.verdict = Verdict::Incorrect;
    result.parse_failed = true;
    return result;
}

// ---------------------------------------------------------------------------
// Correlation

CorrelationMatrix metric_correlation(std::vector<std::string> names, const std::vector<std::vector<double>>& columns) {
    if (names.size() != columns.size()) throw EvaluationError("correlation: names and columns differ in count");
    const std::size_t rows = columns.empty() ? 0 : columns[0].size();
    for (const auto& c : columns) {
        if (c.size() != rows) throw EvaluationError("correlation: columns have different lengths");
    }
    if (rows < 3) throw EvaluationError("correlation needs at least 3 rows, got " + std::to_string(rows));

    const std::size_t m = columns.size();
    std::vector<std::vector<double>> centered(m);
    std::vector<double> norm(m);
    CorrelationMatrix out;
    out.rows = rows;
    for (std::size_t i = 0; i < m; ++i) {
        double mean = 0;
        for (double x : columns[i]) mean += x;
        mean /= static_cast<double>(rows);
        centered[i].resize(rows);
        double ss = 0;
        for (std::size_t r = 0; r < rows; ++r) {
            centered[i][r] = columns[i][r] - mean;
            ss += centered[i][r] * centered[i][r];
        }
        norm[i] = std::sqrt(ss);
        if (norm[i] == 0.0) out.constant_columns.push_back(names[i]);
    }
    out.r.assign(m, std::vector<std::optional<double>>(m));
    for (std::size_t i = 0; i < m; ++i) {
        if (norm[i] == 0.0) continue;
        out.r[i][i] = 1.0;
        for (std::size_t j = i + 1; j < m; ++j) {
            if (norm[j] == 0.0) continue;
            double s = 0;
            for (std::size_t r = 0; r < rows; ++r) s += centered[i][r] * centered[j][r];
            const double v = std::clamp(s / (norm[i] * norm[j]), -1.0, 1.0);
            out.r[i][j] = v;
            out.r[j][i] = v;
        }
    }
    out.names = std::move(names);
    return out;
}

json to_json(const CorrelationMatrix& m) {
    json rows = json::array();
    for (const auto& row : m.r) {
        json jr = json::array();
        for (const auto& v : row) jr.push_back(mean_or_null(v));
        rows.push_back(jr);
    }
    return {{"names", m.names}, {"rows", m.rows}, {"r", rows}, {"constant_columns", m.constant_columns}};
}

std::string correlation_csv(const CorrelationMatrix& m) {
    std::vector<std::string> header = {"metric"};
    header.insert(header.end(), m.names.begin(), m.names.end());
    std::string out = csv_row(header);
    for (std::size_t i = 0; i < m.names.size(); ++i) {
        std::vector<std::string> row = {m.names[i]};
        for (const auto& v : m.r[i]) row.push_back(v ? format_fixed(*v, 4) : "");
        out += csv_row(row);
    }
    return out;
}

std::map<std::string, double> load_human_scores(const std::filesystem::path& csv_path) {
    const auto rows = parse_csv(read_file(csv_path));
    if (rows.empty()) throw EvaluationError("human scores: empty file " + csv_path.string());
    const auto& header = rows[0];
    const auto col = [&](std::string_view name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw EvaluationError("human scores: missing column " + std::string(name));
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t qid = col("question_id");
    const std::size_t score = col("score");
    std::map<std::string, double> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() == 1 && trim(row[0]).empty()) continue;
        if (row.size() <= std::max(qid, score)) {
            throw EvaluationError("human scores: row " + std::to_string(r + 1) + " has too few fields");
        }
        const std::string s = trim(row[score]);
        if (s != "0" && s != "50" && s != "100") {
            throw EvaluationError("human scores: row " + std::to_string(r + 1) + " score '" + s +
                                  "' is not one of 0, 50, 100");
        }
        if (!out.emplace(trim(row[qid]), std::stod(s)).second) {
            throw EvaluationError("human scores: duplicate question_id " + row[qid]);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Generation experiment

json to_json(const GenItemRecord& r) {
    return {{"question_id", r.question_id},
            {"question", r.question},
            {"gold_answer", r.gold_answer},
            {"gold_chunk_id", r.gold_chunk_id},
            {"answer", r.answer},
            {"chunk_ids", r.chunk_ids},
            {"gold_in_context", r.gold_in_context},
            {"f1", r.f1},
            {"cosine", r.cosine},
            {"judge", to_string(r.judge)},
            {"judge_points", r.judge_points},
            {"judge_parse_failed", r.judge_parse_failed},
            {"prompt_sha256", r.prompt_sha256}};
}

GenItemRecord gen_item_from_json(const json& j) {
    GenItemRecord r;
    r.question_id = j.at("question_id").get<std::string>();
    r.question = j.at("question").get<std::string>();
    r.gold_answer = j.at("gold_answer").get<std::string>();
    r.gold_chunk_id = j.at("gold_chunk_id").get<std::string>();
    r.answer = j.at("answer").get<std::string>();
    r.chunk_ids = j.at("chunk_ids").get<std::vector<std::string>>();
    r.gold_in_context = j.at("gold_in_context").get<bool>();
    r.f1 = j.at("f1").get<double>();
    r.cosine = j.at("cosine").get<double>();
    r.judge = verdict_from_label(j.at("judge").get<std::string>());
    r.judge_points = j.at("judge_points").get<double>();
    r.judge_parse_failed = j.value("judge_parse_failed", false);
    r.prompt_sha256 = j.value("prompt_sha256", "");
    if (r.judge_points != judge_points(r.judge)) {
        throw EvaluationError("item " + r.question_id + ": judge_points inconsistent with judge label");
    }
    return r;
}

namespace {

MetricMeans means(std::span<const GenItemRecord> items, bool gold_only) {
    MetricMeans m;
    double f1 = 0, cos = 0, judge = 0;
    for (const auto& r : items) {
        if (gold_only && !r.gold_in_context) continue;
        ++m.n;
        f1 += r.f1;
        cos += r.cosine;
        judge += r.judge_points;
    }
    if (m.n > 0) {
        const double n = static_cast<double>(m.n);
        m.f1 = f1 / n;
        m.cosine = cos / n;
        m.judge = judge / n;
    }
    return m;
}

json to_json(const MetricMeans& m) {
    return {{"n", m.n}, {"f1", mean_or_null(m.f1)}, {"cosine", mean_or_null(m.cosine)}, {"llm", mean_or_null(m.judge)}};
}

MetricMeans means_from_json(const json& j) {
    MetricMeans m;
    m.n = j.at("n").get<std::size_t>();
    m.f1 = opt_double(j, "f1");
    m.cosine = opt_double(j, "cosine");
    m.judge = opt_double(j, "llm");
    return m;
}

// Spaces calls at least `interval` apart across threads.
class CallSpacer {
public:
    explicit CallSpacer(std::chrono::milliseconds interval) : interval_(interval) {}
    void wait() {
        if (interval_.count() == 0) return;
        std::chrono::steady_clock::time_point slot;
        {
            std::lock_guard lock(mutex_);
            const auto now = std::chrono::steady_clock::now();
            slot = std::max(now, next_);
            next_ = slot + interval_;
        }
        std::this_thread::sleep_until(slot);
    }

private:
    std::chrono::milliseconds interval_;
    std::mutex mutex_;
    std::chrono::steady_clock::time_point next_{};
};

class NoRetriever final : public Retriever {
public:
    RetrievalResult search(std::string_view, std::size_t) const override {
        throw EvaluationError("no retriever configured");
    }
    std::string id() const override { return "none"; }
};

}  // namespace

GenAggregates recompute_aggregates(std::span<const GenItemRecord> items) {
    return {means(items, false), means(items, true)};
}

json to_json(const GenReport& r) {
    json items = json::array();
    for (const auto& i : r.items) items.push_back(to_json(i));
    return {{"config", r.config},
            {"items", items},
            {"failures", r.failures},
            {"aggregates", {{"all", to_json(r.aggregates.all)}, {"gold_in_context", to_json(r.aggregates.gold_in_context)}}},
            {"counts",
             {{"total", r.items.size() + r.failures.size() + r.skipped},
              {"scored", r.items.size()},
              {"failed", r.failures.size()},
              {"skipped", r.skipped},
              {"gold_in_context", r.aggregates.gold_in_context.n}}},
            {"created_at", r.created_at}};
}

GenReport gen_report_from_json(const json& j) {
    GenReport r;
    r.config = j.at("config");
    for (const auto& i : j.at("items")) r.items.push_back(gen_item_from_json(i));
    for (const auto& f : j.value("failures", json::array())) r.failures.push_back(f);
    const json& agg = j.at("aggregates");
    r.aggregates.all = means_from_json(agg.at("all"));
    r.aggregates.gold_in_context = means_from_json(agg.at("gold_in_context"));
    r.skipped = j.at("counts").value("skipped", std::size_t{0});
    r.created_at = j.value("created_at", "");
    return r;
}

GenReport evaluate_generation(const QADataset& ds, const GenerationSetup& setup, std::size_t k) {
    if (!setup.chunks || !setup.generator || !setup.cosine_embedder || !setup.judge) {
        throw EvaluationError("generation setup needs chunks, generator, cosine embedder and judge");
    }
    if (k > 0 && !setup.retriever) throw EvaluationError("k > 0 needs a retriever");
    if (ds.corpus_fingerprint != setup.chunks->fingerprint()) {
        throw FingerprintMismatch("dataset", ds.corpus_fingerprint, setup.chunks->fingerprint());
    }
    static const NoRetriever no_retriever;
    const Retriever& retriever = setup.retriever ? *setup.retriever : no_retriever;
    CallSpacer spacer(setup.judge_interval);

    std::vector<std::optional<GenItemRecord>> records(ds.items.size());
    std::vector<std::optional<json>> failed(ds.items.size());
    parallel_for(ds.items.size(), setup.max_parallel, [&](std::size_t i) {
        const QAItem& item = ds.items[i];
        const std::string* question = question_for(item, setup.variant);
        if (!question) return;
        std::string stage = "generation";
        try {
            const GroundedAnswer a = answer(*question, retriever, *setup.chunks, *setup.generator, k, setup.prompt);
            GenItemRecord r;
            r.question_id = item.id;
            r.question = *question;
            r.gold_answer = item.answer;
            r.gold_chunk_id = item.gold_chunk_id;
            r.answer = a.answer;
            r.chunk_ids = a.used_chunk_ids;
            r.gold_in_context = std::find(r.chunk_ids.begin(), r.chunk_ids.end(), item.gold_chunk_id) != r.chunk_ids.end();
            r.prompt_sha256 = a.prompt_hash;
            r.f1 = token_f1(r.answer, r.gold_answer);
            stage = "cosine";
            r.cosine = embedding_cosine(r.answer, r.gold_answer, *setup.cosine_embedder);
            stage = "judge";
            spacer.wait();
            const JudgeResult verdict = llm_judge(*question, r.answer, item.answer, item.span, *setup.judge);
            r.judge = verdict.verdict;
            r.judge_points = judge_points(verdict.verdict);
            r.judge_parse_failed = verdict.parse_failed;
            records[i] = std::move(r);
        } catch (const AnswerError& e) {
            json f = failure_record(item.id, stage, to_string(e.cause().error_kind()), e.what());
            f["prompt_sha256"] = e.prompt_hash();
            f["chunk_ids"] = e.chunk_ids();
            failed[i] = std::move(f);
        } catch (const ProviderError& e) {
            failed[i] = failure_record(item.id, stage, to_string(e.error_kind()), e.what());
        } catch (const Error& e) {
            failed[i] = failure_record(item.id, stage, e.kind(), e.what());
        }
    });

    GenReport report;
    for (std::size_t i = 0; i < ds.items.size(); ++i) {
        if (records[i]) {
            report.items.push_back(std::move(*records[i]));
        } else if (failed[i]) {
            report.failures.push_back(std::move(*failed[i]));
        } else {
            ++report.skipped;
        }
    }
    std::sort(report.items.begin(), report.items.end(),
              [](const GenItemRecord& a, const GenItemRecord& b) { return a.question_id < b.question_id; });
    report.aggregates = recompute_aggregates(report.items);
    report.config = {{"model", setup.generator->model_id()},
                     {"k", k},
                     {"chunk_size", setup.chunks->config().chunk_size},
                     {"overlap", setup.chunks->config().overlap},
                     {"corpus_fingerprint", setup.chunks->fingerprint()},
                     {"variant", to_string(setup.variant)},
                     {"retriever", k > 0 ? retriever.id() : std::string("none")},
                     {"prompt_language", setup.prompt.language},
                     {"prompt_version", setup.prompt.version()},
                     {"temperature", setup.generator->config().temperature},
                     {"cosine_embedder", setup.cosine_embedder->model_id()},
                     {"cosine_mapping", "max(0, cos) * 100"},
                     {"judge", setup.judge->model_id()},
                     {"judge_sees_span", true},
                     {"judge_points", {{"Totally correct", 100}, {"Mostly correct", 50}, {"Incorrect", 0}}},
                     {"dataset_items", ds.items.size()},
                     {"reference_label", setup.reference_label}};
    report.created_at = utc_timestamp();
    return report;
}

std::vector<GenReport> run_experiment(const QADataset& ds, const GenerationSetup& setup, std::span<const std::size_t> ks,
                                      bool with_ablation) {
    if (!setup.chunks) throw EvaluationError("generation setup needs chunks");
    if (ds.corpus_fingerprint != setup.chunks->fingerprint()) {
        throw FingerprintMismatch("dataset", ds.corpus_fingerprint, setup.chunks->fingerprint());
    }
    std::vector<GenReport> reports;
    for (std::size_t k : ks) {
        if (k == 0) continue;
        reports.push_back(evaluate_generation(ds, setup, k));
    }
    if (with_ablation) reports.push_back(evaluate_generation(ds, setup, 0));
    return reports;
}

std::string table3_csv(std::span<const GenReport> reports) {
    std::string out = csv_row({"block", "model", "k", "variant", "n", "f1", "cosine", "llm", "published_f1",
                               "published_cosine", "published_llm"});
    auto row = [&](const GenReport& r, std::string_view block, const MetricMeans& m) {
        const std::size_t k = r.k();
        const auto* pub = find_published(r.config.value("reference_label", ""), block, k);
        out += csv_row({std::string(block), r.config.value("model", ""), std::to_string(k),
                        r.config.value("variant", ""), std::to_string(m.n), fixed_or_empty(m.f1),
                        fixed_or_empty(m.cosine), fixed_or_empty(m.judge), pub ? format_fixed(pub->f1, 2) : "",
                        pub ? format_fixed(pub->cosine, 2) : "", pub ? format_fixed(pub->llm, 2) : ""});
    };
    for (const auto& r : reports) {
        if (r.k() == 0) {
            row(r, "no_context", r.aggregates.all);
        } else {
            row(r, "all", r.aggregates.all);
            row(r, "gold_in_context", r.aggregates.gold_in_context);
        }
    }
    return out;
}

void save_report(const json& report, const std::vector<json>& failures, const std::filesystem::path& path) {
    write_file_atomic(path, report.dump(2) + "\n");
    if (!failures.empty()) {
        auto manifest = path;
        manifest.replace_extension(".failures.jsonl");
        write_file_atomic(manifest, to_jsonl(failures));
    }
}

CorrelationMatrix correlate_report(const GenReport& report, const std::map<std::string, double>* human) {
    std::vector<std::string> names = {"f1", "cosine", "llm"};
    std::vector<std::vector<double>> cols(human ? 4 : 3);
    for (const auto& item : report.items) {
        double h = 0;
        if (human) {
            const auto it = human->find(item.question_id);
            if (it == human->end()) continue;
            h = it->second;
        }
        cols[0].push_back(item.f1);
        cols[1].push_back(item.cosine);
        cols[2].push_back(item.judge_points);
        if (human) cols[3].push_back(h);
    }
    if (human) names.push_back("human");
    return metric_correlation(std::move(names), cols);
}

// ---------------------------------------------------------------------------
// Published values

std::span<const PublishedGenRow> published_generation() {
    static constexpr PublishedGenRow rows[] = {
        {"GPT-3.5", "all", 3, 34.71, 89.18, 19.25},
        {"GPT-3.5", "all", 5, 36.31, 89.43, 21.03},
        {"GPT-3.5", "all", 8, 36.24, 89.56, 22.04},
        {"Llama-3", "all", 3, 17.96, 85.44, 15.03},
        {"Llama-3", "all", 5, 19.05, 87.61, 16.55},
        {"Llama-3", "all", 8, 19.85, 88.10, 17.56},
        {"Mixtral", "all", 3, 29.85, 88.35, 15.54},
        {"Mixtral", "all", 5, 30.97, 88.48, 16.21},
        {"Mixtral", "all", 8, 32.83, 88.96, 20.43},
        {"Sabia-2", "all", 3, 28.48, 88.18, 15.03},
        {"Sabia-2", "all", 5, 29.76, 88.44, 18.91},
        {"Sabia-2", "all", 8, 30.93, 88.49, 21.11},
        {"GPT-3.5", "gold_in_context", 3, 47.50, 92.99, 54.02},
        {"GPT-3.5", "gold_in_context", 5, 48.87, 92.93, 51.96},
        {"GPT-3.5", "gold_in_context", 8, 47.08, 92.61, 50.24},
        {"Llama-3", "gold_in_context", 3, 23.61, 89.94, 46.30},
        {"Llama-3", "gold_in_context", 5, 24.61, 90.66, 42.97},
        {"Llama-3", "gold_in_context", 8, 24.18, 90.96, 40.19},
        {"Mixtral", "gold_in_context", 3, 41.76, 92.25, 45.97},
        {"Mixtral", "gold_in_context", 5, 41.82, 91.82, 43.53},
        {"Mixtral", "gold_in_context", 8, 42.28, 91.85, 48.28},
        {"Sabia-2", "gold_in_context", 3, 38.30, 91.23, 44.96},
        {"Sabia-2", "gold_in_context", 5, 39.19, 91.10, 47.19},
        {"Sabia-2", "gold_in_context", 8, 39.11, 91.07, 47.54},
        {"GPT-3.5", "no_context", 0, 35.08, 88.90, 13.68},
        {"Llama-3", "no_context", 0, 15.36, 87.32, 3.04},
        {"Mixtral", "no_context", 0, 25.41, 87.20, 4.89},
        {"Sabia-2", "no_context", 0, 27.02, 87.36, 6.58},
    };
    return rows;
}

std::span<const PublishedRetrievalRow> published_retrieval() {
    static constexpr PublishedRetrievalRow rows[] = {
        {"MiniLM-L12-v2", 2000, "original", 0.23, 0.40},   {"MiniLM-L12-v2", 4000, "original", 0.10, 0.19},
        {"MiniLM-L12-v2", 8000, "original", 0.05, 0.11},   {"Mpnet-base-v2", 2000, "original", 0.23, 0.36},
        {"Mpnet-base-v2", 4000, "original", 0.10, 0.19},   {"Mpnet-base-v2", 8000, "original", 0.07, 0.12},
        {"Distiluse-v1", 2000, "original", 0.18, 0.36},    {"Distiluse-v1", 4000, "original", 0.11, 0.22},
        {"Distiluse-v1", 8000, "original", 0.08, 0.16},    {"Distiluse-v2", 2000, "original", 0.12, 0.21},
        {"Distiluse-v2", 4000, "original", 0.07, 0.14},    {"Distiluse-v2", 8000, "original", 0.05, 0.10},
        {"BM25", 2000, "original", 0.31, 0.51},            {"BM25", 4000, "original", 0.31, 0.54},
        {"BM25", 8000, "original", 0.35, 0.57},            {"Random", 2000, "original", 0.00, 0.00},
        {"Random", 4000, "original", 0.00, 0.00},          {"Random", 8000, "original", 0.00, 0.00},
        {"MiniLM-L12-v2", 2000, "paraphrased", 0.13, 0.27}, {"MiniLM-L12-v2", 4000, "paraphrased", 0.06, 0.13},
        {"MiniLM-L12-v2", 8000, "paraphrased", 0.05, 0.11}, {"Mpnet-base-v2", 2000, "paraphrased", 0.16, 0.30},
        {"Mpnet-base-v2", 4000, "paraphrased", 0.07, 0.14}, {"Mpnet-base-v2", 8000, "paraphrased", 0.06, 0.10},
        {"Distiluse-v1", 2000, "paraphrased", 0.13, 0.27},  {"Distiluse-v1", 4000, "paraphrased", 0.08, 0.17},
        {"Distiluse-v1", 8000, "paraphrased", 0.07, 0.13},  {"Distiluse-v2", 2000, "paraphrased", 0.08, 0.15},
        {"Distiluse-v2", 4000, "paraphrased", 0.05, 0.11},  {"Distiluse-v2", 8000, "paraphrased", 0.03, 0.08},
        {"BM25", 2000, "paraphrased", 0.15, 0.30},          {"BM25", 4000, "paraphrased", 0.17, 0.32},
        {"BM25", 8000, "paraphrased", 0.19, 0.37},          {"Random", 2000, "paraphrased", 0.00, 0.00},
        {"Random", 4000, "paraphrased", 0.00, 0.00},        {"Random", 8000, "paraphrased", 0.00, 0.00},
    };
    return rows;
}

}  // namespace ragqa
