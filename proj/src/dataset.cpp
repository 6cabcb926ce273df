#include "ragqa/dataset.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <mutex>
#include <random>
#include <unordered_map>

#include "ragqa/parallel.hpp"
#include "ragqa/prompt_format.hpp"
#include "ragqa/text.hpp"

namespace ragqa {

json to_json(const QAItem& item) {
    json j = {{"id", item.id},
              {"question", item.question},
              {"paraphrase", item.paraphrase ? json(*item.paraphrase) : json(nullptr)},
              {"answer", item.answer},
              {"gold_chunk_id", item.gold_chunk_id},
              {"span", item.span},
              {"generator_model", item.generator_model}};
    if (item.paraphrase_flagged) j["paraphrase_flagged"] = true;
    return j;
}

QAItem qa_item_from_json(const json& j) {
    QAItem item;
    item.id = j.at("id").get<std::string>();
    item.question = j.at("question").get<std::string>();
    if (auto it = j.find("paraphrase"); it != j.end() && it->is_string()) item.paraphrase = it->get<std::string>();
    item.answer = j.at("answer").get<std::string>();
    item.gold_chunk_id = j.at("gold_chunk_id").get<std::string>();
    item.span = j.at("span").get<std::string>();
    item.generator_model = j.value("generator_model", "");
    item.paraphrase_flagged = j.value("paraphrase_flagged", false);
    return item;
}

const QAItem* QADataset::find(std::string_view id) const {
    for (const auto& item : items) {
        if (item.id == id) return &item;
    }
    return nullptr;
}

json manifest_json(const QADataset& ds) {
    std::size_t paraphrased = 0, flagged = 0;
    for (const auto& item : ds.items) {
        paraphrased += item.paraphrase.has_value();
        flagged += item.paraphrase_flagged;
    }
    return {{"corpus_fingerprint", ds.corpus_fingerprint},
            {"chunk_size", ds.chunking.chunk_size},
            {"overlap", ds.chunking.overlap},
            {"generator_model", ds.generator_model},
            {"seed", ds.seed},
            {"counts",
             {{"sampled", ds.counts.sampled},
              {"accepted", ds.counts.accepted},
              {"rejected", ds.counts.rejected},
              {"reject_reasons", ds.counts.reject_reasons},
              {"items", ds.items.size()},
              {"paraphrased", paraphrased},
              {"paraphrase_flagged", flagged}}},
            {"paraphrase_model", ds.paraphrase_model}};
}

json to_json(const Reject& r) {
    return {{"chunk_id", r.chunk_id}, {"reason", r.reason}, {"detail", r.detail}, {"raw_response", r.raw_response}};
}

json to_json(const Violation& v) {
    return {{"item_id", v.item_id}, {"kind", v.kind}, {"detail", v.detail}};
}

std::vector<const Chunk*> sample_chunks(std::span<const Chunk> chunks, std::size_t n, std::uint64_t seed) {
    if (n > chunks.size()) {
        throw DatasetError("cannot sample " + std::to_string(n) + " chunks from " + std::to_string(chunks.size()));
    }
    std::vector<std::size_t> order(chunks.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(seed);
    std::vector<const Chunk*> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = i + uniform_below(rng, order.size() - i);
        std::swap(order[i], order[j]);
        out.push_back(&chunks[order[i]]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Three-element parser

namespace {

enum Field { kQuestion = 0, kAnswer = 1, kSpan = 2 };
constexpr std::array<const char*, 3> kFieldNames = {"PERGUNTA", "RESPOSTA", "TRECHO"};

struct Label {
    std::string_view text;
    Field field;
};

// Longest first so "text span" wins over "span".
constexpr std::array<Label, 7> kLabels = {{{"text span", kSpan},
                                           {"pergunta", kQuestion},
                                           {"question", kQuestion},
                                           {"resposta", kAnswer},
                                           {"answer", kAnswer},
                                           {"trecho", kSpan},
                                           {"span", kSpan}}};

bool starts_with_icase(std::string_view s, std::string_view prefix) {
    if (s.size() < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(s[i])) != prefix[i]) return false;
    }
    return true;
}

std::string_view skip_spaces(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    return s;
}

std::string_view skip_emphasis(std::string_view s) {
    while (!s.empty() && (s.front() == '*' || s.front() == '_')) s.remove_prefix(1);
    return skip_spaces(s);
}

// Heading marks, quote marks and list bullets ("-", "*", "•", "1.", "2)").
std::string_view strip_line_prefix(std::string_view s) {
    s = skip_spaces(s);
    while (!s.empty() && (s.front() == '#' || s.front() == '>')) s = skip_spaces(s.substr(1));
    if (s.starts_with("- ") || s.starts_with("* ") || s.starts_with("+ ")) s = skip_spaces(s.substr(2));
    if (s.starts_with("•")) s = skip_spaces(s.substr(3));
    std::size_t digits = 0;
    while (digits < s.size() && std::isdigit(static_cast<unsigned char>(s[digits]))) ++digits;
    if (digits > 0 && digits + 1 < s.size() && (s[digits] == '.' || s[digits] == ')') && s[digits + 1] == ' ') {
        s = skip_spaces(s.substr(digits + 2));
    }
    return s;
}

struct LabelMatch {
    Field field;
    std::string_view rest;
};

std::optional<LabelMatch> match_label(std::string_view line) {
    std::string_view s = skip_emphasis(strip_line_prefix(line));
    for (const auto& label : kLabels) {
        if (!starts_with_icase(s, label.text)) continue;
        std::string_view rest = s.substr(label.text.size());
        if (!rest.empty() && std::isalnum(static_cast<unsigned char>(rest.front()))) continue;
        rest = skip_emphasis(rest);
        bool separated = false;
        for (std::string_view sep : {":", "：", "—", "–", "-"}) {
            if (rest.starts_with(sep)) {
                rest.remove_prefix(sep.size());
                separated = true;
                break;
            }
        }
        rest = skip_emphasis(rest);
        if (!separated && !rest.empty()) continue;  // prose such as "Answer the question"
        return LabelMatch{label.field, rest};
    }
    return std::nullopt;
}

bool is_fence(std::string_view line) {
    return skip_spaces(line).starts_with("```");
}

std::string strip_wrappers(std::string value) {
    static const std::array<std::pair<std::string_view, std::string_view>, 7> pairs = {{{"\"", "\""},
                                                                                         {"“", "”"},
                                                                                         {"'", "'"},
                                                                                         {"«", "»"},
                                                                                         {"`", "`"},
                                                                                         {"**", "**"},
                                                                                         {"__", "__"}}};
    bool changed = true;
    while (changed) {
        changed = false;
        value = trim(value);
        for (const auto& [open, close] : pairs) {
            if (value.size() >= open.size() + close.size() && std::string_view(value).starts_with(open) &&
                std::string_view(value).ends_with(close)) {
                value = value.substr(open.size(), value.size() - open.size() - close.size());
                changed = true;
                break;
            }
        }
    }
    return value;
}

// Puts an all-caps label that appears mid-line on its own line when the line
// already started with a label, so that "PERGUNTA: a RESPOSTA: b TRECHO: c"
// parses like the multi-line form.
std::string split_inline_labels(std::string_view raw) {
    std::string out;
    out.reserve(raw.size() + 8);
    std::size_t line_start = 0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i] == '\n') {
            line_start = i + 1;
        } else if (i > line_start && (raw[i - 1] == ' ' || raw[i - 1] == '\t' || raw[i - 1] == '|')) {
            for (std::string_view label : {"PERGUNTA:", "RESPOSTA:", "TRECHO:", "QUESTION:", "ANSWER:", "SPAN:"}) {
                if (!raw.substr(i).starts_with(label)) continue;
                const auto before = match_label(raw.substr(line_start, i - line_start));
                if (before && !trim(before->rest).empty()) {
                    out += '\n';
                    line_start = i;
                }
                break;
            }
        }
        out += raw[i];
    }
    return out;
}

std::optional<ThreeElements> parse_json_object(std::string_view raw) {
    std::string text = trim(raw);
    if (text.starts_with("```")) {
        const auto first_nl = text.find('\n');
        const auto last_fence = text.rfind("```");
        if (first_nl == std::string::npos || last_fence <= first_nl) return std::nullopt;
        text = trim(std::string_view(text).substr(first_nl + 1, last_fence - first_nl - 1));
    }
    if (!text.starts_with("{")) return std::nullopt;
    const json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;

    std::array<std::optional<std::string>, 3> fields;
    for (const auto& [key, value] : j.items()) {
        const auto m = match_label(key + ":");
        if (!m || !m->rest.empty()) continue;
        if (fields[m->field]) throw DatasetError(std::string("duplicate field ") + kFieldNames[m->field]);
        if (!value.is_string()) throw DatasetError(std::string("field ") + kFieldNames[m->field] + " is not text");
        fields[m->field] = value.get<std::string>();
    }
    ThreeElements out;
    std::string* targets[3] = {&out.question, &out.answer, &out.span};
    for (int f = 0; f < 3; ++f) {
        if (!fields[f]) throw DatasetError(std::string("missing field ") + kFieldNames[f]);
        *targets[f] = strip_wrappers(*fields[f]);
        if (targets[f]->empty()) throw DatasetError(std::string("empty field ") + kFieldNames[f]);
    }
    return out;
}

}  // namespace

ThreeElements parse_three_elements(std::string_view raw) {
    if (auto from_json = parse_json_object(raw)) return *from_json;

    const std::string text = split_inline_labels(raw);
    std::array<std::optional<std::string>, 3> fields;
    int current = -1;
    bool closed = false;  // current field ended at a blank line

    for (const auto& line_with_cr : split(text, '\n')) {
        std::string_view line = line_with_cr;
        if (line.ends_with('\r')) line.remove_suffix(1);
        if (is_fence(line)) continue;
        if (auto m = match_label(line)) {
            if (fields[m->field]) throw DatasetError(std::string("duplicate field ") + kFieldNames[m->field]);
            current = m->field;
            closed = false;
            fields[current] = std::string(m->rest);
            continue;
        }
        if (current < 0 || closed) continue;
        std::string& value = *fields[current];
        if (trim(line).empty()) {
            if (!trim(value).empty()) closed = true;
            continue;
        }
        if (!trim(value).empty()) value += '\n';
        value += trim(line);
    }

    ThreeElements out;
    std::string* targets[3] = {&out.question, &out.answer, &out.span};
    for (int f = 0; f < 3; ++f) {
        if (!fields[f]) throw DatasetError(std::string("missing field ") + kFieldNames[f]);
        *targets[f] = strip_wrappers(*fields[f]);
        if (targets[f]->empty()) throw DatasetError(std::string("empty field ") + kFieldNames[f]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Generation

std::pair<std::string, std::string> qa_generation_prompt(const Chunk& chunk) {
    std::string system =
        "Você ajuda a construir um conjunto de avaliação para um assistente virtual da Universidade de São Paulo "
        "(USP), uma universidade pública do estado de São Paulo cujas normas são publicadas em resoluções, "
        "portarias e regimentos.";
    std::string user =
        "Leia o trecho de documento abaixo e crie uma pergunta que ele responda. Crie perguntas autocontidas, "
        "que possam ser entendidas sem referência direta ao texto. Responda exatamente neste formato, sem "
        "nenhum outro texto:\n"
        "PERGUNTA: <a pergunta>\n"
        "RESPOSTA: <a resposta>\n"
        "TRECHO: <o trecho do documento que contém a resposta, copiado literalmente>\n\n"
        "Documento: " + chunk.title + " (" + chunk.date + ")\n" + wrap_block(chunk.text);
    return {std::move(system), std::move(user)};
}

QAItem generate_qa(const Chunk& chunk, const LlmProvider& llm) {
    const std::size_t words = word_count(chunk.text);
    if (words < kMinWordsForGeneration) {
        throw QaRejected("too_short", chunk.id + " has " + std::to_string(words) + " words");
    }
    const auto [system, user] = qa_generation_prompt(chunk);
    std::string reason, detail, raw;
    for (int attempt = 0; attempt < 2; ++attempt) {
        try {
            raw = llm.complete(system, user).response;
        } catch (const ProviderError& e) {
            throw QaRejected("provider_error", e.what());
        }
        ThreeElements parsed;
        try {
            parsed = parse_three_elements(raw);
        } catch (const DatasetError& e) {
            reason = "parse_error";
            detail = e.what();
            continue;
        }
        if (chunk.text.find(parsed.span) == std::string::npos) {
            reason = "span_not_found";
            detail = "span not found in " + chunk.id + ": " + parsed.span;
            continue;
        }
        QAItem item;
        item.id = "qa-" + chunk.id;
        item.question = std::move(parsed.question);
        item.answer = std::move(parsed.answer);
        item.span = std::move(parsed.span);
        item.gold_chunk_id = chunk.id;
        item.generator_model = llm.model_id();
        return item;
    }
    throw QaRejected(reason, detail, raw);
}

GenerationRun generate_dataset(const ChunkSet& chunks, const LlmProvider& llm, std::size_t n, std::uint64_t seed,
                               std::size_t max_parallel) {
    const auto sample = sample_chunks(chunks.chunks(), n, seed);
    std::vector<std::optional<QAItem>> items(sample.size());
    std::vector<std::optional<Reject>> rejects(sample.size());
    parallel_for(sample.size(), max_parallel, [&](std::size_t i) {
        try {
            items[i] = generate_qa(*sample[i], llm);
        } catch (const QaRejected& e) {
            rejects[i] = Reject{sample[i]->id, e.reason(), e.detail(), e.raw_response()};
        } catch (const std::exception& e) {
            rejects[i] = Reject{sample[i]->id, "error", e.what(), {}};
        }
    });

    GenerationRun run;
    QADataset& ds = run.dataset;
    ds.corpus_fingerprint = chunks.fingerprint();
    ds.chunking = chunks.config();
    ds.generator_model = llm.model_id();
    ds.seed = seed;
    ds.counts.sampled = sample.size();
    for (std::size_t i = 0; i < sample.size(); ++i) {
        if (items[i]) {
            ds.items.push_back(std::move(*items[i]));
        } else {
            ++ds.counts.reject_reasons[rejects[i]->reason];
            run.rejects.push_back(std::move(*rejects[i]));
        }
    }
    ds.counts.accepted = ds.items.size();
    ds.counts.rejected = run.rejects.size();
    return run;
}

// ---------------------------------------------------------------------------
// Paraphrase

std::pair<std::string, std::string> paraphrase_prompt(std::string_view question) {
    std::string system =
        "Você reescreve perguntas sobre as normas da Universidade de São Paulo (USP) para um conjunto de avaliação.";
    std::string user =
        "Reformule a pergunta abaixo da maneira mais diferente possível, preservando o conteúdo relevante. "
        "Use outras palavras e outra estrutura de frase. Responda apenas com a nova pergunta, em português.\n\n" +
        wrap_block(question);
    return {std::move(system), std::move(user)};
}

QAItem paraphrase(QAItem item, const LlmProvider& llm) {
    const auto [system, user] = paraphrase_prompt(item.question);
    const auto original = tokenize(item.question);
    for (int attempt = 0; attempt < 2; ++attempt) {
        std::string reply = strip_wrappers(llm.complete(system, user).response);
        if (!reply.empty() && tokenize(reply) != original) {
            item.paraphrase = std::move(reply);
            item.paraphrase_flagged = false;
            return item;
        }
    }
    item.paraphrase.reset();
    item.paraphrase_flagged = true;
    return item;
}

QADataset paraphrase_dataset(QADataset ds, const LlmProvider& llm, std::size_t max_parallel) {
    parallel_for(ds.items.size(), max_parallel, [&](std::size_t i) {
        try {
            ds.items[i] = paraphrase(std::move(ds.items[i]), llm);
        } catch (const std::exception&) {
            ds.items[i].paraphrase.reset();
            ds.items[i].paraphrase_flagged = true;
        }
    });
    ds.paraphrase_model = llm.model_id();
    return ds;
}

// ---------------------------------------------------------------------------
// Validation

std::vector<Violation> validate_dataset(const QADataset& ds, const ChunkSet& chunks) {
    if (ds.corpus_fingerprint != chunks.fingerprint()) {
        throw FingerprintMismatch("dataset", ds.corpus_fingerprint, chunks.fingerprint());
    }
    std::vector<std::vector<Violation>> per_item(ds.items.size());
    parallel_for(ds.items.size(), default_parallelism(), [&](std::size_t i) {
        const QAItem& item = ds.items[i];
        auto& out = per_item[i];
        const Chunk* gold = chunks.find(item.gold_chunk_id);
        if (!gold) {
            out.push_back({item.id, "dangling_gold", "gold chunk " + item.gold_chunk_id + " is not in the corpus"});
        } else if (gold->text.find(item.span) == std::string::npos) {
            out.push_back({item.id, "span_not_in_gold", "span does not occur in " + item.gold_chunk_id});
        }
        std::vector<std::string> holders;
        for (const auto& c : chunks.chunks()) {
            if (c.text.find(item.span) != std::string::npos) holders.push_back(c.id);
        }
        if (holders.size() > 1) {
            std::string list;
            for (const auto& h : holders) list += (list.empty() ? "" : ", ") + h;
            out.push_back({item.id, "ambiguous_span", "span occurs in " + std::to_string(holders.size()) +
                                                          " chunks: " + list});
        }
    });

    std::vector<Violation> violations;
    std::unordered_map<std::string, std::string> first_by_question;
    std::unordered_map<std::string, std::size_t> id_count;
    for (std::size_t i = 0; i < ds.items.size(); ++i) {
        const QAItem& item = ds.items[i];
        if (id_count[item.id]++ == 1) violations.push_back({item.id, "duplicate_id", "item id used more than once"});
        std::string key;
        for (const auto& t : tokenize(item.question)) key += t + ' ';
        const auto [it, inserted] = first_by_question.emplace(key, item.id);
        if (!inserted) violations.push_back({item.id, "duplicate_question", "same question as " + it->second});
        for (auto& v : per_item[i]) violations.push_back(std::move(v));
    }
    return violations;
}

// ---------------------------------------------------------------------------
// Files

std::filesystem::path manifest_path(const std::filesystem::path& dataset_path) {
    auto p = dataset_path;
    return p.replace_extension(".manifest.json");
}

void save_dataset(const QADataset& ds, const std::filesystem::path& path) {
    std::vector<json> lines;
    lines.reserve(ds.items.size());
    for (const auto& item : ds.items) lines.push_back(to_json(item));
    write_file_atomic(path, to_jsonl(lines));
    write_file_atomic(manifest_path(path), manifest_json(ds).dump(2) + "\n");
}

QADataset load_dataset(const std::filesystem::path& path) {
    const auto mpath = manifest_path(path);
    if (!std::filesystem::exists(mpath)) throw DatasetError("dataset manifest not found: " + mpath.string());
    QADataset ds;
    try {
        const json m = json::parse(read_file(mpath));
        ds.corpus_fingerprint = m.at("corpus_fingerprint").get<std::string>();
        ds.chunking.chunk_size = m.at("chunk_size").get<std::size_t>();
        ds.chunking.overlap = m.at("overlap").get<std::size_t>();
        ds.generator_model = m.value("generator_model", "");
        ds.seed = m.value("seed", std::uint64_t{0});
        ds.paraphrase_model = m.value("paraphrase_model", "");
        if (auto c = m.find("counts"); c != m.end()) {
            ds.counts.sampled = c->value("sampled", std::size_t{0});
            ds.counts.accepted = c->value("accepted", std::size_t{0});
            ds.counts.rejected = c->value("rejected", std::size_t{0});
            if (c->contains("reject_reasons")) {
                ds.counts.reject_reasons = c->at("reject_reasons").get<std::map<std::string, std::size_t>>();
            }
        }
    } catch (const json::exception& e) {
        throw DatasetError("malformed manifest " + mpath.string() + ": " + e.what());
    }
    for_each_jsonl(path, [&](const json& j, std::size_t line) {
        try {
            ds.items.push_back(qa_item_from_json(j));
        } catch (const json::exception& e) {
            throw DatasetError(path.string() + " record " + std::to_string(line) + ": " + e.what());
        }
    });
    return ds;
}

void save_rejects(std::span<const Reject> rejects, const std::filesystem::path& path) {
    std::vector<json> lines;
    for (const auto& r : rejects) lines.push_back(to_json(r));
    write_file_atomic(path, to_jsonl(lines));
}

void write_review_csv(const QADataset& ds, const ChunkSet& chunks, const std::filesystem::path& path) {
    std::string out = csv_row({"id", "question", "paraphrase", "answer", "span", "gold_chunk_id", "chunk_text"});
    for (const auto& item : ds.items) {
        const Chunk* c = chunks.find(item.gold_chunk_id);
        out += csv_row({item.id, item.question, item.paraphrase.value_or(""), item.answer, item.span,
                        item.gold_chunk_id, c ? c->text : ""});
    }
    write_file_atomic(path, out);
}

// ---------------------------------------------------------------------------
// Gold remapping

GoldMapping remap_gold(const QADataset& ds, const ChunkSet& source, const ChunkSet& target) {
    std::unordered_map<std::string, std::vector<const Chunk*>> by_doc;
    for (const auto& c : target.chunks()) by_doc[c.doc_id].push_back(&c);

    GoldMapping mapping;
    mapping.gold.reserve(ds.items.size());
    for (const auto& item : ds.items) {
        std::optional<std::string> found;
        const Chunk* gold = source.find(item.gold_chunk_id);
        const std::size_t byte_pos = gold ? gold->text.find(item.span) : std::string::npos;
        if (gold && byte_pos != std::string::npos) {
            const std::size_t start = gold->text_start + codepoint_length(std::string_view(gold->text).substr(0, byte_pos));
            const std::size_t end = start + codepoint_length(item.span);
            const Chunk* covering = nullptr;
            for (const Chunk* c : by_doc[gold->doc_id]) {
                if (c->text_start > start || c->text_end < end) continue;
                if (c->core_start <= start && start < c->core_end) {
                    covering = c;
                    break;
                }
                if (!covering) covering = c;
            }
            if (covering) found = covering->id;
        }
        if (!found) ++mapping.unmapped;
        mapping.gold.push_back(std::move(found));
    }
    return mapping;
}

}  // namespace ragqa
