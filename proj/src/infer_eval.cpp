#include "templar/infer_eval.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>
#include <thread>

#include "templar/json_io.hpp"
#include "templar/retrieval.hpp"

namespace templar {

std::string mode_name(PromptMode mode) {
    switch (mode) {
        case PromptMode::Naive: return "naive";
        case PromptMode::Cot: return "cot";
        case PromptMode::Cic: return "cic";
        case PromptMode::CicCot: return "cic_cot";
        case PromptMode::Total: return "total";
    }
    throw std::logic_error("unreachable mode");
}

PromptMode mode_from_name(const std::string& name) {
    if (name == "naive") return PromptMode::Naive;
    if (name == "cot") return PromptMode::Cot;
    if (name == "cic") return PromptMode::Cic;
    if (name == "cic_cot") return PromptMode::CicCot;
    if (name == "total") return PromptMode::Total;
    throw std::invalid_argument("unknown prompt mode: " + name);
}

namespace {

constexpr const char* kAnswerMarker = "Final Answer:";
constexpr const char* kStepByStep = "Let's think step by step.";

std::string numbered_lines(const std::vector<std::string>& items, const char* indent) {
    std::string out;
    for (size_t i = 0; i < items.size(); ++i) {
        out += indent + std::to_string(i + 1) + ". " + items[i] + "\n";
    }
    return out;
}

// One block per template. TEMPLATE_ID appears exactly once per block; the
// optimizer's usage detection keys on that literal.
std::string serialize_template(const ThoughtTemplate& t) {
    std::string out = "TEMPLATE_ID: " + t.template_id + " | TEMPLATE_TITLE: " + t.template_name +
                      "\nDescription: " + t.description + "\nReason Flow:\n";
    out += numbered_lines(t.reason_flow, "  ");
    out += "Example Problem: " + t.example.example_problem + "\nExample Solution Steps:\n";
    out += numbered_lines(t.example.solution_steps, "  ");
    out += "Example Final Answer: " + t.example.final_answer + "\n";
    return out;
}

std::string answer_contract() {
    return std::string("End with one line of exactly this form:\n") + kAnswerMarker +
           " [answers]\nwhere [answers] is a bracketed, comma-separated list of quoted answer "
           "strings.";
}

std::string document_block(const std::vector<Document>& documents) {
    std::string out = "DOCUMENTS:\n";
    for (const Document& doc : documents) out += format_document(doc) + "\n\n";
    return out;
}

}  // namespace

std::string build_inference_prompt(const InferenceRequest& request,
                                   const std::vector<ThoughtTemplate>& templates,
                                   const std::vector<Document>& documents) {
    const PromptMode mode = request.mode;
    if (mode == PromptMode::Total && templates.empty()) {
        throw std::invalid_argument("total mode requires a template snapshot");
    }
    if ((mode == PromptMode::Naive || mode == PromptMode::Cot) && !documents.empty()) {
        throw std::invalid_argument(mode_name(mode) + " mode forbids document context");
    }
    if ((mode == PromptMode::Cic || mode == PromptMode::CicCot) && !templates.empty()) {
        throw std::invalid_argument(mode_name(mode) + " mode forbids templates");
    }

    std::string out;
    switch (mode) {
        case PromptMode::Naive:
        case PromptMode::Cot:
            out = "Answer the question.\n\n";
            break;
        case PromptMode::Cic:
        case PromptMode::CicCot:
            out = "Answer the question using the documents below.\n\n" +
                  document_block(documents);
            break;
        case PromptMode::Total:
            out =
                "You are given a set of reusable reasoning templates and a collection of "
                "documents. Answer the question by selecting the templates relevant to it and "
                "applying them step by step, citing evidence from the documents.\n"
                "Write each reasoning step on its own line in the form:\n"
                "Step <n> | TEMPLATE_TITLE: <template name> TEMPLATE_ID: TID_<number> | "
                "TEMPLATE_CONTENT: <how the template applies here>\n\n"
                "TEMPLATES:\n";
            for (const ThoughtTemplate& t : templates) out += serialize_template(t) + "\n";
            out += document_block(documents);
            break;
    }
    out += "Question: " + request.question + "\n" + answer_contract();
    if (mode == PromptMode::Cot || mode == PromptMode::CicCot) {
        out += std::string("\n") + kStepByStep;
    }
    return out;
}

namespace {

std::string trim(std::string_view s) {
    size_t begin = 0;
    size_t end = s.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
    return std::string(s.substr(begin, end - begin));
}

// Strips one layer of item quoting: '...', "...", or the `...' convention.
std::string strip_quotes(std::string trimmed) {
    if (trimmed.size() < 2) return trimmed;
    const char open = trimmed.front();
    if (open != '\'' && open != '"' && open != '`') return trimmed;
    const char close = open == '`' ? '\'' : open;
    if (trimmed.back() != close) return trimmed;
    return trimmed.substr(1, trimmed.size() - 2);
}

// Splits a bracketed payload on commas outside quotes. A backtick opens a
// quote that an apostrophe closes; apostrophes and double quotes close
// themselves.
std::vector<std::string> parse_answer_list(std::string_view inner) {
    std::vector<std::string> items;
    std::string current;
    char closer = 0;
    for (const char c : inner) {
        if (closer != 0) {
            if (c == closer) closer = 0;
            current += c;
        } else if (c == '\'' || c == '"') {
            closer = c;
            current += c;
        } else if (c == '`') {
            closer = '\'';
            current += c;
        } else if (c == ',') {
            items.push_back(current);
            current.clear();
        } else {
            current += c;
        }
    }
    if (!trim(current).empty()) items.push_back(current);
    std::vector<std::string> answers;
    for (const std::string& item : items) {
        answers.push_back(strip_quotes(trim(item)));
    }
    return answers;
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string line;
    std::istringstream in(text);
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

}  // namespace

FinalAnswer parse_final_answer(const std::string& raw_trace) {
    const std::vector<std::string> lines = split_lines(raw_trace);
    for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
        const std::string line = trim(*it);
        if (line.rfind(kAnswerMarker, 0) != 0) continue;
        std::string payload = trim(line.substr(std::string(kAnswerMarker).size()));
        FinalAnswer parsed;
        parsed.from_marker = true;
        if (!payload.empty() && payload.front() == '[' && payload.back() == ']') {
            parsed.answers = parse_answer_list(
                std::string_view(payload).substr(1, payload.size() - 2));
        } else if (!payload.empty()) {
            parsed.answers.push_back(strip_quotes(payload));
        }
        return parsed;
    }
    // No marker anywhere: the trace's last non-empty line is the best guess.
    for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
        const std::string line = trim(*it);
        if (!line.empty()) return {{line}, false};
    }
    return {{}, false};
}

std::set<std::string> detect_used_templates(const std::string& raw_trace) {
    static const std::regex pattern(R"(TEMPLATE_ID:\s*TID_(\d+))");
    std::set<std::string> used;
    for (std::sregex_iterator it(raw_trace.begin(), raw_trace.end(), pattern), end; it != end;
         ++it) {
        used.insert("TID_" + (*it)[1].str());
    }
    return used;
}

std::vector<std::string> unknown_template_ids(const std::set<std::string>& used,
                                              const TemplateStore& store) {
    std::vector<std::string> unknown;
    for (const std::string& id : used) {
        if (store.find(id) == nullptr) unknown.push_back(id);
    }
    return unknown;
}

// ---- Metrics ---------------------------------------------------------------

std::string normalize_answer(std::string_view raw) {
    std::string stripped;
    stripped.reserve(raw.size());
    for (const char c : raw) {
        const auto uc = static_cast<unsigned char>(c);
        if (std::ispunct(uc)) continue;
        stripped += static_cast<char>(std::tolower(uc));
    }
    std::istringstream in(stripped);
    std::string token;
    std::string out;
    while (in >> token) {
        if (token == "a" || token == "an" || token == "the") continue;
        if (!out.empty()) out += ' ';
        out += token;
    }
    return out;
}

std::vector<std::string> normalized_tokens(std::string_view raw) {
    std::istringstream in(normalize_answer(raw));
    std::vector<std::string> tokens;
    std::string token;
    while (in >> token) tokens.push_back(token);
    return tokens;
}

namespace {

void require_gold(const std::vector<std::string>& gold_answers) {
    if (gold_answers.empty()) throw std::invalid_argument("gold answer set must be non-empty");
}

double pair_f1(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
    if (pred.empty() && gold.empty()) return 1.0;
    if (pred.empty() || gold.empty()) return 0.0;
    std::map<std::string, int> remaining;
    for (const std::string& token : gold) ++remaining[token];
    long num_same = 0;
    for (const std::string& token : pred) {
        const auto it = remaining.find(token);
        if (it != remaining.end() && it->second > 0) {
            --it->second;
            ++num_same;
        }
    }
    if (num_same == 0) return 0.0;
    return 2.0 * static_cast<double>(num_same) /
           static_cast<double>(pred.size() + gold.size());
}

// "yes"/"no" by the first normalized token; everything else is unmapped.
std::optional<bool> binary_label(const std::string& text) {
    const std::vector<std::string> tokens = normalized_tokens(text);
    if (tokens.empty()) return std::nullopt;
    if (tokens.front() == "yes") return true;
    if (tokens.front() == "no") return false;
    return std::nullopt;
}

}  // namespace

int exact_match(const std::string& prediction, const std::vector<std::string>& gold_answers) {
    require_gold(gold_answers);
    const std::string normalized = normalize_answer(prediction);
    for (const std::string& gold : gold_answers) {
        if (normalized == normalize_answer(gold)) return 1;
    }
    return 0;
}

double token_f1(const std::string& prediction, const std::vector<std::string>& gold_answers) {
    require_gold(gold_answers);
    const std::vector<std::string> pred_tokens = normalized_tokens(prediction);
    double best = 0.0;
    for (const std::string& gold : gold_answers) {
        best = std::max(best, pair_f1(pred_tokens, normalized_tokens(gold)));
    }
    return best;
}

int binary_accuracy(const std::string& prediction, const std::vector<std::string>& gold_answers) {
    require_gold(gold_answers);
    const std::optional<bool> predicted = binary_label(prediction);
    if (!predicted) return 0;
    for (const std::string& gold : gold_answers) {
        const std::optional<bool> label = binary_label(gold);
        if (label && *label == *predicted) return 1;
    }
    return 0;
}

double score_metric(Metric metric, const std::string& prediction,
                    const std::vector<std::string>& gold_answers) {
    switch (metric) {
        case Metric::F1: return token_f1(prediction, gold_answers);
        case Metric::ExactMatch: return exact_match(prediction, gold_answers);
        case Metric::Accuracy: return binary_accuracy(prediction, gold_answers);
    }
    throw std::logic_error("unreachable metric");
}

// ---- Usage records and results ----------------------------------------------

Json usage_record_to_json(const UsageRecord& record) {
    Json j;
    j["query_id"] = record.query_id;
    j["used_template_ids"] = record.used_template_ids;  // std::set keeps them sorted
    j["prediction"] = record.prediction;
    j["gold_answers"] = record.gold_answers;
    j["metric_value"] = record.metric_value;
    j["raw_trace"] = record.raw_trace;
    return j;
}

UsageRecord usage_record_from_json(const Json& j, const std::string& where) {
    UsageRecord record;
    record.query_id = require_string(j, "query_id", where);
    for (const std::string& id : require_string_array(j, "used_template_ids", where)) {
        record.used_template_ids.insert(id);
    }
    record.prediction = require_string(j, "prediction", where);
    record.gold_answers = require_string_array(j, "gold_answers", where);
    if (!j.contains("metric_value") || !j.at("metric_value").is_number()) {
        throw ParseError(where + ": field \"metric_value\" must be a number");
    }
    record.metric_value = j.at("metric_value").get<double>();
    record.raw_trace = require_string(j, "raw_trace", where);
    return record;
}

void write_usage_log(const std::vector<UsageRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write usage log: " + path);
    for (const UsageRecord& record : records) {
        out << usage_record_to_json(record).dump() << "\n";
    }
}

std::vector<UsageRecord> load_usage_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read usage log: " + path);
    std::vector<UsageRecord> records;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        Json j;
        try {
            j = Json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError("usage log " + path + " line " + std::to_string(line_no) +
                             ": invalid JSON: " + e.what());
        }
        records.push_back(
            usage_record_from_json(j, "usage log line " + std::to_string(line_no)));
    }
    return records;
}

Json eval_result_to_json(const EvalResult& result) {
    Json j;
    j["aggregate"] = result.aggregate;
    j["metric"] = result.metric;
    j["mode"] = result.mode;
    j["backend"] = result.backend_id;
    j["snapshot_iteration"] =
        result.snapshot_iteration ? Json(*result.snapshot_iteration) : Json(nullptr);
    j["k"] = result.k ? Json(*result.k) : Json(nullptr);
    j["token_budget"] = result.token_budget;
    j["rows"] = Json::array();
    for (const EvalRow& row : result.rows) {
        Json r;
        r["query_id"] = row.query_id;
        r["prediction"] = row.prediction;
        r["metric_value"] = row.metric_value;
        r["parse_fallback"] = row.parse_fallback;
        r["error"] = row.error;
        if (row.error) r["error_message"] = row.error_message;
        j["rows"].push_back(std::move(r));
    }
    return j;
}

// ---- Dataset evaluation -------------------------------------------------------

namespace {

bool mode_uses_documents(PromptMode mode) {
    return mode == PromptMode::Cic || mode == PromptMode::CicCot || mode == PromptMode::Total;
}

std::vector<Document> allowlisted(const std::vector<Document>& corpus,
                                  const std::vector<std::string>& allowlist) {
    std::vector<Document> out;
    for (const Document& doc : corpus) {
        if (std::find(allowlist.begin(), allowlist.end(), doc.doc_id) != allowlist.end()) {
            out.push_back(doc);
        }
    }
    return out;
}

}  // namespace

EvalOutcome evaluate_dataset(Gateway& gateway, const DatasetManifest& manifest,
                             const TemplateStore* snapshot, const EvalConfig& config) {
    if (config.mode == PromptMode::Total && snapshot == nullptr) {
        throw std::invalid_argument("total mode requires a template snapshot");
    }
    if (manifest.queries.empty()) throw std::invalid_argument("manifest has no queries");
    const std::vector<ThoughtTemplate> no_templates;
    const std::vector<ThoughtTemplate>& templates =
        config.mode == PromptMode::Total ? snapshot->templates : no_templates;

    std::vector<Document> corpus;
    std::optional<Bm25Index> index;
    std::optional<PackedContext> full_pack;
    std::map<std::string, size_t> doc_position;
    if (mode_uses_documents(config.mode)) {
        corpus = ingest(manifest.corpus_path);
        for (size_t i = 0; i < corpus.size(); ++i) doc_position[corpus[i].doc_id] = i;
        if (config.k) {
            index.emplace(corpus);
        } else {
            full_pack = pack(corpus, config.token_budget);
        }
    }

    const size_t n = manifest.queries.size();
    std::vector<EvalRow> rows(n);
    std::vector<UsageRecord> usage(n);
    std::vector<std::string> prompts(n);

    const int parallelism = gateway.config(config.backend_id).parallelism;
    const size_t workers = std::min<size_t>(std::max(parallelism, 1), n);
    std::atomic<size_t> next{0};

    auto evaluate_one = [&](size_t i) {
        const QuerySpec& query = manifest.queries[i];
        EvalRow& row = rows[i];
        row.query_id = query.query_id;

        std::vector<Document> context;
        if (mode_uses_documents(config.mode)) {
            if (config.k) {
                for (const ScoredDoc& hit : index->retrieve(query.question, *config.k)) {
                    context.push_back(corpus[doc_position.at(hit.doc_id)]);
                }
            } else if (query.doc_allowlist) {
                context = pack(allowlisted(corpus, *query.doc_allowlist), config.token_budget)
                              .documents;
            } else {
                context = full_pack->documents;
            }
        }

        const std::string prompt = build_inference_prompt(
            {query.query_id, query.question, config.mode}, templates, context);
        prompts[i] = prompt;

        CompletionRequest request;
        request.role = Role::Answerer;
        request.prompt = prompt;
        request.max_output_tokens = config.max_output_tokens;
        request.temperature = default_temperature(Role::Answerer);
        request.backend_id = config.backend_id;

        std::string trace;
        try {
            trace = gateway.complete(request);
        } catch (const std::exception& e) {
            row.error = true;
            row.error_message = e.what();
            row.metric_value = 0.0;
            return;
        }

        const FinalAnswer parsed = parse_final_answer(trace);
        row.parse_fallback = !parsed.from_marker;
        std::string prediction;
        for (size_t a = 0; a < parsed.answers.size(); ++a) {
            if (a > 0) prediction += ", ";
            prediction += parsed.answers[a];
        }
        row.prediction = prediction;
        row.metric_value = score_metric(manifest.metric, prediction, query.gold_answers);

        if (config.mode == PromptMode::Total) {
            usage[i] = {query.query_id, detect_used_templates(trace), prediction,
                        query.gold_answers, row.metric_value, trace};
        }
    };

    auto worker = [&] {
        for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) evaluate_one(i);
    };
    std::vector<std::thread> pool;
    for (size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (std::thread& t : pool) t.join();

    size_t failures = 0;
    double sum = 0.0;
    for (const EvalRow& row : rows) {
        if (row.error) ++failures;
        sum += row.metric_value;
    }
    if (failures * 2 > n) {
        throw EvalAborted("evaluation aborted: " + std::to_string(failures) + " of " +
                          std::to_string(n) + " queries failed");
    }

    EvalOutcome outcome;
    outcome.result.rows = std::move(rows);
    outcome.result.aggregate = sum / static_cast<double>(n);
    outcome.result.mode = mode_name(config.mode);
    outcome.result.metric = metric_name(manifest.metric);
    outcome.result.backend_id = config.backend_id;
    if (config.mode == PromptMode::Total) outcome.result.snapshot_iteration = snapshot->iteration;
    outcome.result.k = config.k;
    outcome.result.token_budget = config.token_budget;
    if (config.mode == PromptMode::Total) {
        for (size_t i = 0; i < n; ++i) {
            if (!outcome.result.rows[i].error) outcome.usage.push_back(std::move(usage[i]));
        }
    }
    const size_t sample_count = std::min<size_t>(std::max(config.prompt_sample_count, 0), n);
    for (size_t i = 0; i < sample_count; ++i) {
        outcome.prompt_samples.emplace_back(manifest.queries[i].query_id, prompts[i]);
    }
    return outcome;
}

void write_eval_run(const std::string& run_dir, const EvalOutcome& outcome) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(run_dir) / "prompt_samples");
    {
        std::ofstream out(fs::path(run_dir) / "eval.json");
        if (!out) throw std::runtime_error("cannot write eval result under " + run_dir);
        out << eval_result_to_json(outcome.result).dump(2) << "\n";
    }
    if (outcome.result.mode == "total") {
        write_usage_log(outcome.usage, (fs::path(run_dir) / "usage.jsonl").string());
    }
    for (const auto& [query_id, prompt] : outcome.prompt_samples) {
        std::ofstream out(fs::path(run_dir) / "prompt_samples" / (query_id + ".txt"));
        out << prompt;
    }
}

}  // namespace templar
