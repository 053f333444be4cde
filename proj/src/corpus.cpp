#include "templar/corpus.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include "templar/json_io.hpp"

namespace templar {

long estimate_tokens(std::string_view text) {
    return static_cast<long>((text.size() + 3) / 4);
}

TokenEstimator default_token_estimator() {
    return [](std::string_view text) { return estimate_tokens(text); };
}

std::vector<Document> ingest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("ingest: cannot read " + path);

    std::vector<Document> docs;
    std::set<std::string> seen;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        Json j;
        try {
            j = Json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": invalid JSON: " + e.what());
        }
        const std::string where = path + ":" + std::to_string(line_no);
        Document doc;
        doc.doc_id = require_string(j, "doc_id", where);
        doc.title = require_string(j, "title", where);
        doc.body = require_string(j, "body", where);
        if (j.contains("source")) doc.source = require_string(j, "source", where);
        if (doc.body.empty()) throw ParseError(where + ": field \"body\" is empty");
        if (doc.title.find('|') != std::string::npos) {
            throw ParseError(where + ": title of doc " + doc.doc_id +
                             " contains '|', which the document layout reserves");
        }
        if (!seen.insert(doc.doc_id).second) {
            throw ParseError(where + ": duplicate doc_id " + doc.doc_id);
        }
        docs.push_back(std::move(doc));
    }
    return docs;
}

PackedContext pack(const std::vector<Document>& documents, long budget,
                   const TokenEstimator& estimator) {
    if (budget <= 0) throw std::invalid_argument("pack: budget must be positive");
    PackedContext ctx;
    ctx.budget = budget;
    for (size_t i = 0; i < documents.size(); ++i) {
        const long size = estimator(format_document(documents[i]));
        if (ctx.estimated_tokens + size > budget) {
            if (i == 0) {
                throw std::runtime_error("pack: first document " + documents[i].doc_id +
                                         " alone exceeds the budget; pre-chunk it");
            }
            break;  // prefix packing: everything after the overflow is dropped
        }
        ctx.documents.push_back(documents[i]);
        ctx.estimated_tokens += size;
    }
    return ctx;
}

std::string format_document(const Document& doc) {
    return "TITLE: " + doc.title + " | ID: " + doc.doc_id + "\n" + doc.body;
}

std::optional<std::pair<std::string, std::string>> parse_document_header(std::string_view text) {
    constexpr std::string_view title_key = "TITLE: ";
    constexpr std::string_view id_key = " | ID: ";
    if (text.rfind(title_key, 0) != 0) return std::nullopt;
    const size_t sep = text.find(id_key, title_key.size());
    if (sep == std::string_view::npos) return std::nullopt;
    size_t end = text.find('\n', sep);
    if (end == std::string_view::npos) end = text.size();
    std::string title(text.substr(title_key.size(), sep - title_key.size()));
    std::string id(text.substr(sep + id_key.size(), end - sep - id_key.size()));
    return std::make_pair(std::move(title), std::move(id));
}

std::string metric_name(Metric m) {
    switch (m) {
        case Metric::F1: return "f1";
        case Metric::ExactMatch: return "em";
        case Metric::Accuracy: return "accuracy";
    }
    throw std::logic_error("unreachable metric kind");
}

Metric metric_from_name(const std::string& name) {
    if (name == "f1") return Metric::F1;
    if (name == "em") return Metric::ExactMatch;
    if (name == "accuracy") return Metric::Accuracy;
    throw std::invalid_argument("unknown metric: " + name);
}

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("manifest: cannot read " + path);
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("manifest " + path + ": invalid JSON: " + e.what());
    }

    DatasetManifest manifest;
    manifest.corpus_path = require_string(j, "corpus_path", "manifest");
    manifest.metric = metric_from_name(require_string(j, "metric", "manifest"));
    if (!j.contains("queries") || !j.at("queries").is_array()) {
        throw ParseError("manifest: field \"queries\" is missing or not an array");
    }
    std::set<std::string> seen;
    size_t idx = 0;
    for (const auto& qj : j.at("queries")) {
        const std::string where = "manifest queries[" + std::to_string(idx) + "]";
        QuerySpec q;
        q.query_id = require_string(qj, "query_id", where);
        q.question = require_string(qj, "question", where);
        q.gold_answers = require_string_array(qj, "gold_answers", where);
        if (q.gold_answers.empty()) throw ParseError(where + ": field \"gold_answers\" is empty");
        if (qj.contains("doc_allowlist")) {
            q.doc_allowlist = require_string_array(qj, "doc_allowlist", where);
        }
        if (!seen.insert(q.query_id).second) {
            throw ParseError(where + ": duplicate query_id " + q.query_id);
        }
        manifest.queries.push_back(std::move(q));
        ++idx;
    }
    return manifest;
}

}  // namespace templar
