#pragma once
// Document ingest, token estimation, budgeted context packing, and the
// dataset manifest format.

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace templar {

struct Document {
    std::string doc_id;
    std::string title;
    std::string body;
    std::optional<std::string> source;

    bool operator==(const Document&) const = default;
};

// Documents packed into a token budget, in input order.
struct PackedContext {
    std::vector<Document> documents;
    long estimated_tokens = 0;
    long budget = 0;
};

// Pluggable token counter. The default is the ceil(bytes / 4) heuristic; an
// exact tokenizer may be swapped in when the target backend is known.
using TokenEstimator = std::function<long(std::string_view)>;

long estimate_tokens(std::string_view text);
TokenEstimator default_token_estimator();

// Reads a JSONL corpus, one {doc_id, title, body, source?} object per line.
// Rejects duplicate ids and titles containing '|' (they would break the
// in-context document layout).
std::vector<Document> ingest(const std::string& path);

// Greedy prefix packing: documents are taken in order while the cumulative
// estimate stays within budget; the first overflowing document and everything
// after it are excluded. Documents are never split. Throws when the first
// document alone exceeds the budget.
PackedContext pack(const std::vector<Document>& documents, long budget,
                   const TokenEstimator& estimator = default_token_estimator());

// In-context layout: "TITLE: <title> | ID: <doc_id>\n<body>".
std::string format_document(const Document& doc);

// Inverse of format_document for round-trip checks: recovers (title, doc_id)
// from the header line.
std::optional<std::pair<std::string, std::string>> parse_document_header(std::string_view text);

// One evaluation query. The optional allowlist names the query-specific
// evidence documents; it doubles as the gold set for retrieval recall.
struct QuerySpec {
    std::string query_id;
    std::string question;
    std::vector<std::string> gold_answers;
    std::optional<std::vector<std::string>> doc_allowlist;

    bool operator==(const QuerySpec&) const = default;
};

enum class Metric { F1, ExactMatch, Accuracy };

std::string metric_name(Metric m);
Metric metric_from_name(const std::string& name);

struct DatasetManifest {
    std::vector<QuerySpec> queries;
    std::string corpus_path;
    Metric metric = Metric::F1;
};

DatasetManifest load_manifest(const std::string& path);

}  // namespace templar
