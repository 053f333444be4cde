#pragma once
// Inference prompt assembly for the five prompt modes, reasoning-trace
// parsing, answer metrics, and dataset evaluation.

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "templar/corpus.hpp"
#include "templar/core.hpp"
#include "templar/gateway.hpp"

namespace templar {

// naive: bare question. cot: question + step-by-step suffix. cic: packed or
// retrieved documents, no templates. cic_cot: cic + suffix. total: templates
// and documents together.
enum class PromptMode { Naive, Cot, Cic, CicCot, Total };

std::string mode_name(PromptMode mode);
PromptMode mode_from_name(const std::string& name);

struct InferenceRequest {
    std::string query_id;
    std::string question;
    PromptMode mode = PromptMode::Total;
};

// Mode constraints: total requires templates; naive and cot forbid documents;
// cic and cic_cot forbid templates. Violations throw std::invalid_argument.
// Pure: same inputs, same bytes.
std::string build_inference_prompt(const InferenceRequest& request,
                                   const std::vector<ThoughtTemplate>& templates,
                                   const std::vector<Document>& documents);

// Answers recovered from a trace. from_marker is false when no "Final
// Answer:" line was found and the last non-empty line was used instead.
struct FinalAnswer {
    std::vector<std::string> answers;
    bool from_marker = false;
};

// Takes the last line beginning "Final Answer:" and parses its bracketed,
// comma-separated list of quoted items (single, double, or backtick-opened
// quotes). Without the marker, falls back to the last non-empty line.
FinalAnswer parse_final_answer(const std::string& raw_trace);

// Every distinct TID_<n> preceded by "TEMPLATE_ID:" in the trace. Ids not in
// any store may be returned; callers flag them via unknown_template_ids.
std::set<std::string> detect_used_templates(const std::string& raw_trace);

std::vector<std::string> unknown_template_ids(const std::set<std::string>& used,
                                              const TemplateStore& store);

// More than half the queries of a run failed; the partial result is dropped.
class EvalAborted : public std::runtime_error {
public:
    explicit EvalAborted(const std::string& what) : std::runtime_error(what) {}
};

// SQuAD-style normalization: lowercase, strip punctuation, drop the articles
// a/an/the, collapse whitespace.
std::string normalize_answer(std::string_view raw);
std::vector<std::string> normalized_tokens(std::string_view raw);

// All three score against the full gold alias list and take the best match.
// Gold must be non-empty.
int exact_match(const std::string& prediction, const std::vector<std::string>& gold_answers);
double token_f1(const std::string& prediction, const std::vector<std::string>& gold_answers);
int binary_accuracy(const std::string& prediction, const std::vector<std::string>& gold_answers);

double score_metric(Metric metric, const std::string& prediction,
                    const std::vector<std::string>& gold_answers);

// Per-query record of an answering pass: which templates the trace invoked,
// what was predicted, and how it scored. The optimizer consumes these.
struct UsageRecord {
    std::string query_id;
    std::set<std::string> used_template_ids;
    std::string prediction;
    std::vector<std::string> gold_answers;
    double metric_value = 0.0;
    std::string raw_trace;
};

Json usage_record_to_json(const UsageRecord& record);
UsageRecord usage_record_from_json(const Json& j, const std::string& where);
void write_usage_log(const std::vector<UsageRecord>& records, const std::string& path);
std::vector<UsageRecord> load_usage_log(const std::string& path);

struct EvalRow {
    std::string query_id;
    std::string prediction;
    double metric_value = 0.0;
    bool parse_fallback = false;
    bool error = false;
    std::string error_message;
};

struct EvalResult {
    std::vector<EvalRow> rows;       // manifest order
    double aggregate = 0.0;          // arithmetic mean of metric_value
    std::string mode;
    std::string metric;
    std::string backend_id;
    std::optional<int> snapshot_iteration;
    std::optional<int> k;
    long token_budget = 0;
};

Json eval_result_to_json(const EvalResult& result);

struct EvalConfig {
    std::string backend_id;
    PromptMode mode = PromptMode::Total;
    std::optional<int> k;            // retrieval depth; unset = budget packing
    long token_budget = 128000;
    int max_output_tokens = 4096;
    int prompt_sample_count = 2;     // prompts kept verbatim per run
};

struct EvalOutcome {
    EvalResult result;
    std::vector<UsageRecord> usage;  // populated in total mode only
    std::vector<std::pair<std::string, std::string>> prompt_samples;  // (query_id, prompt)
};

// Answers every manifest query with the configured backend: context comes
// from top-k retrieval when k is set, otherwise from packing the corpus (or
// the query's allowlist) into the token budget. Queries run concurrently up
// to the backend's parallelism limit; rows come back in manifest order.
// A failed query scores 0 and is flagged; more than half failing aborts.
// `snapshot` is required for total mode and ignored by the template-free
// modes.
EvalOutcome evaluate_dataset(Gateway& gateway, const DatasetManifest& manifest,
                             const TemplateStore* snapshot, const EvalConfig& config);

// Writes runs/<run_id>/: eval.json, usage.jsonl (total mode), and
// prompt_samples/<query_id>.txt.
void write_eval_run(const std::string& run_dir, const EvalOutcome& outcome);

}  // namespace templar
