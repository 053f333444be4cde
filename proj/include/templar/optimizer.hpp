#pragma once
// The template update loop: score templates from usage records, select low
// performers, obtain feedback and a KEEP/FIX/ADD/DISCARD decision, apply the
// edits, and iterate with optional validation early stopping.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "templar/construction.hpp"
#include "templar/core.hpp"
#include "templar/gateway.hpp"
#include "templar/infer_eval.hpp"

namespace templar {

// Per-template usage_count and score_sum over the given records, in store
// order. score_mean set only for used templates.
std::vector<ScoreRecord> score_templates(const std::vector<UsageRecord>& records,
                                         const TemplateStore& store);

enum class ScoreAggregation { Mean, Sum };

// Ids whose aggregate falls below tau, restricted to templates used at least
// min_usage times. Never-used templates are never selected.
std::vector<std::string> select_low_performers(const std::vector<ScoreRecord>& score_table,
                                               double tau, int min_usage,
                                               ScoreAggregation aggregation = ScoreAggregation::Mean);

// The decision marker on the final non-empty line of a feedback text, if it
// carries exactly one of **FIX** / **DISCARD** / **ADD** / **KEEP**.
std::optional<Decision> parse_decision_line(const std::string& feedback_text);

struct OptimizerConfig {
    std::string answerer_backend;
    std::string feedback_backend;
    std::string updater_backend;
    double tau = 0.5;
    int min_usage = 2;
    ScoreAggregation aggregation = ScoreAggregation::Mean;
    std::optional<int> k;           // retrieval depth for answering; unset = packing
    long token_budget = 128000;
    int max_output_tokens = 4096;
    int max_reprompts = 2;
    int max_failed_cases = 3;       // worst cases embedded per feedback prompt
};

struct RefinementResult {
    Decision decision = Decision::Keep;
    std::optional<ThoughtTemplate> revised;  // present iff decision is Fix or Add
    std::string feedback;
    std::vector<std::string> warnings;       // parse downgrades and defaults
};

// One feedback/edit round for one template. Decision parse failure after
// re-prompts defaults to Keep; an unparseable revision downgrades Fix/Add to
// Keep. Both paths leave a warning.
RefinementResult refine_template(Gateway& gateway, const ThoughtTemplate& t,
                                 const std::vector<FailedCase>& failed_cases,
                                 const SourceCase& source, const OptimizerConfig& config);

struct IterationReport {
    int iteration = 0;  // the produced store's iteration number
    std::map<std::string, int> decision_counts;  // KEEP / ADD / FIX / DISCARD
    std::vector<ScoreRecord> score_table;
    double aggregate_metric = 0.0;  // training aggregate of the answering pass
    std::vector<std::string> refined_template_ids;
    double tau = 0.0;
};

Json iteration_report_to_json(const IterationReport& report);

struct IterationOutcome {
    TemplateStore store;
    IterationReport report;
    std::vector<UsageRecord> usage;
};

// One update iteration: answer every training query with the current store
// (total mode), score, select, refine concurrently, then apply decisions in
// ascending template id order. Unselected templates are untouched. More than
// half the queries failing aborts with the old store intact (the evaluation
// error propagates).
// `sources` maps template_id to its originating training case; templates
// without an entry use their worst failed case as the source.
IterationOutcome run_iteration(Gateway& gateway, const TemplateStore& store,
                               const DatasetManifest& train,
                               const std::map<std::string, SourceCase>& sources,
                               const OptimizerConfig& config);

struct OptimizationConfig {
    OptimizerConfig iteration;
    int max_iterations = 3;
    bool early_stop = true;
    double epsilon = 0.001;  // minimum validation improvement to continue
    std::string out_dir;     // when set, snapshots/reports/usage logs persist here
};

struct OptimizationOutcome {
    TemplateStore store;  // best-validation snapshot
    std::vector<IterationReport> reports;
    std::vector<double> validation_metrics;  // index 0 = initial store
    int best_iteration = 0;
    bool early_stopped = false;
};

// Runs up to max_iterations updates, evaluating the validation split after
// each. With early_stop, halts once the validation aggregate improves by no
// more than epsilon over the previous iteration. Returns the snapshot with
// the best validation aggregate (earliest on ties).
OptimizationOutcome run_optimization(Gateway& gateway, const TemplateStore& initial,
                                     const DatasetManifest& train,
                                     const DatasetManifest& validation,
                                     const std::map<std::string, SourceCase>& sources,
                                     const OptimizationConfig& config);

// Picks the grid value whose single-iteration result scores best on the
// validation split (lowest tau wins ties). The grid is evaluated in order.
double grid_search_tau(Gateway& gateway, const TemplateStore& store,
                       const DatasetManifest& train, const DatasetManifest& validation,
                       const std::map<std::string, SourceCase>& sources, OptimizerConfig config,
                       const std::vector<double>& grid = {0.3, 0.4, 0.5, 0.6, 0.7});

// Source cases for feedback prompts, joined from construction's source map
// and the training triples it refers to.
std::map<std::string, SourceCase> build_source_cases(
    const std::vector<TrainingTriple>& triples,
    const std::map<std::string, std::string>& source_map);

}  // namespace templar
