#include "templar/optimizer.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include "templar/json_io.hpp"

namespace templar {

std::vector<ScoreRecord> score_templates(const std::vector<UsageRecord>& records,
                                         const TemplateStore& store) {
    std::vector<ScoreRecord> table;
    table.reserve(store.templates.size());
    for (const ThoughtTemplate& t : store.templates) {
        ScoreRecord record;
        record.template_id = t.template_id;
        for (const UsageRecord& usage : records) {
            if (usage.used_template_ids.count(t.template_id) == 0) continue;
            ++record.usage_count;
            record.score_sum += usage.metric_value;
        }
        if (record.usage_count > 0) {
            record.score_mean = record.score_sum / record.usage_count;
        }
        table.push_back(std::move(record));
    }
    return table;
}

std::vector<std::string> select_low_performers(const std::vector<ScoreRecord>& score_table,
                                               double tau, int min_usage,
                                               ScoreAggregation aggregation) {
    std::vector<std::string> selected;
    for (const ScoreRecord& record : score_table) {
        if (record.usage_count == 0 || record.usage_count < min_usage) continue;
        const double aggregate =
            aggregation == ScoreAggregation::Mean ? *record.score_mean : record.score_sum;
        if (aggregate < tau) selected.push_back(record.template_id);
    }
    return selected;
}

std::optional<Decision> parse_decision_line(const std::string& feedback_text) {
    // Last non-empty line of the text.
    size_t end = feedback_text.size();
    while (true) {
        while (end > 0 && (feedback_text[end - 1] == '\n' || feedback_text[end - 1] == '\r' ||
                           feedback_text[end - 1] == ' ' || feedback_text[end - 1] == '\t')) {
            --end;
        }
        if (end == 0) return std::nullopt;
        size_t begin = feedback_text.rfind('\n', end - 1);
        begin = begin == std::string::npos ? 0 : begin + 1;
        const std::string line = feedback_text.substr(begin, end - begin);
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            end = begin;
            continue;
        }
        std::optional<Decision> found;
        int markers = 0;
        for (const Decision d :
             {Decision::Keep, Decision::Fix, Decision::Add, Decision::Discard}) {
            const std::string marker = "**" + decision_name(d) + "**";
            for (size_t at = line.find(marker); at != std::string::npos;
                 at = line.find(marker, at + marker.size())) {
                ++markers;
                found = d;
            }
        }
        if (markers != 1) return std::nullopt;
        return found;
    }
}

RefinementResult refine_template(Gateway& gateway, const ThoughtTemplate& t,
                                 const std::vector<FailedCase>& failed_cases,
                                 const SourceCase& source, const OptimizerConfig& config) {
    if (failed_cases.empty()) {
        throw std::invalid_argument("refine_template requires at least one failed case");
    }
    RefinementResult result;

    CompletionRequest request;
    request.role = Role::Feedback;
    request.prompt = render_feedback_prompt(t, failed_cases, source);
    request.max_output_tokens = config.max_output_tokens;
    request.temperature = default_temperature(Role::Feedback);
    request.backend_id = config.feedback_backend;

    std::optional<Decision> decision;
    for (int round = 0; round <= config.max_reprompts; ++round) {
        result.feedback = gateway.complete(request);
        decision = parse_decision_line(result.feedback);
        if (decision) break;
        request.prompt +=
            "\n\nYour previous output did not end with exactly one of **FIX**, **DISCARD**, "
            "**ADD**, **KEEP**.";
    }
    if (!decision) {
        result.warnings.push_back("decision line unparseable for " + t.template_id +
                                  "; defaulting to KEEP");
        result.decision = Decision::Keep;
        return result;
    }
    result.decision = *decision;
    if (result.decision != Decision::Fix && result.decision != Decision::Add) {
        return result;  // Keep and Discard take no edit round
    }

    CompletionRequest edit;
    edit.role = Role::Updater;
    edit.prompt = render_edit_prompt(t, failed_cases, source, result.feedback);
    edit.max_output_tokens = config.max_output_tokens;
    edit.temperature = default_temperature(Role::Updater);
    edit.backend_id = config.updater_backend;

    const StructuredOutcome structured = complete_structured(gateway, edit, config.max_reprompts);
    if (structured.value) {
        try {
            ThoughtTemplate revised =
                template_from_json(*structured.value, false, "revision of " + t.template_id);
            // The store controls ids; validate the content under the original.
            ThoughtTemplate probe = revised;
            probe.template_id = t.template_id;
            validate_template(probe);
            result.revised = std::move(revised);
            return result;
        } catch (const ParseError& e) {
            result.warnings.push_back("revision of " + t.template_id +
                                      " failed validation: " + e.what());
        }
    } else {
        result.warnings.push_back("revision of " + t.template_id +
                                  " unparseable: " + structured.last_error);
    }
    result.warnings.push_back(decision_name(result.decision) + " of " + t.template_id +
                              " downgraded to KEEP");
    result.decision = Decision::Keep;
    return result;
}

namespace {

long tid_number(const std::string& template_id) {
    const size_t underscore = template_id.rfind('_');
    if (underscore == std::string::npos) return -1;
    try {
        return std::stol(template_id.substr(underscore + 1));
    } catch (const std::exception&) {
        return -1;
    }
}

// A usage record counts as failed below 1.0, except under F1 where partial
// overlap above 0.5 still passes.
double failure_cutoff(Metric metric) { return metric == Metric::F1 ? 0.5 : 1.0; }

std::vector<FailedCase> collect_failed_cases(const std::string& template_id,
                                             const std::vector<UsageRecord>& records,
                                             const std::map<std::string, std::string>& questions,
                                             Metric metric, int max_cases) {
    std::vector<const UsageRecord*> mine;
    for (const UsageRecord& record : records) {
        if (record.used_template_ids.count(template_id) > 0) mine.push_back(&record);
    }
    std::stable_sort(mine.begin(), mine.end(), [](const UsageRecord* a, const UsageRecord* b) {
        return a->metric_value < b->metric_value;
    });
    std::vector<const UsageRecord*> failed;
    for (const UsageRecord* record : mine) {
        if (record->metric_value < failure_cutoff(metric)) failed.push_back(record);
    }
    // A template can be low-performing without any record under the cutoff
    // (middling F1 everywhere); fall back to its worst records so feedback
    // still has cases to look at.
    if (failed.empty()) failed = mine;

    std::vector<FailedCase> cases;
    for (const UsageRecord* record : failed) {
        if (static_cast<int>(cases.size()) >= max_cases) break;
        std::string gold;
        for (size_t i = 0; i < record->gold_answers.size(); ++i) {
            if (i > 0) gold += ", ";
            gold += record->gold_answers[i];
        }
        const auto question = questions.find(record->query_id);
        cases.push_back({question == questions.end() ? record->query_id : question->second,
                         record->raw_trace, gold, record->prediction, record->metric_value});
    }
    return cases;
}

SourceCase fallback_source(const std::vector<FailedCase>& failed_cases) {
    // Worst case doubles as the source when provenance gives no triple.
    const FailedCase& worst = failed_cases.front();
    return {worst.query, "(not provided)", worst.gold};
}

}  // namespace

Json iteration_report_to_json(const IterationReport& report) {
    Json j;
    j["iteration"] = report.iteration;
    Json counts;
    for (const char* name : {"KEEP", "ADD", "FIX", "DISCARD"}) {
        const auto it = report.decision_counts.find(name);
        counts[name] = it == report.decision_counts.end() ? 0 : it->second;
    }
    j["decision_counts"] = std::move(counts);
    j["aggregate_metric"] = report.aggregate_metric;
    j["tau"] = report.tau;
    j["refined_template_ids"] = report.refined_template_ids;
    j["score_table"] = Json::array();
    for (const ScoreRecord& record : report.score_table) {
        Json r;
        r["template_id"] = record.template_id;
        r["usage_count"] = record.usage_count;
        r["score_sum"] = record.score_sum;
        if (record.score_mean) r["score_mean"] = *record.score_mean;
        j["score_table"].push_back(std::move(r));
    }
    return j;
}

IterationOutcome run_iteration(Gateway& gateway, const TemplateStore& store,
                               const DatasetManifest& train,
                               const std::map<std::string, SourceCase>& sources,
                               const OptimizerConfig& config) {
    EvalConfig eval_config;
    eval_config.backend_id = config.answerer_backend;
    eval_config.mode = PromptMode::Total;
    eval_config.k = config.k;
    eval_config.token_budget = config.token_budget;
    eval_config.max_output_tokens = config.max_output_tokens;
    const EvalOutcome answers = evaluate_dataset(gateway, train, &store, eval_config);

    IterationOutcome outcome;
    outcome.usage = answers.usage;
    outcome.report.iteration = store.iteration + 1;
    outcome.report.aggregate_metric = answers.result.aggregate;
    outcome.report.tau = config.tau;
    outcome.report.score_table = score_templates(answers.usage, store);
    for (const char* name : {"KEEP", "ADD", "FIX", "DISCARD"}) {
        outcome.report.decision_counts[name] = 0;
    }

    std::vector<std::string> selected = select_low_performers(
        outcome.report.score_table, config.tau, config.min_usage, config.aggregation);
    std::sort(selected.begin(), selected.end(), [](const std::string& a, const std::string& b) {
        return tid_number(a) < tid_number(b);
    });
    outcome.report.refined_template_ids = selected;

    std::map<std::string, std::string> questions;
    for (const QuerySpec& query : train.queries) questions[query.query_id] = query.question;

    struct Planned {
        std::string template_id;
        std::vector<FailedCase> failed_cases;
        SourceCase source;
        RefinementResult result;
    };
    std::vector<Planned> plan;
    for (const std::string& id : selected) {
        Planned p;
        p.template_id = id;
        p.failed_cases = collect_failed_cases(id, answers.usage, questions, train.metric,
                                              config.max_failed_cases);
        const auto source = sources.find(id);
        p.source = source != sources.end() ? source->second : fallback_source(p.failed_cases);
        plan.push_back(std::move(p));
    }

    const int parallelism = gateway.config(config.feedback_backend).parallelism;
    const size_t workers = std::min<size_t>(std::max(parallelism, 1), std::max<size_t>(plan.size(), 1));
    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (size_t i = next.fetch_add(1); i < plan.size(); i = next.fetch_add(1)) {
            const ThoughtTemplate* t = store.find(plan[i].template_id);
            plan[i].result =
                refine_template(gateway, *t, plan[i].failed_cases, plan[i].source, config);
        }
    };
    std::vector<std::thread> pool;
    for (size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (std::thread& t : pool) t.join();

    // Decisions land in ascending id order so ADD-assigned ids (and bytes)
    // are reproducible.
    outcome.store = store;
    for (const Planned& p : plan) {
        ++outcome.report.decision_counts[decision_name(p.result.decision)];
        outcome.store =
            apply_decision(outcome.store, p.template_id, p.result.decision, p.result.revised);
    }
    outcome.store.iteration = store.iteration + 1;
    return outcome;
}

namespace {

double validation_aggregate(Gateway& gateway, const TemplateStore& store,
                            const DatasetManifest& validation, const OptimizerConfig& config) {
    EvalConfig eval_config;
    eval_config.backend_id = config.answerer_backend;
    eval_config.mode = PromptMode::Total;
    eval_config.k = config.k;
    eval_config.token_budget = config.token_budget;
    eval_config.max_output_tokens = config.max_output_tokens;
    return evaluate_dataset(gateway, validation, &store, eval_config).result.aggregate;
}

void persist_iteration(const std::string& out_dir, const IterationOutcome& outcome) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const std::string tag = "iter" + std::to_string(outcome.report.iteration);
    snapshot(outcome.store, (fs::path(out_dir) / ("store." + tag + ".json")).string());
    std::ofstream report(fs::path(out_dir) / ("report." + tag + ".json"));
    report << iteration_report_to_json(outcome.report).dump(2) << "\n";
    write_usage_log(outcome.usage, (fs::path(out_dir) / ("usage." + tag + ".jsonl")).string());
}

}  // namespace

OptimizationOutcome run_optimization(Gateway& gateway, const TemplateStore& initial,
                                     const DatasetManifest& train,
                                     const DatasetManifest& validation,
                                     const std::map<std::string, SourceCase>& sources,
                                     const OptimizationConfig& config) {
    if (config.max_iterations < 1) throw std::invalid_argument("max_iterations must be >= 1");

    OptimizationOutcome outcome;
    outcome.store = initial;
    outcome.validation_metrics.push_back(
        validation_aggregate(gateway, initial, validation, config.iteration));
    outcome.best_iteration = initial.iteration;
    double best_metric = outcome.validation_metrics.back();

    TemplateStore current = initial;
    for (int step = 0; step < config.max_iterations; ++step) {
        IterationOutcome iteration =
            run_iteration(gateway, current, train, sources, config.iteration);
        current = iteration.store;
        if (!config.out_dir.empty()) persist_iteration(config.out_dir, iteration);
        outcome.reports.push_back(std::move(iteration.report));

        const double metric =
            validation_aggregate(gateway, current, validation, config.iteration);
        const double previous = outcome.validation_metrics.back();
        outcome.validation_metrics.push_back(metric);
        if (metric > best_metric) {
            best_metric = metric;
            outcome.best_iteration = current.iteration;
            outcome.store = current;
        }
        if (config.early_stop && metric - previous <= config.epsilon) {
            outcome.early_stopped = true;
            break;
        }
    }
    return outcome;
}

double grid_search_tau(Gateway& gateway, const TemplateStore& store,
                       const DatasetManifest& train, const DatasetManifest& validation,
                       const std::map<std::string, SourceCase>& sources, OptimizerConfig config,
                       const std::vector<double>& grid) {
    if (grid.empty()) throw std::invalid_argument("tau grid must be non-empty");
    double best_tau = grid.front();
    double best_metric = -1.0;
    for (const double tau : grid) {
        config.tau = tau;
        const IterationOutcome outcome = run_iteration(gateway, store, train, sources, config);
        const double metric = validation_aggregate(gateway, outcome.store, validation, config);
        if (metric > best_metric) {
            best_metric = metric;
            best_tau = tau;
        }
    }
    return best_tau;
}

std::map<std::string, SourceCase> build_source_cases(
    const std::vector<TrainingTriple>& triples,
    const std::map<std::string, std::string>& source_map) {
    std::map<std::string, const TrainingTriple*> by_query;
    for (const TrainingTriple& triple : triples) by_query[triple.query_id] = &triple;
    std::map<std::string, SourceCase> sources;
    for (const auto& [template_id, query_id] : source_map) {
        const auto it = by_query.find(query_id);
        if (it == by_query.end()) continue;
        const TrainingTriple& triple = *it->second;
        sources[template_id] = {triple.problem,
                                solution_text(triple).value_or("(not provided)"),
                                triple.answer};
    }
    return sources;
}

}  // namespace templar
