#pragma once
// Initial template set construction: prompt the constructor backend with
// training QA triples and flatten the returned sub-templates into a store.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "templar/core.hpp"
#include "templar/corpus.hpp"
#include "templar/gateway.hpp"

namespace templar {

// One training example: question, optional ordered solution steps, answer.
struct TrainingTriple {
    std::string query_id;
    std::string problem;
    std::optional<std::vector<std::string>> solution;
    std::string answer;

    bool operator==(const TrainingTriple&) const = default;
};

// JSONL, one {query_id, problem, solution?: [string...], answer} per line.
std::vector<TrainingTriple> load_triples(const std::string& path);

// Solution steps joined for prompt embedding; nullopt when the triple has no
// solution (the prompt renderer substitutes its placeholder).
std::optional<std::string> solution_text(const TrainingTriple& triple);

// A training triple whose query_id appears in the test split.
class ContaminationError : public std::runtime_error {
public:
    explicit ContaminationError(const std::string& what) : std::runtime_error(what) {}
};

struct ConstructionConfig {
    std::string backend_id;
    // Store the top-level holistic template instead of its sub-templates
    // (the non-compositional ablation).
    bool store_holistic = false;
    bool oracle = false;  // building from test queries; watermarks the store
    int max_reprompts = 2;
    int max_output_tokens = 4096;
};

struct SkipRecord {
    std::string query_id;
    std::string reason;
};

// Output of one construction call. Templates carry no ids yet; the store
// assigns them. The holistic top-level template is kept as metadata.
struct TripleConstruction {
    std::vector<ThoughtTemplate> templates;
    std::optional<Json> holistic;
    std::optional<SkipRecord> skip;
};

TripleConstruction construct_from_triple(Gateway& gateway, const TrainingTriple& triple,
                                         const ConstructionConfig& config);

struct ConstructionOutcome {
    TemplateStore store;  // iteration 0
    std::vector<SkipRecord> skips;
    // template_id -> query_id of the triple that spawned it. Persisted beside
    // the store so feedback prompts can recover their source case.
    std::map<std::string, std::string> source_map;
    Json meta;  // per-triple record: query_id, template_ids, holistic, skips
};

// Runs construction over every triple (concurrently up to the backend's
// parallelism limit) and assembles the store in triple order, so ids and
// output bytes do not depend on completion order. Re-checks every query_id
// against the test manifest when one is given.
ConstructionOutcome build_initial_set(Gateway& gateway,
                                      const std::vector<TrainingTriple>& triples,
                                      const DatasetManifest* test_manifest,
                                      const ConstructionConfig& config);

void write_construction_meta(const ConstructionOutcome& outcome, const std::string& path);
std::map<std::string, std::string> load_source_map(const std::string& path);

}  // namespace templar
