#pragma once
// Domain types for thought templates, update decisions and scores, plus the
// versioned template store and its JSON snapshot format.

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace templar {

// Raised when a file or model payload does not match the expected schema.
// The message names the offending field.
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Worked example attached to a template: the problem it was distilled from,
// the step-by-step solution, and the final answer.
struct TemplateExample {
    std::string example_problem;
    std::vector<std::string> solution_steps;
    std::string final_answer;

    bool operator==(const TemplateExample&) const = default;
};

// One reusable reasoning pattern.
struct ThoughtTemplate {
    std::string template_id;    // "TID_<n>"
    std::string template_name;
    std::string description;
    std::vector<std::string> reason_flow;
    TemplateExample example;

    bool operator==(const ThoughtTemplate&) const = default;
};

// Update action attached to a piece of feedback.
enum class Decision { Keep, Fix, Add, Discard };

std::string decision_name(Decision d);
Decision decision_from_name(const std::string& name);

// Aggregated performance of one template over the queries where it was used.
struct ScoreRecord {
    std::string template_id;
    int usage_count = 0;
    double score_sum = 0.0;
    // Present only when usage_count > 0.
    std::optional<double> score_mean;

    bool operator==(const ScoreRecord&) const = default;
};

// Versioned collection of templates. Provenance keeps one entry per id ever
// allocated ("constructed", "fixed-from:<id>" or "added-from:<id>"), including
// ids later discarded, so numeric suffixes are never reused and old usage
// logs stay interpretable.
struct TemplateStore {
    int iteration = 0;
    std::vector<ThoughtTemplate> templates;
    std::map<std::string, std::string> provenance;
    bool oracle = false;  // watermark for stores built from test queries

    bool operator==(const TemplateStore&) const = default;

    const ThoughtTemplate* find(const std::string& template_id) const;
};

// Next free id "TID_<n>", n = 1 + max numeric suffix seen in the store's
// templates or provenance (0 for an empty store).
std::string assign_template_id(const TemplateStore& store);

// Applies one update decision and returns the resulting store.
//   Keep    -> unchanged
//   Discard -> template removed (provenance entry retained)
//   Fix     -> template replaced in place under the same id
//   Add     -> original kept, `revised` appended under a fresh id
// `revised` must be present exactly for Fix and Add.
TemplateStore apply_decision(const TemplateStore& store,
                             const std::string& template_id,
                             Decision decision,
                             const std::optional<ThoughtTemplate>& revised = std::nullopt);

// Snapshot persistence. One JSON file per iteration; load() validates all
// template invariants and reports the offending field on failure.
void snapshot(const TemplateStore& store, const std::string& path);
TemplateStore load_store(const std::string& path);

// Canonical serialized forms, used for byte-identity checks and hashing.
std::string template_to_string(const ThoughtTemplate& t);
std::string store_to_string(const TemplateStore& store);

// SHA-256 hex digest of the canonical store serialization.
std::string store_hash(const TemplateStore& store);

// Validates one template's invariants; throws ParseError naming the field.
void validate_template(const ThoughtTemplate& t);

}  // namespace templar
