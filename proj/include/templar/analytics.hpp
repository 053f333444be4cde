#pragma once
// Post-hoc analysis over usage logs and score tables: usage histograms,
// pairwise co-occurrence lift, score-percentile store subsets, and transfer
// run configuration.

#include <map>
#include <string>
#include <vector>

#include "templar/core.hpp"
#include "templar/infer_eval.hpp"

namespace templar {

// Queries whose used set contains each template id.
std::map<std::string, long> usage_histogram(const std::vector<UsageRecord>& usage_log);

// Pairwise association over per-query usage sets:
//   lift(a,b) = P(a,b) / (P(a) * P(b)),  P(x) = count(x) / N.
// Only templates that appear in the log are included (a zero marginal has no
// defined lift). The diagonal is the self-pair, 1 / P(a).
struct LiftMatrix {
    std::vector<std::string> template_ids;  // numeric id order
    std::vector<std::vector<double>> lift;
    std::vector<std::vector<long>> support;  // raw co-usage counts
    long query_count = 0;
};

LiftMatrix cooccurrence_lift(const std::vector<UsageRecord>& usage_log);

enum class SubsetDirection { Bottom, Top };

SubsetDirection direction_from_name(const std::string& name);
std::string direction_name(SubsetDirection direction);

// Keeps the requested score fraction of the store: templates are ranked by
// mean score ascending with never-used templates below all used ones, the
// count is ceil(percentile) of the store size, and survivors keep their
// original store order and the full provenance map. percentile 100 is the
// identity.
TemplateStore subset_by_score(const TemplateStore& store,
                              const std::vector<ScoreRecord>& score_table, int percentile,
                              SubsetDirection direction);

// Evaluation run configuration binding one model's templates to another
// model's answerer. The snapshot hash pins the exact template bytes, so two
// transfers of the same store are provably identical at the source.
struct TransferRunConfig {
    std::string snapshot_path;
    std::string snapshot_hash;
    std::string template_source;  // identity that built the snapshot
    std::string answerer;         // target backend id
    bool transfer = true;         // false when source and target coincide
};

TransferRunConfig transfer_run_config(const std::string& snapshot_path,
                                      const std::string& template_source,
                                      const std::string& target_backend_id);

Json transfer_run_config_to_json(const TransferRunConfig& config);

// Plot-ready exports. The lift CSV is long-form (tid_a, tid_b, lift,
// support) over unordered pairs including the diagonal.
void write_histogram_csv(const std::map<std::string, long>& histogram, const std::string& path);
void write_lift_csv(const LiftMatrix& matrix, const std::string& path);
void write_lift_json(const LiftMatrix& matrix, const std::string& path);

// Raw texts for external embedding or plotting stacks.
void export_template_texts(const TemplateStore& store, const std::string& path);
void export_query_texts(const DatasetManifest& manifest, const std::string& path);

}  // namespace templar
