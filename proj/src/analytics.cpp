#include "templar/analytics.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "templar/digest.hpp"
#include "templar/json_io.hpp"

namespace templar {

std::map<std::string, long> usage_histogram(const std::vector<UsageRecord>& usage_log) {
    std::map<std::string, long> histogram;
    for (const UsageRecord& record : usage_log) {
        for (const std::string& id : record.used_template_ids) ++histogram[id];
    }
    return histogram;
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

bool tid_order(const std::string& a, const std::string& b) {
    const long na = tid_number(a);
    const long nb = tid_number(b);
    if (na != nb) return na < nb;
    return a < b;
}

}  // namespace

LiftMatrix cooccurrence_lift(const std::vector<UsageRecord>& usage_log) {
    if (usage_log.empty()) throw std::invalid_argument("lift requires at least one query");
    LiftMatrix matrix;
    matrix.query_count = static_cast<long>(usage_log.size());

    const std::map<std::string, long> counts = usage_histogram(usage_log);
    for (const auto& [id, count] : counts) matrix.template_ids.push_back(id);
    std::sort(matrix.template_ids.begin(), matrix.template_ids.end(), tid_order);

    const size_t m = matrix.template_ids.size();
    matrix.support.assign(m, std::vector<long>(m, 0));
    matrix.lift.assign(m, std::vector<double>(m, 0.0));
    std::map<std::string, size_t> position;
    for (size_t i = 0; i < m; ++i) position[matrix.template_ids[i]] = i;

    for (const UsageRecord& record : usage_log) {
        for (const std::string& a : record.used_template_ids) {
            const size_t i = position.at(a);
            for (const std::string& b : record.used_template_ids) {
                ++matrix.support[i][position.at(b)];
            }
        }
    }

    const double n = static_cast<double>(matrix.query_count);
    for (size_t i = 0; i < m; ++i) {
        const double pa = static_cast<double>(counts.at(matrix.template_ids[i])) / n;
        for (size_t j = 0; j < m; ++j) {
            const double pb = static_cast<double>(counts.at(matrix.template_ids[j])) / n;
            const double pab = static_cast<double>(matrix.support[i][j]) / n;
            matrix.lift[i][j] = pab / (pa * pb);
        }
    }
    return matrix;
}

SubsetDirection direction_from_name(const std::string& name) {
    if (name == "bottom") return SubsetDirection::Bottom;
    if (name == "top") return SubsetDirection::Top;
    throw std::invalid_argument("unknown subset direction: " + name);
}

std::string direction_name(SubsetDirection direction) {
    return direction == SubsetDirection::Bottom ? "bottom" : "top";
}

TemplateStore subset_by_score(const TemplateStore& store,
                              const std::vector<ScoreRecord>& score_table, int percentile,
                              SubsetDirection direction) {
    if (store.templates.empty()) throw std::invalid_argument("cannot subset an empty store");
    if (percentile != 25 && percentile != 50 && percentile != 75 && percentile != 100) {
        throw std::invalid_argument("percentile must be one of 25, 50, 75, 100");
    }

    std::map<std::string, const ScoreRecord*> by_id;
    for (const ScoreRecord& record : score_table) by_id[record.template_id] = &record;

    // Ascending by mean; never-used templates rank below every used one.
    // Stable, so ties keep store order.
    std::vector<const ThoughtTemplate*> ranked;
    for (const ThoughtTemplate& t : store.templates) ranked.push_back(&t);
    auto mean_of = [&](const ThoughtTemplate* t) -> std::optional<double> {
        const auto it = by_id.find(t->template_id);
        if (it == by_id.end() || !it->second->score_mean) return std::nullopt;
        return it->second->score_mean;
    };
    std::stable_sort(ranked.begin(), ranked.end(),
                     [&](const ThoughtTemplate* a, const ThoughtTemplate* b) {
                         const std::optional<double> ma = mean_of(a);
                         const std::optional<double> mb = mean_of(b);
                         if (ma.has_value() != mb.has_value()) return !ma.has_value();
                         if (!ma) return false;
                         return *ma < *mb;
                     });

    const size_t total = ranked.size();
    const size_t keep = (total * static_cast<size_t>(percentile) + 99) / 100;
    std::vector<const ThoughtTemplate*> chosen(
        direction == SubsetDirection::Bottom ? ranked.begin() : ranked.end() - keep,
        direction == SubsetDirection::Bottom ? ranked.begin() + keep : ranked.end());

    TemplateStore subset;
    subset.iteration = store.iteration;
    subset.oracle = store.oracle;
    subset.provenance = store.provenance;
    for (const ThoughtTemplate& t : store.templates) {
        if (std::find(chosen.begin(), chosen.end(), &t) != chosen.end()) {
            subset.templates.push_back(t);
        }
    }
    return subset;
}

TransferRunConfig transfer_run_config(const std::string& snapshot_path,
                                      const std::string& template_source,
                                      const std::string& target_backend_id) {
    const TemplateStore store = load_store(snapshot_path);
    TransferRunConfig config;
    config.snapshot_path = snapshot_path;
    config.snapshot_hash = store_hash(store);
    config.template_source = template_source;
    config.answerer = target_backend_id;
    config.transfer = template_source != target_backend_id;
    return config;
}

Json transfer_run_config_to_json(const TransferRunConfig& config) {
    Json j;
    j["snapshot_path"] = config.snapshot_path;
    j["snapshot_hash"] = config.snapshot_hash;
    j["template_source"] = config.template_source;
    j["answerer"] = config.answerer;
    j["transfer"] = config.transfer;
    return j;
}

namespace {

std::ofstream open_for_write(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    return out;
}

std::string csv_field(const std::string& raw) {
    if (raw.find_first_of(",\"\n") == std::string::npos) return raw;
    std::string quoted = "\"";
    for (const char c : raw) {
        if (c == '"') quoted += '"';
        quoted += c;
    }
    return quoted + "\"";
}

}  // namespace

void write_histogram_csv(const std::map<std::string, long>& histogram, const std::string& path) {
    std::ofstream out = open_for_write(path);
    out << "tid,count\n";
    std::vector<std::string> ids;
    for (const auto& [id, count] : histogram) ids.push_back(id);
    std::sort(ids.begin(), ids.end(), tid_order);
    for (const std::string& id : ids) out << csv_field(id) << "," << histogram.at(id) << "\n";
}

void write_lift_csv(const LiftMatrix& matrix, const std::string& path) {
    std::ofstream out = open_for_write(path);
    out << "tid_a,tid_b,lift,support\n";
    for (size_t i = 0; i < matrix.template_ids.size(); ++i) {
        for (size_t j = i; j < matrix.template_ids.size(); ++j) {
            out << csv_field(matrix.template_ids[i]) << "," << csv_field(matrix.template_ids[j])
                << "," << matrix.lift[i][j] << "," << matrix.support[i][j] << "\n";
        }
    }
}

void write_lift_json(const LiftMatrix& matrix, const std::string& path) {
    Json j;
    j["query_count"] = matrix.query_count;
    j["template_ids"] = matrix.template_ids;
    j["lift"] = matrix.lift;
    j["support"] = matrix.support;
    std::ofstream out = open_for_write(path);
    out << j.dump(2) << "\n";
}

void export_template_texts(const TemplateStore& store, const std::string& path) {
    std::ofstream out = open_for_write(path);
    for (const ThoughtTemplate& t : store.templates) {
        Json j;
        j["template_id"] = t.template_id;
        j["template_name"] = t.template_name;
        j["description"] = t.description;
        out << j.dump() << "\n";
    }
}

void export_query_texts(const DatasetManifest& manifest, const std::string& path) {
    std::ofstream out = open_for_write(path);
    for (const QuerySpec& query : manifest.queries) {
        Json j;
        j["query_id"] = query.query_id;
        j["question"] = query.question;
        out << j.dump() << "\n";
    }
}

}  // namespace templar
