#include "templar/construction.hpp"

#include <atomic>
#include <fstream>
#include <thread>

#include "templar/json_io.hpp"

namespace templar {

std::vector<TrainingTriple> load_triples(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read training triples: " + path);
    std::vector<TrainingTriple> triples;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = "triples line " + std::to_string(line_no);
        Json j;
        try {
            j = Json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(where + ": invalid JSON: " + e.what());
        }
        TrainingTriple triple;
        triple.query_id = require_string(j, "query_id", where);
        triple.problem = require_string(j, "problem", where);
        triple.answer = require_string(j, "answer", where);
        if (j.contains("solution")) {
            triple.solution = require_string_array(j, "solution", where);
        }
        if (triple.problem.empty()) throw ParseError(where + ": field \"problem\" is empty");
        if (triple.answer.empty()) throw ParseError(where + ": field \"answer\" is empty");
        for (const TrainingTriple& seen : triples) {
            if (seen.query_id == triple.query_id) {
                throw ParseError(where + ": duplicate query_id " + triple.query_id);
            }
        }
        triples.push_back(std::move(triple));
    }
    return triples;
}

std::optional<std::string> solution_text(const TrainingTriple& triple) {
    if (!triple.solution) return std::nullopt;
    std::string joined;
    for (size_t i = 0; i < triple.solution->size(); ++i) {
        if (i > 0) joined += "\n";
        joined += (*triple.solution)[i];
    }
    return joined;
}

TripleConstruction construct_from_triple(Gateway& gateway, const TrainingTriple& triple,
                                         const ConstructionConfig& config) {
    CompletionRequest request;
    request.role = Role::Constructor;
    request.prompt = render_construction_prompt(triple.problem, solution_text(triple),
                                                triple.answer);
    request.max_output_tokens = config.max_output_tokens;
    request.temperature = default_temperature(Role::Constructor);
    request.backend_id = config.backend_id;

    const StructuredOutcome structured =
        complete_structured(gateway, request, config.max_reprompts);
    if (!structured.value) {
        return {{}, std::nullopt, SkipRecord{triple.query_id, structured.last_error}};
    }
    const Json& payload = *structured.value;

    TripleConstruction result;
    if (payload.is_object()) {
        Json holistic = payload;
        holistic.erase("sub_templates");
        result.holistic = std::move(holistic);
    }

    const std::string where = "construction output for " + triple.query_id;
    try {
        if (config.store_holistic) {
            result.templates.push_back(template_from_json(payload, false, where));
        } else {
            if (!payload.contains("sub_templates") || !payload.at("sub_templates").is_array() ||
                payload.at("sub_templates").empty()) {
                result.skip = SkipRecord{triple.query_id, "no sub_templates in model output"};
                return result;
            }
            size_t idx = 0;
            for (const Json& sub : payload.at("sub_templates")) {
                result.templates.push_back(template_from_json(
                    sub, false, where + " sub_templates[" + std::to_string(idx) + "]"));
                ++idx;
            }
        }
    } catch (const ParseError& e) {
        return {{}, result.holistic, SkipRecord{triple.query_id, e.what()}};
    }
    return result;
}

ConstructionOutcome build_initial_set(Gateway& gateway,
                                      const std::vector<TrainingTriple>& triples,
                                      const DatasetManifest* test_manifest,
                                      const ConstructionConfig& config) {
    if (triples.empty()) throw std::invalid_argument("no training triples");
    if (test_manifest != nullptr) {
        for (const TrainingTriple& triple : triples) {
            for (const QuerySpec& query : test_manifest->queries) {
                if (query.query_id == triple.query_id) {
                    throw ContaminationError("training triple " + triple.query_id +
                                             " appears in the test split");
                }
            }
        }
    }

    std::vector<TripleConstruction> results(triples.size());
    const int parallelism = gateway.config(config.backend_id).parallelism;
    const size_t workers = std::min<size_t>(std::max(parallelism, 1), triples.size());
    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (size_t i = next.fetch_add(1); i < triples.size(); i = next.fetch_add(1)) {
            results[i] = construct_from_triple(gateway, triples[i], config);
        }
    };
    std::vector<std::thread> pool;
    for (size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (std::thread& t : pool) t.join();

    ConstructionOutcome outcome;
    outcome.store.iteration = 0;
    outcome.store.oracle = config.oracle;
    outcome.meta["triples"] = Json::array();
    for (size_t i = 0; i < triples.size(); ++i) {
        const TripleConstruction& result = results[i];
        Json record;
        record["query_id"] = triples[i].query_id;
        record["template_ids"] = Json::array();
        for (const ThoughtTemplate& built : result.templates) {
            ThoughtTemplate t = built;
            t.template_id = assign_template_id(outcome.store);
            validate_template(t);
            outcome.store.provenance[t.template_id] = "constructed";
            outcome.source_map[t.template_id] = triples[i].query_id;
            record["template_ids"].push_back(t.template_id);
            outcome.store.templates.push_back(std::move(t));
        }
        record["holistic"] = result.holistic ? *result.holistic : Json(nullptr);
        if (result.skip) {
            record["skipped"] = true;
            record["skip_reason"] = result.skip->reason;
            outcome.skips.push_back(*result.skip);
        } else {
            record["skipped"] = false;
        }
        outcome.meta["triples"].push_back(std::move(record));
    }
    return outcome;
}

void write_construction_meta(const ConstructionOutcome& outcome, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write construction metadata: " + path);
    out << outcome.meta.dump(2) << "\n";
}

std::map<std::string, std::string> load_source_map(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read construction metadata: " + path);
    Json meta;
    try {
        meta = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("construction metadata " + path + ": invalid JSON: " + e.what());
    }
    std::map<std::string, std::string> source_map;
    if (!meta.contains("triples") || !meta.at("triples").is_array()) {
        throw ParseError("construction metadata " + path + ": missing \"triples\" array");
    }
    for (const Json& record : meta.at("triples")) {
        const std::string query_id =
            require_string(record, "query_id", "construction metadata triple");
        for (const std::string& tid :
             require_string_array(record, "template_ids", "construction metadata triple")) {
            source_map[tid] = query_id;
        }
    }
    return source_map;
}

}  // namespace templar
