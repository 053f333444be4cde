#include "templar/core.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "templar/digest.hpp"
#include "templar/json_io.hpp"

namespace templar {

namespace {

// Numeric suffix of a well-formed "TID_<n>" id, -1 otherwise.
long tid_suffix(const std::string& id) {
    if (id.rfind("TID_", 0) != 0 || id.size() == 4) return -1;
    long n = 0;
    for (size_t i = 4; i < id.size(); ++i) {
        if (id[i] < '0' || id[i] > '9') return -1;
        n = n * 10 + (id[i] - '0');
    }
    return n;
}

}  // namespace

std::string decision_name(Decision d) {
    switch (d) {
        case Decision::Keep: return "KEEP";
        case Decision::Fix: return "FIX";
        case Decision::Add: return "ADD";
        case Decision::Discard: return "DISCARD";
    }
    throw std::logic_error("unreachable decision kind");
}

Decision decision_from_name(const std::string& name) {
    if (name == "KEEP") return Decision::Keep;
    if (name == "FIX") return Decision::Fix;
    if (name == "ADD") return Decision::Add;
    if (name == "DISCARD") return Decision::Discard;
    throw std::invalid_argument("unknown decision kind: " + name);
}

const ThoughtTemplate* TemplateStore::find(const std::string& template_id) const {
    for (const auto& t : templates) {
        if (t.template_id == template_id) return &t;
    }
    return nullptr;
}

std::string assign_template_id(const TemplateStore& store) {
    long max_suffix = 0;
    for (const auto& t : store.templates) {
        max_suffix = std::max(max_suffix, tid_suffix(t.template_id));
    }
    for (const auto& [id, origin] : store.provenance) {
        max_suffix = std::max(max_suffix, tid_suffix(id));
    }
    return "TID_" + std::to_string(max_suffix + 1);
}

TemplateStore apply_decision(const TemplateStore& store, const std::string& template_id,
                             Decision decision, const std::optional<ThoughtTemplate>& revised) {
    if (store.find(template_id) == nullptr) {
        throw std::invalid_argument("apply_decision: unknown template_id " + template_id);
    }
    const bool needs_revision = decision == Decision::Fix || decision == Decision::Add;
    if (needs_revision && !revised.has_value()) {
        throw std::invalid_argument("apply_decision: revised template required for " +
                                    decision_name(decision));
    }
    if (!needs_revision && revised.has_value()) {
        throw std::invalid_argument("apply_decision: revised template not allowed for " +
                                    decision_name(decision));
    }

    TemplateStore next = store;
    switch (decision) {
        case Decision::Keep:
            break;
        case Decision::Discard:
            // Provenance entry stays so the suffix is never reused.
            std::erase_if(next.templates,
                          [&](const ThoughtTemplate& t) { return t.template_id == template_id; });
            break;
        case Decision::Fix: {
            ThoughtTemplate fixed = *revised;
            fixed.template_id = template_id;  // replacement keeps the id
            validate_template(fixed);
            for (auto& t : next.templates) {
                if (t.template_id == template_id) t = fixed;
            }
            next.provenance[template_id] = "fixed-from:" + template_id;
            break;
        }
        case Decision::Add: {
            ThoughtTemplate added = *revised;
            added.template_id = assign_template_id(next);
            validate_template(added);
            next.provenance[added.template_id] = "added-from:" + template_id;
            next.templates.push_back(std::move(added));
            break;
        }
    }
    return next;
}

void validate_template(const ThoughtTemplate& t) {
    const std::string where = "template " + (t.template_id.empty() ? "<unnamed>" : t.template_id);
    if (t.template_id.empty()) throw ParseError(where + ": field \"template_id\" is empty");
    if (t.reason_flow.empty()) throw ParseError(where + ": field \"reason_flow\" is empty");
    for (const auto& step : t.reason_flow) {
        if (step.empty()) throw ParseError(where + ": field \"reason_flow\" has an empty step");
    }
    if (t.example.example_problem.empty()) {
        throw ParseError(where + ": field \"example_problem\" is empty");
    }
    if (t.example.solution_steps.empty()) {
        throw ParseError(where + ": field \"solution_steps\" is empty");
    }
    if (t.example.final_answer.empty()) {
        throw ParseError(where + ": field \"final_answer\" is empty");
    }
}

namespace {

Json store_to_json(const TemplateStore& store) {
    Json j;
    j["iteration"] = store.iteration;
    Json templates = Json::array();
    for (const auto& t : store.templates) templates.push_back(template_to_json(t));
    j["templates"] = std::move(templates);
    Json prov = Json::object();
    for (const auto& [id, origin] : store.provenance) prov[id] = origin;
    j["provenance"] = std::move(prov);
    if (store.oracle) j["oracle"] = true;
    return j;
}

TemplateStore store_from_json(const Json& j) {
    if (!j.is_object()) throw ParseError("store: expected a JSON object");
    TemplateStore store;
    store.iteration = require_int(j, "iteration", "store");
    if (store.iteration < 0) throw ParseError("store: field \"iteration\" must be non-negative");
    if (!j.contains("templates") || !j.at("templates").is_array()) {
        throw ParseError("store: field \"templates\" is missing or not an array");
    }
    std::set<std::string> seen;
    size_t idx = 0;
    for (const auto& tj : j.at("templates")) {
        ThoughtTemplate t =
            template_from_json(tj, /*require_id=*/true, "templates[" + std::to_string(idx) + "]");
        validate_template(t);
        if (!seen.insert(t.template_id).second) {
            throw ParseError("store: duplicate template_id " + t.template_id);
        }
        store.templates.push_back(std::move(t));
        ++idx;
    }
    const Json& prov = require_object(j, "provenance", "store");
    for (const auto& [id, origin] : prov.items()) {
        if (!origin.is_string()) throw ParseError("store: field \"provenance\" values must be strings");
        store.provenance[id] = origin.get<std::string>();
    }
    if (j.contains("oracle")) {
        if (!j.at("oracle").is_boolean()) throw ParseError("store: field \"oracle\" must be a boolean");
        store.oracle = j.at("oracle").get<bool>();
    }
    return store;
}

}  // namespace

void snapshot(const TemplateStore& store, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("snapshot: cannot write " + path);
    out << store_to_json(store).dump(2) << "\n";
    if (!out) throw std::runtime_error("snapshot: write failed for " + path);
}

TemplateStore load_store(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load: cannot read " + path);
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("store " + path + ": invalid JSON: " + e.what());
    }
    return store_from_json(j);
}

std::string template_to_string(const ThoughtTemplate& t) {
    return template_to_json(t).dump();
}

std::string store_to_string(const TemplateStore& store) {
    return store_to_json(store).dump();
}

std::string store_hash(const TemplateStore& store) {
    return sha256_hex(store_to_string(store));
}

}  // namespace templar
