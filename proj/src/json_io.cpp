#include "templar/json_io.hpp"

namespace templar {

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& field, const char* what) {
    throw ParseError(where + ": field \"" + field + "\" " + what);
}

}  // namespace

std::string require_string(const Json& j, const std::string& field, const std::string& where) {
    if (!j.contains(field)) fail(where, field, "is missing");
    if (!j.at(field).is_string()) fail(where, field, "must be a string");
    return j.at(field).get<std::string>();
}

std::vector<std::string> require_string_array(const Json& j, const std::string& field,
                                              const std::string& where) {
    if (!j.contains(field)) fail(where, field, "is missing");
    const Json& arr = j.at(field);
    if (!arr.is_array()) fail(where, field, "must be an array of strings");
    std::vector<std::string> out;
    out.reserve(arr.size());
    for (const auto& item : arr) {
        if (!item.is_string()) fail(where, field, "must be an array of strings");
        out.push_back(item.get<std::string>());
    }
    return out;
}

const Json& require_object(const Json& j, const std::string& field, const std::string& where) {
    if (!j.contains(field)) fail(where, field, "is missing");
    if (!j.at(field).is_object()) fail(where, field, "must be an object");
    return j.at(field);
}

int require_int(const Json& j, const std::string& field, const std::string& where) {
    if (!j.contains(field)) fail(where, field, "is missing");
    if (!j.at(field).is_number_integer()) fail(where, field, "must be an integer");
    return j.at(field).get<int>();
}

Json template_to_json(const ThoughtTemplate& t) {
    Json j;
    j["template_id"] = t.template_id;
    j["template_name"] = t.template_name;
    j["description"] = t.description;
    j["reason_flow"] = t.reason_flow;
    Json ex;
    ex["example_problem"] = t.example.example_problem;
    ex["solution_steps"] = t.example.solution_steps;
    ex["final_answer"] = t.example.final_answer;
    j["example"] = ex;
    return j;
}

ThoughtTemplate template_from_json(const Json& j, bool require_id, const std::string& where) {
    if (!j.is_object()) throw ParseError(where + ": expected a JSON object");
    ThoughtTemplate t;
    if (require_id || j.contains("template_id")) {
        t.template_id = require_string(j, "template_id", where);
    }
    t.template_name = require_string(j, "template_name", where);
    t.description = require_string(j, "description", where);
    t.reason_flow = require_string_array(j, "reason_flow", where);
    const Json& ex = require_object(j, "example", where);
    const std::string ex_where = where + ".example";
    t.example.example_problem = require_string(ex, "example_problem", ex_where);
    t.example.solution_steps = require_string_array(ex, "solution_steps", ex_where);
    t.example.final_answer = require_string(ex, "final_answer", ex_where);
    return t;
}

}  // namespace templar
