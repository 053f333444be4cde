#pragma once
// Shared JSON helpers. All file formats use ordered_json so emitted key
// order is stable across runs.

#include <json.hpp>

#include <string>
#include <vector>

#include "templar/core.hpp"

namespace templar {

using Json = nlohmann::ordered_json;

// Field accessors that throw ParseError naming the missing/ill-typed field.
// `where` is a short context label such as "templates[3]".
std::string require_string(const Json& j, const std::string& field, const std::string& where);
std::vector<std::string> require_string_array(const Json& j, const std::string& field,
                                              const std::string& where);
const Json& require_object(const Json& j, const std::string& field, const std::string& where);
int require_int(const Json& j, const std::string& field, const std::string& where);

Json template_to_json(const ThoughtTemplate& t);

// Parses the template schema {template_id, template_name, description,
// reason_flow, example}. When require_id is false a missing template_id is
// tolerated (construction output: ids are assigned by the store).
ThoughtTemplate template_from_json(const Json& j, bool require_id,
                                   const std::string& where = "template");

}  // namespace templar
