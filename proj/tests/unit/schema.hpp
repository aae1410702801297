#pragma once

#include <json.hpp>

#include <string>
#include <vector>

namespace testing {

/// Subset of JSON Schema draft-07 used by the shipped summary schema: type,
/// const, enum, required, properties, additionalProperties, items, minimum,
/// oneOf and local $ref. Returns one message per violation.
std::vector<std::string> validate_schema(const nlohmann::json& schema,
                                         const nlohmann::json& instance);

nlohmann::json load_json(const std::string& path);

}  // namespace testing
