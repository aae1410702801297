#include "schema.hpp"

#include <fstream>
#include <stdexcept>

namespace testing {

namespace {

using nlohmann::json;

bool type_matches(const std::string& type, const json& v) {
  if (type == "null") return v.is_null();
  if (type == "boolean") return v.is_boolean();
  if (type == "integer") return v.is_number_integer();
  if (type == "number") return v.is_number();
  if (type == "string") return v.is_string();
  if (type == "array") return v.is_array();
  if (type == "object") return v.is_object();
  throw std::invalid_argument("schema: unknown type " + type);
}

const json& resolve(const json& root, const std::string& ref) {
  const std::string prefix = "#/definitions/";
  if (ref.rfind(prefix, 0) != 0) throw std::invalid_argument("schema: unsupported $ref " + ref);
  return root.at("definitions").at(ref.substr(prefix.size()));
}

void check(const json& root, const json& schema, const json& v, const std::string& path,
           std::vector<std::string>& errors) {
  if (schema.contains("$ref")) {
    check(root, resolve(root, schema["$ref"].get<std::string>()), v, path, errors);
    return;
  }
  if (schema.contains("type")) {
    const json& t = schema["type"];
    bool ok = false;
    if (t.is_string())
      ok = type_matches(t.get<std::string>(), v);
    else
      for (const auto& alt : t) ok = ok || type_matches(alt.get<std::string>(), v);
    if (!ok) {
      errors.push_back(path + ": type mismatch, expected " + t.dump());
      return;
    }
  }
  if (schema.contains("const") && schema["const"] != v)
    errors.push_back(path + ": expected constant " + schema["const"].dump());
  if (schema.contains("enum")) {
    bool found = false;
    for (const auto& e : schema["enum"]) found = found || e == v;
    if (!found) errors.push_back(path + ": value " + v.dump() + " not in enum");
  }
  if (schema.contains("minimum") && v.is_number() && v.get<double>() < schema["minimum"].get<double>())
    errors.push_back(path + ": below minimum");
  if (schema.contains("oneOf")) {
    int matches = 0;
    for (const auto& alt : schema["oneOf"]) {
      std::vector<std::string> sub;
      check(root, alt, v, path, sub);
      if (sub.empty()) ++matches;
    }
    if (matches != 1)
      errors.push_back(path + ": matches " + std::to_string(matches) + " oneOf branches");
  }
  if (v.is_object()) {
    if (schema.contains("required"))
      for (const auto& key : schema["required"])
        if (!v.contains(key.get<std::string>()))
          errors.push_back(path + ": missing required key " + key.get<std::string>());
    const json props = schema.value("properties", json::object());
    for (const auto& [key, value] : v.items()) {
      if (props.contains(key)) {
        check(root, props[key], value, path + "/" + key, errors);
      } else if (schema.contains("additionalProperties")) {
        const json& extra = schema["additionalProperties"];
        if (extra.is_boolean()) {
          if (!extra.get<bool>()) errors.push_back(path + ": unexpected key " + key);
        } else {
          check(root, extra, value, path + "/" + key, errors);
        }
      }
    }
  }
  if (v.is_array() && schema.contains("items"))
    for (std::size_t i = 0; i < v.size(); ++i)
      check(root, schema["items"], v[i], path + "/" + std::to_string(i), errors);
}

}  // namespace

std::vector<std::string> validate_schema(const json& schema, const json& instance) {
  std::vector<std::string> errors;
  check(schema, schema, instance, "", errors);
  return errors;
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return json::parse(in);
}

}  // namespace testing
