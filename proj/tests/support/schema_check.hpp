#pragma once

// Validates a JSON document against the subset of JSON Schema used by the
// files under docs/schemas: type, properties, required,
// additionalProperties (boolean), items, enum, const, minimum, maximum,
// minItems, $ref to #/definitions/*.

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace schema {

using nlohmann::json;

class Checker {
 public:
  explicit Checker(json root) : root_(std::move(root)) {}

  // Empty result means valid.
  std::vector<std::string> check(const json& doc) const {
    std::vector<std::string> errors;
    walk(root_, doc, "$", errors);
    return errors;
  }

 private:
  const json& resolve(const json& s) const {
    if (s.contains("$ref")) {
      const std::string ref = s["$ref"];
      const std::string prefix = "#/definitions/";
      return root_.at("definitions").at(ref.substr(prefix.size()));
    }
    return s;
  }

  static bool type_matches(const std::string& type, const json& v) {
    if (type == "object") return v.is_object();
    if (type == "array") return v.is_array();
    if (type == "string") return v.is_string();
    if (type == "boolean") return v.is_boolean();
    if (type == "integer") return v.is_number_integer();
    if (type == "number") return v.is_number();
    if (type == "null") return v.is_null();
    return false;
  }

  void walk(const json& raw, const json& v, const std::string& path, std::vector<std::string>& errors) const {
    const json& s = resolve(raw);
    if (s.contains("type")) {
      bool ok = false;
      if (s["type"].is_array()) {
        for (const auto& t : s["type"]) ok = ok || type_matches(t.get<std::string>(), v);
      } else {
        ok = type_matches(s["type"].get<std::string>(), v);
      }
      if (!ok) {
        errors.push_back(path + ": expected type " + s["type"].dump());
        return;
      }
    }
    if (s.contains("const") && v != s["const"]) errors.push_back(path + ": expected " + s["const"].dump());
    if (s.contains("enum")) {
      bool found = false;
      for (const auto& e : s["enum"]) found = found || e == v;
      if (!found) errors.push_back(path + ": " + v.dump() + " not in enum");
    }
    if (v.is_number()) {
      if (s.contains("minimum") && v.get<double>() < s["minimum"].get<double>())
        errors.push_back(path + ": below minimum");
      if (s.contains("maximum") && v.get<double>() > s["maximum"].get<double>())
        errors.push_back(path + ": above maximum");
    }
    if (v.is_object()) {
      if (s.contains("required"))
        for (const auto& key : s["required"])
          if (!v.contains(key.get<std::string>())) errors.push_back(path + ": missing '" + key.get<std::string>() + "'");
      const json props = s.value("properties", json::object());
      for (const auto& [key, child] : v.items()) {
        if (props.contains(key)) {
          walk(props[key], child, path + "." + key, errors);
        } else if (s.contains("additionalProperties") && s["additionalProperties"] == false) {
          errors.push_back(path + ": unexpected property '" + key + "'");
        }
      }
    }
    if (v.is_array()) {
      if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>())
        errors.push_back(path + ": fewer than minItems");
      if (s.contains("items"))
        for (std::size_t i = 0; i < v.size(); ++i) walk(s["items"], v[i], path + "[" + std::to_string(i) + "]", errors);
    }
  }

  json root_;
};

}  // namespace schema
