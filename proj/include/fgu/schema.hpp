#pragma once

#include <stdexcept>
#include <string>

#include <json.hpp>

namespace fgu {

// Validator for the subset of JSON Schema the shipped schemas use:
// type, required, properties, items, enum, minimum, maximum.
inline void validate_schema(const nlohmann::json& doc, const nlohmann::json& schema,
                            const std::string& where = "$") {
  using nlohmann::json;
  if (schema.contains("type")) {
    const std::string type = schema["type"].get<std::string>();
    const bool ok = (type == "object" && doc.is_object()) ||
                    (type == "array" && doc.is_array()) ||
                    (type == "string" && doc.is_string()) ||
                    (type == "number" && doc.is_number()) ||
                    (type == "integer" && doc.is_number_integer()) ||
                    (type == "boolean" && doc.is_boolean()) ||
                    (type == "null" && doc.is_null());
    if (!ok)
      throw std::runtime_error("schema: " + where + " is not of type " + type);
  }
  if (schema.contains("enum")) {
    bool found = false;
    for (const auto& candidate : schema["enum"])
      if (doc == candidate) found = true;
    if (!found)
      throw std::runtime_error("schema: " + where + " not among the allowed values");
  }
  if (schema.contains("minimum") && doc.is_number() &&
      doc.get<double>() < schema["minimum"].get<double>())
    throw std::runtime_error("schema: " + where + " below minimum");
  if (schema.contains("maximum") && doc.is_number() &&
      doc.get<double>() > schema["maximum"].get<double>())
    throw std::runtime_error("schema: " + where + " above maximum");
  if (schema.contains("required")) {
    for (const auto& field : schema["required"])
      if (!doc.contains(field.get<std::string>()))
        throw std::runtime_error("schema: " + where + " missing required field \"" +
                                 field.get<std::string>() + "\"");
  }
  if (schema.contains("properties") && doc.is_object()) {
    for (const auto& [name, sub] : schema["properties"].items())
      if (doc.contains(name)) validate_schema(doc[name], sub, where + "." + name);
  }
  if (schema.contains("items") && doc.is_array()) {
    std::size_t i = 0;
    for (const auto& element : doc) {
      validate_schema(element, schema["items"], where + "[" + std::to_string(i) + "]");
      ++i;
    }
  }
}

// The published report schema. schemas/report.schema.json in the repository
// must stay byte-identical to this text (covered by a test); reports are
// validated against it every time one is written.
inline const char* report_schema_text() {
  return R"({
  "$schema": "http://json-schema.org/draft-07/schema#",
  "title": "fgu run report",
  "type": "object",
  "required": ["schema_version", "command", "seeds", "config", "metrics", "timings_sec"],
  "properties": {
    "schema_version": {"type": "integer", "minimum": 1},
    "command": {"type": "string", "enum": ["partition", "train", "unlearn", "attack", "evaluate"]},
    "mode": {"type": "string", "enum": ["meta", "client"]},
    "seeds": {
      "type": "object",
      "required": ["data", "train", "request"],
      "properties": {
        "data": {"type": "integer"},
        "train": {"type": "integer"},
        "request": {"type": "integer"}
      }
    },
    "config": {"type": "object"},
    "metrics": {
      "type": "object",
      "properties": {
        "theta_o": {
          "type": "object",
          "properties": {
            "global_test_accuracy": {"type": "number", "minimum": 0, "maximum": 1},
            "mean_local_test_accuracy": {"type": "number", "minimum": 0, "maximum": 1},
            "per_client_test_accuracy": {"type": "array", "items": {"type": "object", "required": ["client", "accuracy"], "properties": {"client": {"type": "integer", "minimum": 0}, "accuracy": {"type": "number", "minimum": 0, "maximum": 1}}}}
          }
        },
        "theta_bar": {
          "type": "object",
          "properties": {
            "global_test_accuracy": {"type": "number", "minimum": 0, "maximum": 1},
            "mean_local_test_accuracy": {"type": "number", "minimum": 0, "maximum": 1},
            "per_client_test_accuracy": {"type": "array", "items": {"type": "object", "required": ["client", "accuracy"], "properties": {"client": {"type": "integer", "minimum": 0}, "accuracy": {"type": "number", "minimum": 0, "maximum": 1}}}}
          }
        },
        "theta_star": {
          "type": "object",
          "properties": {
            "global_test_accuracy": {"type": "number", "minimum": 0, "maximum": 1},
            "mean_local_test_accuracy": {"type": "number", "minimum": 0, "maximum": 1},
            "per_client_test_accuracy": {"type": "array", "items": {"type": "object", "required": ["client", "accuracy"], "properties": {"client": {"type": "integer", "minimum": 0}, "accuracy": {"type": "number", "minimum": 0, "maximum": 1}}}}
          }
        },
        "clean": {"type": "object"},
        "poisoned": {"type": "object"},
        "post_unlearn": {"type": "object"},
        "unlearn": {
          "type": "object",
          "properties": {
            "gap_points_vs_retrain": {"type": "number", "minimum": 0}
          }
        },
        "mia": {
          "type": "object",
          "properties": {
            "theta_o_auc": {"type": "number", "minimum": 0, "maximum": 1},
            "theta_o_accuracy": {"type": "number", "minimum": 0, "maximum": 1},
            "theta_bar_auc": {"type": "number", "minimum": 0, "maximum": 1},
            "theta_bar_accuracy": {"type": "number", "minimum": 0, "maximum": 1},
            "members": {"type": "integer", "minimum": 1},
            "non_members": {"type": "integer", "minimum": 1}
          }
        },
        "distance": {
          "type": "object",
          "properties": {
            "theta_bar_vs_retrain_l2": {"type": "number", "minimum": 0},
            "theta_bar_vs_retrain_agreement": {"type": "number", "minimum": 0, "maximum": 1},
            "random_vs_retrain_agreement": {"type": "number", "minimum": 0, "maximum": 1}
          }
        },
        "request": {"type": "object"}
      }
    },
    "influenced_clients": {"type": "array", "items": {"type": "integer", "minimum": 0}},
    "excluded_clients": {"type": "array", "items": {"type": "integer", "minimum": 0}},
    "adv_provenance": {
      "type": "array",
      "items": {
        "type": "object",
        "required": ["client", "iterations", "initial_l_diff", "final_l_diff"],
        "properties": {
          "client": {"type": "integer", "minimum": 0},
          "iterations": {"type": "integer", "minimum": 0},
          "initial_l_diff": {"type": "number"},
          "final_l_diff": {"type": "number"},
          "final_l_reg": {"type": "number"},
          "final_l_adv": {"type": "number"}
        }
      }
    },
    "timings_sec": {"type": "object"}
  }
})";
}

inline nlohmann::json report_schema() {
  return nlohmann::json::parse(report_schema_text());
}

}  // namespace fgu
