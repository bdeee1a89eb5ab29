#pragma once

// Versioned JSON schemas for configuration documents and result payloads.
// Readers are strict: unknown keys and wrong types are rejected with the
// JSON pointer of the offending field.

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "procrm/designs.hpp"
#include "procrm/errors.hpp"
#include "procrm/sim_engine.hpp"

namespace procrm {

using json = nlohmann::json;

inline constexpr std::string_view kSchemaVersion = "1";

// Validation failure tied to a location inside a JSON document.
class FieldError : public Error {
 public:
  FieldError(ErrorCode code, std::string pointer, const std::string& message)
      : Error(code, (pointer.empty() ? std::string("/") : pointer) + ": " + message),
        pointer_(std::move(pointer)) {}
  const std::string& pointer() const noexcept { return pointer_; }

 private:
  std::string pointer_;
};

// Walks one JSON object, remembering which keys were consumed.
class ObjectReader {
 public:
  ObjectReader(const json& value, std::string pointer);

  const json* find(std::string_view key);
  const json& require(std::string_view key);

  double number(std::string_view key);
  double number_or(std::string_view key, double fallback);
  int integer(std::string_view key);
  int integer_or(std::string_view key, int fallback);
  std::uint64_t unsigned_integer(std::string_view key);
  bool boolean_or(std::string_view key, bool fallback);
  std::string string(std::string_view key);
  std::string string_or(std::string_view key, std::string fallback);
  std::vector<double> numbers(std::string_view key);

  // Checks an optional "schema"/"version" header.
  void header(std::string_view schema);
  // Rejects any key that was not consumed.
  void finish() const;

  std::string pointer_to(std::string_view key) const;
  [[noreturn]] void error(std::string_view key, const std::string& message) const;

 private:
  const json& value_;
  std::string pointer_;
  std::vector<std::string> seen_;
};

json to_json(const DesignConfig& config);
DesignConfig design_config_from_json(const json& j, const std::string& pointer = "");

json to_json(const Scenario& scenario);
Scenario scenario_from_json(const json& j, const std::string& pointer = "");

json scenario_set_to_json(const std::vector<Scenario>& scenarios);
std::vector<Scenario> scenario_set_from_json(const json& j);

json to_json(const SimJob& job);
SimJob sim_job_from_json(const json& j, const std::string& pointer = "");

json to_json(const OperatingCharacteristics& oc);

// Line (1-based) at which the value addressed by each JSON pointer starts.
// The text must be valid JSON.
std::map<std::string, int> json_pointer_lines(std::string_view text);

// Parses JSON text, turning syntax errors into validation errors.
json parse_json_text(std::string_view text, std::string_view what);

std::string read_text_file(const std::string& path);

}  // namespace procrm
