#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace novas::harness {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ValueKind { Integer, Number, Boolean, String, NumberList };

struct ConfigKey {
  std::string name;  // dotted path, e.g. "novas.samples"
  ValueKind kind;
  nlohmann::json fallback;  // null when the key is required
  std::string help;
};

const std::vector<ConfigKey>& config_schema();

// A run configuration: a nested JSON document validated against the schema.
// Values come from, in increasing precedence: schema defaults, the config
// file, then command-line assignments.
class RunConfig {
 public:
  RunConfig() = default;
  static RunConfig from_json(const nlohmann::json& doc);
  static RunConfig load(const std::string& path);

  // "key=value"; the value is parsed according to the key's kind
  // (lists as JSON arrays or comma-separated numbers).
  void set(const std::string& assignment);
  void set(const std::string& key, nlohmann::json value);

  // Values set in `other` replace ours.
  void merge(const RunConfig& other);

  // Throws ConfigError naming the first missing required key.
  void validate() const;

  bool has(const std::string& key) const;
  std::int64_t integer(const std::string& key) const;
  std::size_t count(const std::string& key) const;  // non-negative integer
  double number(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::string text(const std::string& key) const;
  std::vector<double> numbers(const std::string& key) const;

  // Explicitly set values only, as a nested document.
  nlohmann::json explicit_values() const;
  // Every schema key with its effective value, as a nested document.
  nlohmann::json resolved() const;

 private:
  const nlohmann::json& value(const std::string& key) const;
  nlohmann::json values_ = nlohmann::json::object();  // flat: dotted key -> value
};

}  // namespace novas::harness
