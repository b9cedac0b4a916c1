#pragma once

#include <stdexcept>
#include <string>

#include <json.hpp>

namespace prefforge::config {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parses the TOML subset used by run configs into a JSON object: tables and
// dotted tables, bare/quoted/dotted keys, basic and literal strings,
// integers, floats, booleans, (nested, multi-line) arrays and inline tables.
// Dates and multi-line strings are not supported.
nlohmann::json parse_toml(const std::string& text);

}  // namespace prefforge::config
