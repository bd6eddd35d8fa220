#pragma once

// Reader for the small TOML subset used by experiment files: [table] and [a.b] headers,
// key = value pairs with strings, integers, floats, booleans and (possibly multi-line)
// arrays of those, and # comments. The result is a JSON object tree.

#include <iosfwd>
#include <string>

#include <nlohmann/json.hpp>

namespace ele {

/// Throws ConfigError with the line number on anything outside the subset.
nlohmann::json parse_toml(std::istream& in);
nlohmann::json parse_toml_string(const std::string& text);
nlohmann::json load_toml(const std::string& path);

}  // namespace ele
