#include "ele/toml_config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "ele/errors.hpp"

namespace ele {
namespace {

class ValueParser {
 public:
  ValueParser(const std::string& text, int line) : s_(text), line_(line) {}

  nlohmann::json parse() {
    auto v = value();
    skip_space();
    if (pos_ != s_.size()) fail("unexpected characters after value");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("toml line " + std::to_string(line_) + ": " + what);
  }

  void skip_space() {
    while (pos_ < s_.size()) {
      if (std::isspace(static_cast<unsigned char>(s_[pos_]))) {
        ++pos_;
      } else if (s_[pos_] == '#') {
        while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  nlohmann::json value() {
    skip_space();
    if (pos_ >= s_.size()) fail("missing value");
    const char c = s_[pos_];
    if (c == '"') return string();
    if (c == '[') return array();
    if (s_.compare(pos_, 4, "true") == 0) {
      pos_ += 4;
      return true;
    }
    if (s_.compare(pos_, 5, "false") == 0) {
      pos_ += 5;
      return false;
    }
    return number();
  }

  nlohmann::json string() {
    ++pos_;
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char c = s_[pos_++];
      if (c == '\\') {
        if (pos_ >= s_.size()) fail("unterminated escape");
        const char e = s_[pos_++];
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          default: fail(std::string("unsupported escape \\") + e);
        }
      }
      out += c;
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  nlohmann::json array() {
    ++pos_;
    nlohmann::json out = nlohmann::json::array();
    skip_space();
    if (pos_ < s_.size() && s_[pos_] == ']') {
      ++pos_;
      return out;
    }
    while (true) {
      out.push_back(value());
      skip_space();
      if (pos_ >= s_.size()) fail("unterminated array");
      if (s_[pos_] == ',') {
        ++pos_;
        skip_space();
        if (pos_ < s_.size() && s_[pos_] == ']') {
          ++pos_;
          return out;
        }
        continue;
      }
      if (s_[pos_] == ']') {
        ++pos_;
        return out;
      }
      fail("expected ',' or ']' in array");
    }
  }

  nlohmann::json number() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '+' ||
                                s_[pos_] == '-' || s_[pos_] == '.' || s_[pos_] == '_')) {
      ++pos_;
    }
    std::string token;
    for (std::size_t i = start; i < pos_; ++i) {
      if (s_[i] != '_') token += s_[i];
    }
    if (token.empty()) fail("expected a value");
    const bool is_float = token.find_first_of(".eE") != std::string::npos || token == "inf" || token == "nan";
    if (!is_float) {
      long long v = 0;
      const char* first = token.data() + (token[0] == '+' ? 1 : 0);
      auto [p, ec] = std::from_chars(first, token.data() + token.size(), v);
      if (ec != std::errc() || p != token.data() + token.size()) fail("invalid integer '" + token + "'");
      return v;
    }
    try {
      std::size_t used = 0;
      const double v = std::stod(token, &used);
      if (used != token.size()) fail("invalid float '" + token + "'");
      return v;
    } catch (const std::logic_error&) {
      fail("invalid float '" + token + "'");
    }
  }

  const std::string& s_;
  int line_;
  std::size_t pos_ = 0;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

bool valid_key(const std::string& key) {
  if (key.empty()) return false;
  for (char c : key) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  }
  return true;
}

int bracket_depth(const std::string& text) {
  int depth = 0;
  bool quoted = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '"' && (i == 0 || text[i - 1] != '\\')) quoted = !quoted;
    if (quoted) continue;
    if (text[i] == '[') ++depth;
    if (text[i] == ']') --depth;
  }
  return depth;
}

}  // namespace

nlohmann::json parse_toml(std::istream& in) {
  nlohmann::json root = nlohmann::json::object();
  nlohmann::json* table = &root;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const int first_line = line_no;
    std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    auto fail = [&](const std::string& what) {
      throw ConfigError("toml line " + std::to_string(first_line) + ": " + what);
    };

    if (line.front() == '[') {
      if (line.size() < 3 || line.back() != ']' || line[1] == '[') fail("malformed table header");
      table = &root;
      std::stringstream path(trim(line.substr(1, line.size() - 2)));
      std::string part;
      while (std::getline(path, part, '.')) {
        part = trim(part);
        if (!valid_key(part)) fail("invalid table name '" + part + "'");
        auto& next = (*table)[part];
        if (next.is_null()) next = nlohmann::json::object();
        if (!next.is_object()) fail("table '" + part + "' redefines a value");
        table = &next;
      }
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (!valid_key(key)) fail("invalid key '" + key + "'");
    std::string value = trim(line.substr(eq + 1));
    while (bracket_depth(value) > 0 && std::getline(in, raw)) {
      ++line_no;
      value += "\n" + trim(strip_comment(raw));
    }
    if (table->contains(key)) fail("duplicate key '" + key + "'");
    (*table)[key] = ValueParser(value, first_line).parse();
  }
  return root;
}

nlohmann::json parse_toml_string(const std::string& text) {
  std::istringstream in(text);
  return parse_toml(in);
}

nlohmann::json load_toml(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse_toml(in);
}

}  // namespace ele
