#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "satfuse/error.hpp"
#include "satfuse/io.hpp"

namespace satfuse {

/// Plain-text `key = value` configuration. `#` starts a comment; blank lines are ignored.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text) {
    KeyValueConfig cfg;
    std::size_t pos = 0;
    int line_no = 0;
    while (pos <= text.size()) {
      auto end = text.find('\n', pos);
      if (end == std::string_view::npos) end = text.size();
      std::string_view line = text.substr(pos, end - pos);
      pos = end + 1;
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) {
        if (end == text.size()) break;
        continue;
      }
      const auto eq = line.find('=');
      require(eq != std::string_view::npos, ErrorKind::Config,
              "config line " + std::to_string(line_no) + ": expected 'key = value'");
      std::string key(trim(line.substr(0, eq)));
      std::string value(trim(line.substr(eq + 1)));
      require(!key.empty(), ErrorKind::Config, "config line " + std::to_string(line_no) + ": empty key");
      require(!cfg.values_.contains(key), ErrorKind::Config, "duplicate config key '" + key + "'");
      cfg.values_.emplace(std::move(key), std::move(value));
      if (end == text.size()) break;
    }
    return cfg;
  }

  static KeyValueConfig load(const std::filesystem::path& path) {
    auto bytes = io::read_file(path);
    return parse(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  }

  /// Throws on any key outside `known`.
  void reject_unknown(const std::set<std::string>& known) const {
    for (const auto& [key, value] : values_)
      require(known.contains(key), ErrorKind::Config, "unknown config key '" + key + "'");
  }

  bool has(const std::string& key) const { return values_.contains(key); }
  const std::string& get(const std::string& key) const { return values_.at(key); }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  const std::map<std::string, std::string>& entries() const { return values_; }

  std::string to_string() const {
    std::string out;
    for (const auto& [key, value] : values_) out += key + " = " + value + "\n";
    return out;
  }

  static std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
  }

 private:
  std::map<std::string, std::string> values_;
};

inline long long parse_integer(std::string_view text, const std::string& what) {
  text = KeyValueConfig::trim(text);
  long long value = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  require(res.ec == std::errc() && res.ptr == text.data() + text.size(), ErrorKind::Config,
          what + ": not an integer: '" + std::string(text) + "'");
  return value;
}

inline bool parse_bool(std::string_view text, const std::string& what) {
  text = KeyValueConfig::trim(text);
  if (text == "1" || text == "true" || text == "on" || text == "yes") return true;
  if (text == "0" || text == "false" || text == "off" || text == "no") return false;
  throw Error(ErrorKind::Config, what + ": not a boolean: '" + std::string(text) + "'");
}

/// Comma-separated integers; an empty string yields an empty list.
inline std::vector<int> parse_int_list(std::string_view text, const std::string& what) {
  std::vector<int> out;
  text = KeyValueConfig::trim(text);
  if (text.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    auto item = text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    out.push_back(static_cast<int>(parse_integer(item, what)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace satfuse
