#pragma once

// INI-style configuration: `key = value` lines grouped under `[section]`
// headers. Dotted headers (`[simulation.flyaway]`) nest. Keys are stored
// flattened as "section.key". `#` and `;` start comments.

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "rydtx/io.hpp"

namespace rydtx {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Config {
 public:
  static Config parse(std::string_view text) {
    if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
    Config c;
    std::string section;
    std::size_t line_no = 0, start = 0;
    while (start <= text.size()) {
      const auto pos = text.find('\n', start);
      std::string_view line = text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
      ++line_no;
      if (const auto hash = line.find_first_of("#;"); hash != std::string_view::npos) line = line.substr(0, hash);
      line = io::trim(line);
      if (!line.empty()) {
        if (line.front() == '[') {
          if (line.back() != ']' || line.size() < 3)
            throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
          section = std::string(io::trim(line.substr(1, line.size() - 2)));
        } else {
          const auto eq = line.find('=');
          if (eq == std::string_view::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
          const auto key = io::trim(line.substr(0, eq));
          if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
          const std::string full = section.empty() ? std::string(key) : section + "." + std::string(key);
          if (c.values_.count(full)) throw ConfigError("line " + std::to_string(line_no) + ": duplicate key " + full);
          c.values_[full] = std::string(io::trim(line.substr(eq + 1)));
        }
      }
      if (pos == std::string_view::npos) break;
      start = pos + 1;
    }
    return c;
  }

  static Config load(const std::string& path) { return parse(io::read_file(path)); }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::optional<std::string> get(const std::string& key) const {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  /// Numeric value; "inf" is accepted for unbounded quantities.
  std::optional<double> get_double(const std::string& key, std::vector<std::string>& errors) const {
    auto v = get(key);
    if (!v) return std::nullopt;
    if (*v == "inf") return std::numeric_limits<double>::infinity();
    try {
      return io::parse_double(*v);
    } catch (const io::FormatError&) {
      errors.push_back(key + ": not a number ('" + *v + "')");
      return std::nullopt;
    }
  }

  std::optional<std::int64_t> get_int(const std::string& key, std::vector<std::string>& errors) const {
    auto v = get(key);
    if (!v) return std::nullopt;
    try {
      return io::parse_int(*v);
    } catch (const io::FormatError&) {
      errors.push_back(key + ": not an integer ('" + *v + "')");
      return std::nullopt;
    }
  }

  std::optional<std::vector<double>> get_list(const std::string& key, std::vector<std::string>& errors) const {
    auto v = get(key);
    if (!v) return std::nullopt;
    std::vector<double> out;
    try {
      for (auto cell : io::split(*v)) out.push_back(io::parse_double(cell));
    } catch (const io::FormatError&) {
      errors.push_back(key + ": expected a comma-separated list of numbers");
      return std::nullopt;
    }
    return out;
  }

  /// Keys present in the file that no accessor has asked for.
  std::vector<std::string> unused_keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
      if (!used_.count(k)) out.push_back(k);
    return out;
  }

  const std::map<std::string, std::string>& values() const noexcept { return values_; }

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

}  // namespace rydtx
