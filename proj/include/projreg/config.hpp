#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "projreg/errors.hpp"

namespace projreg {

// Sectioned key=value configuration.  Keys are addressed as "section.name"
// ("" section for keys before the first header).  '#' and ';' start comments,
// either as whole lines or after whitespace at the end of a value.  Later
// assignments win, which is also how command-line overrides are applied.
class Config {
 public:
  static Config parse_string(const std::string& text,
                             const std::string& origin = "<string>") {
    Config cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string stripped = strip_comment(line);
      const std::string t = trim(stripped);
      if (t.empty()) continue;
      if (t.front() == '[') {
        if (t.back() != ']' || t.size() < 3) {
          throw ConfigError(origin + ":" + std::to_string(lineno) +
                            ": malformed section header '" + t + "'");
        }
        section = trim(t.substr(1, t.size() - 2));
        if (section.empty()) {
          throw ConfigError(origin + ":" + std::to_string(lineno) +
                            ": empty section name");
        }
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(origin + ":" + std::to_string(lineno) +
                          ": expected key=value, got '" + t + "'");
      }
      const std::string key = trim(t.substr(0, eq));
      if (key.empty()) {
        throw ConfigError(origin + ":" + std::to_string(lineno) +
                          ": empty key");
      }
      cfg.set(section.empty() ? key : section + "." + key,
              trim(t.substr(eq + 1)));
    }
    return cfg;
  }

  static Config parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str(), path.string());
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  void set(const std::string& key, std::string value) {
    values_[key] = std::move(value);
  }

  std::string get_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) {
      throw ConfigError("missing config key '" + key + "'");
    }
    return it->second;
  }

  std::string get_string(const std::string& key, const std::string& dflt) const {
    auto it = values_.find(key);
    return it == values_.end() ? dflt : it->second;
  }

  double get_double(const std::string& key) const {
    return to_double(key, get_string(key));
  }
  double get_double(const std::string& key, double dflt) const {
    return has(key) ? get_double(key) : dflt;
  }

  int get_int(const std::string& key) const {
    const std::string v = get_string(key);
    std::size_t pos = 0;
    long out = 0;
    try {
      out = std::stol(v, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != v.size() || v.empty() || out < INT32_MIN || out > INT32_MAX) {
      throw ConfigError("config key '" + key + "': '" + v +
                        "' is not an integer");
    }
    return static_cast<int>(out);
  }
  int get_int(const std::string& key, int dflt) const {
    return has(key) ? get_int(key) : dflt;
  }

  bool get_bool(const std::string& key) const {
    std::string v = get_string(key);
    for (char& c : v) c = char(std::tolower(static_cast<unsigned char>(c)));
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
  }
  bool get_bool(const std::string& key, bool dflt) const {
    return has(key) ? get_bool(key) : dflt;
  }

  std::vector<double> get_double_list(const std::string& key) const {
    std::vector<double> out;
    for (const std::string& item : split_list(key)) {
      out.push_back(to_double(key, item));
    }
    return out;
  }

  std::vector<int> get_int_list(const std::string& key) const {
    std::vector<int> out;
    for (const std::string& item : split_list(key)) {
      std::size_t pos = 0;
      long v = 0;
      try {
        v = std::stol(item, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos != item.size() || item.empty()) {
        throw ConfigError("config key '" + key + "': '" + item +
                          "' is not an integer");
      }
      out.push_back(static_cast<int>(v));
    }
    return out;
  }

  std::vector<std::string> get_string_list(const std::string& key) const {
    return split_list(key);
  }

  const std::map<std::string, std::string>& entries() const { return values_; }

  // Stable content hash (FNV-1a over the sorted key=value pairs), used as a
  // provenance column so output files identify the configuration they came
  // from without embedding the whole file.  Keys in `exclude` are skipped so
  // callers can leave out settings that cannot affect the results (e.g. the
  // output directory).
  std::string hash(const std::vector<std::string>& exclude = {}) const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const std::string& s) {
      for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
      }
    };
    for (const auto& [k, v] : values_) {
      if (std::find(exclude.begin(), exclude.end(), k) != exclude.end()) {
        continue;
      }
      mix(k);
      mix("=");
      mix(v);
      mix("\n");
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(h));
    return buf;
  }

 private:
  static std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
  }

  // Whole-line comments and trailing comments preceded by whitespace.
  static std::string strip_comment(const std::string& line) {
    const std::string t = trim(line);
    if (!t.empty() && (t.front() == '#' || t.front() == ';')) return "";
    for (std::size_t i = 1; i < line.size(); ++i) {
      if ((line[i] == '#' || line[i] == ';') &&
          std::isspace(static_cast<unsigned char>(line[i - 1]))) {
        return line.substr(0, i);
      }
    }
    return line;
  }

  static double to_double(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double out = 0.0;
    try {
      out = std::stod(v, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != v.size() || v.empty()) {
      throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
    }
    return out;
  }

  std::vector<std::string> split_list(const std::string& key) const {
    const std::string v = get_string(key);
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(v);
    while (std::getline(in, item, ',')) {
      const std::string t = trim(item);
      if (!t.empty()) out.push_back(t);
    }
    if (out.empty()) {
      throw ConfigError("config key '" + key + "': empty list");
    }
    return out;
  }

  std::map<std::string, std::string> values_;
};

}  // namespace projreg
