#pragma once

#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "vrn/common.hpp"

namespace vrn {

// Flat key=value text config. Blank lines and '#' comments allowed; no
// sections, no nesting. Keys are unique (later lines win).
using Config = std::map<std::string, std::string>;

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline Config parse_config(std::istream& in, const std::string& what) {
  Config cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ParseError(strfmt("%s:%d: expected key=value, got \"%s\"",
                              what.c_str(), lineno, t.c_str()));
    std::string key = trim(t.substr(0, eq));
    if (key.empty())
      throw ParseError(strfmt("%s:%d: empty key", what.c_str(), lineno));
    cfg[key] = trim(t.substr(eq + 1));
  }
  return cfg;
}

inline Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  return parse_config(in, path);
}

inline std::string serialize_config(const Config& cfg) {
  std::string out;
  for (const auto& [k, v] : cfg) out += k + "=" + v + "\n";
  return out;
}

inline void save_config(const Config& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << serialize_config(cfg);
  if (!out) throw IoError("write failed: " + path);
}

inline bool cfg_has(const Config& c, const std::string& key) {
  return c.find(key) != c.end();
}

inline std::string cfg_str(const Config& c, const std::string& key,
                           const std::string& fallback) {
  auto it = c.find(key);
  return it == c.end() ? fallback : it->second;
}

inline std::string cfg_str_required(const Config& c, const std::string& key) {
  auto it = c.find(key);
  if (it == c.end()) throw ConfigError("missing config key: " + key);
  return it->second;
}

inline long long cfg_int(const Config& c, const std::string& key, long long fallback) {
  auto it = c.find(key);
  if (it == c.end()) return fallback;
  char* end = nullptr;
  long long v = std::strtoll(it->second.c_str(), &end, 10);
  if (end == it->second.c_str() || *end != '\0')
    throw ConfigError(strfmt("config key %s: \"%s\" is not an integer",
                             key.c_str(), it->second.c_str()));
  return v;
}

inline uint64_t cfg_u64(const Config& c, const std::string& key, uint64_t fallback) {
  auto it = c.find(key);
  if (it == c.end()) return fallback;
  char* end = nullptr;
  uint64_t v = std::strtoull(it->second.c_str(), &end, 10);
  if (end == it->second.c_str() || *end != '\0')
    throw ConfigError(strfmt("config key %s: \"%s\" is not an integer",
                             key.c_str(), it->second.c_str()));
  return v;
}

inline double cfg_double(const Config& c, const std::string& key, double fallback) {
  auto it = c.find(key);
  if (it == c.end()) return fallback;
  char* end = nullptr;
  double v = std::strtod(it->second.c_str(), &end);
  if (end == it->second.c_str() || *end != '\0')
    throw ConfigError(strfmt("config key %s: \"%s\" is not a number",
                             key.c_str(), it->second.c_str()));
  return v;
}

inline bool cfg_bool(const Config& c, const std::string& key, bool fallback) {
  auto it = c.find(key);
  if (it == c.end()) return fallback;
  std::string v = it->second;
  for (char& ch : v) ch = (char)std::tolower((unsigned char)ch);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(strfmt("config key %s: \"%s\" is not a boolean", key.c_str(),
                           v.c_str()));
}

}  // namespace vrn
