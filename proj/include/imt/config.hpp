#pragma once

// Flat `key = value` configuration text. `#` starts a comment line.

#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>

#include "imt/error.hpp"

namespace imt {

using ConfigMap = std::map<std::string, std::string>;

inline ConfigMap parse_config(std::istream& in, const std::string& source = "config") {
  auto trim = [](const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  };
  ConfigMap out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    const std::string where = source + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value");
    std::string key = trim(t.substr(0, eq)), value = trim(t.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (!out.emplace(key, value).second) throw ConfigError(where + ": key '" + key + "' repeated");
  }
  return out;
}

inline ConfigMap load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  return parse_config(in, path.string());
}

}  // namespace imt
