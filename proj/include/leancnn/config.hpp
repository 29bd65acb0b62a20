#pragma once

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "leancnn/error.hpp"

namespace leancnn {

// Flat config files:
//
//   # comment
//   key = value
//
// Keys are long option names without the leading dashes; '_' and '-' are
// interchangeable. Values run to the end of the line, surrounding whitespace
// and one pair of matching quotes are stripped. A repeated key is an error.
using ConfigMap = std::map<std::string, std::string>;

inline std::string normalize_key(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return key;
}

inline std::string env_name(const std::string& key) {
  std::string out = "LEANCNN_";
  for (char c : key) out += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline ConfigMap parse_config_text(const std::string& text, const std::string& origin = "config") {
  ConfigMap out;
  std::istringstream in(text);
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = normalize_key(trim(t.substr(0, eq)));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front())
      value = value.substr(1, value.size() - 2);
    if (!out.emplace(key, value).second)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
  }
  return out;
}

struct OptionInfo {
  std::string name;                   // long name without dashes
  std::vector<std::string> excludes;  // names of mutually exclusive options
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

inline EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    const char* v = std::getenv(name.c_str());
    if (!v) return std::nullopt;
    return std::string(v);
  };
}

inline bool given_on_command_line(const std::vector<std::string>& args, const std::string& name) {
  const std::string flag = "--" + name;
  return std::any_of(args.begin(), args.end(),
                     [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

struct LayeredArgs {
  std::vector<std::string> args;         // command line plus injected --key=value
  std::map<std::string, std::string> source;  // option -> "flag" | "env" | "file"
};

/// Fills in options missing from `args` with values from the environment
/// (LEANCNN_<KEY>) and then the config file, so the final precedence is
/// flag > env > file > built-in default. An option is not injected when one
/// it excludes was already given at a higher level.
inline LayeredArgs layer_arguments(std::vector<std::string> args, const std::vector<OptionInfo>& options,
                                   const ConfigMap& file, const EnvLookup& env) {
  LayeredArgs out;
  std::set<std::string> provided;
  for (const auto& o : options)
    if (given_on_command_line(args, o.name)) {
      provided.insert(o.name);
      out.source[o.name] = "flag";
    }
  std::vector<std::string> extra;
  for (int level = 0; level < 2; ++level) {
    std::set<std::string> added;
    for (const auto& o : options) {
      if (provided.count(o.name)) continue;
      const bool blocked = std::any_of(o.excludes.begin(), o.excludes.end(),
                                       [&](const std::string& x) { return provided.count(x) > 0; });
      if (blocked) continue;
      std::optional<std::string> value;
      if (level == 0) {
        if (env) value = env(env_name(o.name));
      } else if (auto it = file.find(o.name); it != file.end()) {
        value = it->second;
      }
      if (!value) continue;
      extra.push_back("--" + o.name + "=" + *value);
      added.insert(o.name);
      out.source[o.name] = level == 0 ? "env" : "file";
    }
    provided.insert(added.begin(), added.end());
  }
  args.insert(args.end(), extra.begin(), extra.end());
  out.args = std::move(args);
  return out;
}

inline std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::vector<double> parse_real_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw ConfigError(what + ": '" + item + "' is not a number");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(what + ": empty list");
  return out;
}

inline std::vector<std::size_t> parse_count_list(const std::string& s, const std::string& what) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(s)) {
    if (item.empty() || !std::all_of(item.begin(), item.end(), [](unsigned char c) { return std::isdigit(c); }))
      throw ConfigError(what + ": '" + item + "' is not a non-negative integer");
    out.push_back(static_cast<std::size_t>(std::stoull(item)));
  }
  if (out.empty()) throw ConfigError(what + ": empty list");
  return out;
}

}  // namespace leancnn
