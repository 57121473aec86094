#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tinyloc::io {

/// Plain-text experiment configuration: INI-style sections of key=value
/// pairs. The key set is closed — unknown sections or keys are rejected so
/// a typo cannot silently fall back to a default — and every parsed value
/// can be echoed back verbatim for report provenance.
struct RunConfig {
  // section -> key -> raw string value; global keys live under "".
  std::map<std::string, std::map<std::string, std::string>> sections;

  bool has(const std::string& section, const std::string& key) const {
    auto s = sections.find(section);
    return s != sections.end() && s->second.count(key) > 0;
  }

  const std::string& get(const std::string& section,
                         const std::string& key) const {
    auto s = sections.find(section);
    if (s == sections.end() || s->second.count(key) == 0)
      throw std::runtime_error("config: missing required key [" + section +
                               "] " + key);
    return s->second.at(key);
  }

  std::string get_or(const std::string& section, const std::string& key,
                     const std::string& fallback) const {
    return has(section, key) ? get(section, key) : fallback;
  }

  uint64_t get_u64(const std::string& section, const std::string& key,
                   uint64_t fallback) const {
    if (!has(section, key)) return fallback;
    const std::string& v = get(section, key);
    try {
      std::size_t used = 0;
      const unsigned long long parsed = std::stoull(v, &used);
      if (used != v.size()) throw std::invalid_argument("trailing");
      return parsed;
    } catch (const std::exception&) {
      throw std::runtime_error("config: [" + section + "] " + key +
                               " must be a non-negative integer, got '" + v +
                               "'");
    }
  }

  double get_double(const std::string& section, const std::string& key,
                    double fallback) const {
    if (!has(section, key)) return fallback;
    const std::string& v = get(section, key);
    try {
      std::size_t used = 0;
      const double parsed = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument("trailing");
      return parsed;
    } catch (const std::exception&) {
      throw std::runtime_error("config: [" + section + "] " + key +
                               " must be a number, got '" + v + "'");
    }
  }

  bool get_bool(const std::string& section, const std::string& key,
                bool fallback) const {
    if (!has(section, key)) return fallback;
    const std::string& v = get(section, key);
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    throw std::runtime_error("config: [" + section + "] " + key +
                             " must be a boolean, got '" + v + "'");
  }

  /// Every value as ("section.key", value), sorted — report provenance.
  std::vector<std::pair<std::string, std::string>> echo() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [section, kv] : sections)
      for (const auto& [key, value] : kv)
        out.emplace_back(section.empty() ? key : section + "." + key, value);
    return out;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

/// The complete key vocabulary; "" is the global (pre-section) scope.
inline const std::map<std::string, std::set<std::string>>& config_schema() {
  static const std::map<std::string, std::set<std::string>> schema = {
      {"", {"seed"}},
      {"data",
       {"source", "rooms", "aps", "samples_per_room", "noise_std", "dropout",
        "train_walks", "val_walks", "test_walks", "window", "stride",
        "fill_horizon", "csv", "train_csv", "test_csv"}},
      {"model",
       {"family", "hidden", "blocks", "kernels", "state_dim", "conv_width",
        "expand"}},
      {"train", {"epochs", "batch", "lr", "stop_at_val_f1"}},
      {"quantize", {"scheme", "tau"}},
      {"distill", {"alpha", "soft_targets", "teacher"}},
      {"report", {"format", "out"}},
  };
  return schema;
}

}  // namespace detail

inline RunConfig parse_config(const std::string& text,
                              const std::string& origin = "<config>") {
  const auto& schema = detail::config_schema();
  RunConfig cfg;
  std::string section;  // global scope until the first [section]
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    const std::string line = detail::trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    const std::string where =
        origin + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::runtime_error("config: malformed section header at " +
                                 where);
      section = detail::trim(line.substr(1, line.size() - 2));
      if (schema.count(section) == 0)
        throw std::runtime_error("config: unknown section [" + section +
                                 "] at " + where);
      cfg.sections[section];  // a section may legitimately be empty
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: expected key=value at " + where);
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error("config: empty key at " + where);
    const auto allowed = schema.find(section);
    if (allowed == schema.end() || allowed->second.count(key) == 0)
      throw std::runtime_error("config: unknown key '" + key +
                               "' in section [" + section + "] at " + where);
    auto& kv = cfg.sections[section];
    if (!kv.emplace(key, value).second)
      throw std::runtime_error("config: duplicate key '" + key +
                               "' in section [" + section + "] at " + where);
  }
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

}  // namespace tinyloc::io
