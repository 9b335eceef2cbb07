#include "pssl/runconfig.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "pssl/csv.hpp"
#include "pssl/errors.hpp"

namespace pssl {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool valid_name(const std::string& s) {
  if (s.empty()) return false;
  for (const char c : s)
    if (!(std::islower(static_cast<unsigned char>(c)) ||
          std::isdigit(static_cast<unsigned char>(c)) || c == '_'))
      return false;
  return true;
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return from_string(ss.str(), path);
}

RunConfig RunConfig::from_string(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  cfg.origin_ = origin;
  std::istringstream is(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(where + ": unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      if (!valid_name(section)) throw ConfigError(where + ": bad section name '" + section + "'");
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (!valid_name(key)) throw ConfigError(where + ": bad key name '" + key + "'");
    if (section.empty()) throw ConfigError(where + ": key '" + key + "' outside any section");
    const std::string full = section + "." + key;
    if (cfg.values_.count(full)) throw ConfigError(where + ": duplicate key '" + full + "'");
    cfg.values_[full] = value;
  }
  return cfg;
}

void RunConfig::set_override(const std::string& spec) {
  const std::size_t eq = spec.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override '" + spec + "' must look like section.key=value");
  const std::string key = trim(spec.substr(0, eq));
  const std::size_t dot = key.find('.');
  if (dot == std::string::npos || !valid_name(key.substr(0, dot)) ||
      !valid_name(key.substr(dot + 1)))
    throw ConfigError("override key '" + key + "' must look like section.key");
  set(key, trim(spec.substr(eq + 1)));
}

void RunConfig::set(const std::string& key, const std::string& value) { values_[key] = value; }

bool RunConfig::has(const std::string& key) const { return values_.count(key) != 0; }

std::string RunConfig::get_str(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return parse_double(it->second, origin_ + " " + key);
  } catch (const Error&) {
    throw ConfigError(origin_ + ": key '" + key + "' is not a number: '" + it->second + "'");
  }
}

std::int64_t RunConfig::get_int(const std::string& key, std::int64_t fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return parse_int(it->second, origin_ + " " + key);
  } catch (const Error&) {
    throw ConfigError(origin_ + ": key '" + key + "' is not an integer: '" + it->second + "'");
  }
}

std::uint64_t RunConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  const std::int64_t v = get_int(key, 0);
  if (!has(key)) return fallback;
  if (v < 0) throw ConfigError(origin_ + ": key '" + key + "' must be non-negative");
  return static_cast<std::uint64_t>(v);
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::string v = it->second;
  std::transform(v.begin(), v.end(), v.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(origin_ + ": key '" + key + "' is not a boolean: '" + it->second + "'");
}

void RunConfig::require_known(const std::vector<std::string>& known) const {
  for (const auto& [key, value] : values_) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError(origin_ + ": unknown key '" + key + "'");
  }
}

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("PSSL_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  try {
    const std::int64_t parsed = parse_int(v, "PSSL_SEED");
    if (parsed < 0) throw ConfigError("PSSL_SEED must be non-negative");
    return static_cast<std::uint64_t>(parsed);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error&) {
    throw ConfigError("PSSL_SEED is not an integer");
  }
}

}  // namespace pssl
