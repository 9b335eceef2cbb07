#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pssl {

// Sectioned key=value run configuration:
//
//   # comment
//   [generate]
//   seed = 42
//   n_signals = 20
//
// Keys are addressed as "section.key". Parsing rejects malformed lines,
// keys outside a section, and duplicate keys; consumers reject unknown
// keys through require_known, so a typo fails the run instead of being
// silently ignored.
class RunConfig {
 public:
  RunConfig() = default;

  static RunConfig from_file(const std::string& path);
  static RunConfig from_string(const std::string& text, const std::string& origin);

  // Command-line override; spec is "section.key=value".
  void set_override(const std::string& spec);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;
  const std::map<std::string, std::string>& entries() const noexcept { return values_; }

  std::string get_str(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // ConfigError when any stored key is missing from `known`.
  void require_known(const std::vector<std::string>& known) const;

 private:
  std::map<std::string, std::string> values_;
  std::string origin_ = "<empty>";
};

// Seed override from the PSSL_SEED environment variable, if set.
// A set-but-unparsable value raises ConfigError.
std::optional<std::uint64_t> env_seed();

}  // namespace pssl
