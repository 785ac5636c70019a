#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace morphloss {

/// Flat `key = value` settings in a TOML-like file. `[section]` headers prefix
/// the keys that follow ("section.key"); `#` starts a comment; values may be
/// quoted strings, numbers, booleans or bracketed lists ("[2, 4, 8]").
/// Every typed getter throws ConfigInvalid naming the key on a bad value.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& origin = "config");
  static KeyValueConfig load(const std::filesystem::path& path);

  /// Later calls win; used for command-line overrides.
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const;
  std::vector<std::size_t> get_size_list(const std::string& key, const std::vector<std::size_t>& fallback) const;

  /// Keys present in the file that no getter has asked for.
  std::vector<std::string> unused_keys() const;
  /// Throws ConfigInvalid listing unknown keys.
  void require_all_used() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  const std::string* find(const std::string& key) const;

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

}  // namespace morphloss
