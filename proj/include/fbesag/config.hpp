#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fbesag {

/// Flat `section.key = value` configuration. `#` starts a comment; blank lines
/// are ignored; a repeated key is an error.
class Config {
 public:
  static Config parse(std::string_view text);
  static Config read_file(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, std::string value, std::size_t line = 0);

  std::optional<std::string> get(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Comma- or whitespace-separated list of numbers.
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<std::string> get_strings(const std::string& key,
                                       const std::vector<std::string>& fallback) const;

  /// Keys that were never read through a getter, for typo warnings.
  std::vector<std::string> unused_keys() const;
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, std::size_t> lines_;
  mutable std::map<std::string, bool> used_;

  [[noreturn]] void fail(const std::string& key, const std::string& what) const;
};

}  // namespace fbesag
