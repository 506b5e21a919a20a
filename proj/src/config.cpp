#include "fbesag/config.hpp"

#include <algorithm>
#include <cctype>

#include "fbesag/graph.hpp"
#include "text_util.hpp"

namespace fbesag {

Config Config::parse(std::string_view text) {
  Config cfg;
  const auto lines = detail::split_lines(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    auto line = lines[ln];
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(ln + 1, "expected 'key = value'");
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(ln + 1, "empty key");
    const bool valid = std::all_of(key.begin(), key.end(), [](char c) {
      return std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-';
    });
    if (!valid) throw ParseError(ln + 1, "invalid key '" + std::string(key) + "'");
    if (cfg.has(std::string(key)))
      throw ParseError(ln + 1, "duplicate key '" + std::string(key) + "'");
    cfg.set(std::string(key), std::string(value), ln + 1);
  }
  return cfg;
}

Config Config::read_file(const std::string& path) { return parse(detail::read_text_file(path)); }

void Config::set(const std::string& key, std::string value, std::size_t line) {
  values_[key] = std::move(value);
  lines_[key] = line;
  used_[key] = false;
}

void Config::fail(const std::string& key, const std::string& what) const {
  const auto it = lines_.find(key);
  throw ParseError(it == lines_.end() ? 0 : it->second, key + ": " + what);
}

std::optional<std::string> Config::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  used_[key] = true;
  return it->second;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  const auto d = detail::parse_number<double>(*v);
  if (!d) fail(key, "expected a number, got '" + *v + "'");
  return *d;
}

std::size_t Config::get_size(const std::string& key, std::size_t fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  const auto d = detail::parse_number<std::size_t>(*v);
  if (!d) fail(key, "expected a non-negative integer, got '" + *v + "'");
  return *d;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  fail(key, "expected true or false, got '" + *v + "'");
}

std::vector<double> Config::get_doubles(const std::string& key,
                                        const std::vector<double>& fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  std::vector<double> out;
  for (auto tok : detail::split_ws(*v)) {
    const auto d = detail::parse_number<double>(tok);
    if (!d) fail(key, "expected a number list, got '" + *v + "'");
    out.push_back(*d);
  }
  return out;
}

std::vector<std::string> Config::get_strings(const std::string& key,
                                             const std::vector<std::string>& fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  std::vector<std::string> out;
  for (auto tok : detail::split_ws(*v)) out.emplace_back(tok);
  return out;
}

std::vector<std::string> Config::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, used] : used_)
    if (!used) out.push_back(k);
  return out;
}

}  // namespace fbesag
