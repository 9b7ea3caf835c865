#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "mcnn/error.hpp"

namespace mcnn {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.emplace_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

/// Shortest decimal text that parses back to exactly the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw Error(Errc::InvalidArgument, "cannot format double");
  return {buf, end};
}

inline double parse_double(std::string_view text, std::string_view what) {
  text = trim(text);
  if (text == "inf" || text == "+inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw Error(Errc::InvalidConfig, std::string(what) + ": not a number: '" + std::string(text) + "'");
  }
  return v;
}

inline long long parse_int(std::string_view text, std::string_view what) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw Error(Errc::InvalidConfig, std::string(what) + ": not an integer: '" + std::string(text) + "'");
  }
  return v;
}

/// Line-oriented `section.key = value` settings. '#' starts a comment;
/// list values are comma separated. Keys keep insertion order when written
/// back out.
class KeyValues {
 public:
  static KeyValues parse(std::string_view text) {
    KeyValues kv;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
      auto end = text.find('\n', start);
      if (end == std::string_view::npos) end = text.size();
      std::string_view line = text.substr(start, end - start);
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = trim(line);
      if (!line.empty()) {
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
          throw Error(Errc::InvalidConfig, "line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        const std::string key(trim(line.substr(0, eq)));
        if (key.empty()) throw Error(Errc::InvalidConfig, "line " + std::to_string(line_no) + ": empty key");
        kv.set(key, std::string(trim(line.substr(eq + 1))));
      }
      if (end == text.size()) break;
      start = end + 1;
    }
    return kv;
  }

  static KeyValues load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::Io, "cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  void set(const std::string& key, std::string value) {
    if (auto it = index_.find(key); it != index_.end()) {
      entries_[it->second].second = std::move(value);
      return;
    }
    index_.emplace(key, entries_.size());
    entries_.emplace_back(key, std::move(value));
  }

  bool has(const std::string& key) const { return index_.count(key) != 0; }

  std::optional<std::string> get(const std::string& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    used_.insert(key);
    return entries_[it->second].second;
  }

  std::string get_or(const std::string& key, std::string fallback) const { return get(key).value_or(std::move(fallback)); }

  std::string require(const std::string& key) const {
    auto v = get(key);
    if (!v) throw Error(Errc::InvalidConfig, "missing key '" + key + "'");
    return *v;
  }

  double get_double(const std::string& key, double fallback) const {
    auto v = get(key);
    return v ? parse_double(*v, key) : fallback;
  }

  long long get_int(const std::string& key, long long fallback) const {
    auto v = get(key);
    return v ? parse_int(*v, key) : fallback;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    throw Error(Errc::InvalidConfig, key + ": expected a boolean, got '" + *v + "'");
  }

  std::vector<std::string> get_list(const std::string& key) const {
    auto v = get(key);
    if (!v || trim(*v).empty()) return {};
    return split(*v, ',');
  }

  /// Keys that were never read; lets callers reject typos.
  std::vector<std::string> unused_keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_)
      if (!used_.count(k)) out.push_back(k);
    return out;
  }

  const std::vector<std::pair<std::string, std::string>>& entries() const noexcept { return entries_; }

  std::string to_string() const {
    std::string out;
    for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
    return out;
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::map<std::string, std::size_t> index_;
  mutable std::set<std::string> used_;
};

}  // namespace mcnn
