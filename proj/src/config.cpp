// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "postlab/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace postlab {
namespace {

std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void parse_into(std::string_view text, const std::string& base_dir,
                std::map<std::string, std::string>& out,
                std::set<std::string>& include_stack) {
  size_t pos = 0;
  int lineno = 0;
  while (pos <= text.size()) {
    size_t nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;

    std::string_view line = raw;
    if (size_t hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    std::string stripped = trim(line);
    if (stripped.empty()) continue;

    size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) + " has no '='");
    std::string key = trim(std::string_view(stripped).substr(0, eq));
    std::string value = trim(std::string_view(stripped).substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument("config: line " + std::to_string(lineno) + " has empty key");

    if (key == "include") {
      std::filesystem::path inc(value);
      if (inc.is_relative()) inc = std::filesystem::path(base_dir) / inc;
      std::string canon = inc.lexically_normal().string();
      if (!include_stack.insert(canon).second)
        throw std::invalid_argument("config: include cycle at " + canon);
      parse_into(read_file(canon), inc.parent_path().string(), out, include_stack);
      include_stack.erase(canon);
      continue;
    }
    out[key] = value;
  }
}

}  // namespace

Config Config::parse_file(const std::string& path) {
  std::filesystem::path p(path);
  Config cfg;
  std::set<std::string> stack{p.lexically_normal().string()};
  parse_into(read_file(path), p.parent_path().string(), cfg.values_, stack);
  return cfg;
}

Config Config::parse_text(std::string_view text, const std::string& base_dir) {
  Config cfg;
  std::set<std::string> stack;
  parse_into(text, base_dir, cfg.values_, stack);
  return cfg;
}

void Config::merge_from(const Config& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

const std::string& Config::str(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw std::invalid_argument("config: missing key '" + key + "'");
  return it->second;
}

std::string Config::str_or(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

int64_t Config::num(const std::string& key) const {
  const std::string& v = str(key);
  errno = 0;
  char* end = nullptr;
  long long n = std::strtoll(v.c_str(), &end, 10);
  if (errno != 0 || end == v.c_str() || *end != '\0')
    throw std::invalid_argument("config: key '" + key + "' is not an integer: " + v);
  return n;
}

int64_t Config::num_or(const std::string& key, int64_t fallback) const {
  return has(key) ? num(key) : fallback;
}

double Config::real(const std::string& key) const {
  const std::string& v = str(key);
  errno = 0;
  char* end = nullptr;
  double d = std::strtod(v.c_str(), &end);
  if (errno != 0 || end == v.c_str() || *end != '\0')
    throw std::invalid_argument("config: key '" + key + "' is not a number: " + v);
  return d;
}

double Config::real_or(const std::string& key, double fallback) const {
  return has(key) ? real(key) : fallback;
}

bool Config::flag_or(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string& v = str(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("config: key '" + key + "' is not a boolean: " + v);
}

uint64_t Config::seed_or(const std::string& key, uint64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string& v = str(key);
  errno = 0;
  char* end = nullptr;
  unsigned long long n = std::strtoull(v.c_str(), &end, 10);
  if (errno != 0 || end == v.c_str() || *end != '\0')
    throw std::invalid_argument("config: key '" + key + "' is not a seed: " + v);
  return n;
}

std::vector<std::string> Config::list(const std::string& key) const {
  const std::string& v = str(key);
  std::vector<std::string> parts;
  size_t pos = 0;
  while (pos <= v.size()) {
    size_t comma = v.find(',', pos);
    std::string part = trim(std::string_view(v).substr(
        pos, comma == std::string::npos ? v.size() - pos : comma - pos));
    if (!part.empty()) parts.push_back(part);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return parts;
}

std::vector<int> Config::int_list(const std::string& key) const {
  std::vector<int> out;
  for (const std::string& part : list(key)) {
    errno = 0;
    char* end = nullptr;
    long n = std::strtol(part.c_str(), &end, 10);
    if (errno != 0 || end == part.c_str() || *end != '\0')
      throw std::invalid_argument("config: key '" + key + "' has non-integer entry: " + part);
    out.push_back(static_cast<int>(n));
  }
  return out;
}

std::vector<double> Config::real_list(const std::string& key) const {
  std::vector<double> out;
  for (const std::string& part : list(key)) {
    errno = 0;
    char* end = nullptr;
    double d = std::strtod(part.c_str(), &end);
    if (errno != 0 || end == part.c_str() || *end != '\0')
      throw std::invalid_argument("config: key '" + key + "' has non-numeric entry: " + part);
    out.push_back(d);
  }
  return out;
}

std::vector<std::string> Config::group_keys(const std::string& prefix) const {
  std::string needle = prefix + ".";
  std::set<std::string> seen;
  std::vector<std::string> out;
  for (auto it = values_.lower_bound(needle); it != values_.end(); ++it) {
    if (it->first.compare(0, needle.size(), needle) != 0) break;
    std::string rest = it->first.substr(needle.size());
    std::string head = rest.substr(0, rest.find('.'));
    if (seen.insert(head).second) out.push_back(head);
  }
  return out;
}

Config Config::subset(const std::string& prefix) const {
  std::string needle = prefix + ".";
  Config sub;
  for (auto it = values_.lower_bound(needle); it != values_.end(); ++it) {
    if (it->first.compare(0, needle.size(), needle) != 0) break;
    sub.values_[it->first.substr(needle.size())] = it->second;
  }
  return sub;
}

std::string Config::serialize() const {
  std::string out;
  for (const auto& [k, v] : values_) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  }
  return out;
}

}  // namespace postlab
