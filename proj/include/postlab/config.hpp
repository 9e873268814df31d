// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef POSTLAB_CONFIG_HPP_
#define POSTLAB_CONFIG_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace postlab {

// Flat "key = value" experiment configuration. '#' starts a comment,
// `include = other.cfg` splices another file at that point (later keys win),
// and dotted keys express grouping ("stage.2.kind"). Values are strings until
// a typed accessor interprets them, which throws on malformed input.
class Config {
 public:
  static Config parse_file(const std::string& path);
  // base_dir anchors relative include paths
  static Config parse_text(std::string_view text, const std::string& base_dir = ".");

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  void merge_from(const Config& other);  // other wins on conflicts

  const std::string& str(const std::string& key) const;
  std::string str_or(const std::string& key, const std::string& fallback) const;
  int64_t num(const std::string& key) const;
  int64_t num_or(const std::string& key, int64_t fallback) const;
  double real(const std::string& key) const;
  double real_or(const std::string& key, double fallback) const;
  bool flag_or(const std::string& key, bool fallback) const;
  uint64_t seed_or(const std::string& key, uint64_t fallback) const;
  std::vector<std::string> list(const std::string& key) const;  // comma separated
  std::vector<int> int_list(const std::string& key) const;
  std::vector<double> real_list(const std::string& key) const;

  // distinct next path components under "<prefix>." in sorted order,
  // e.g. group_keys("stage") -> {"1", "2"} for stage.1.*, stage.2.*
  std::vector<std::string> group_keys(const std::string& prefix) const;
  // sub-config of "<prefix>.": keys with the prefix stripped
  Config subset(const std::string& prefix) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  std::string serialize() const;  // canonical, sorted keys

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace postlab

#endif  // POSTLAB_CONFIG_HPP_
