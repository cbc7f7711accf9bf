#pragma once

#include <map>
#include <set>
#include <string>

namespace sprim {

// Flat key=value configuration. '#' starts a comment, values may be quoted,
// and "[section]" headers prefix the following keys with "section.".
class Config {
 public:
  static Config Parse(const std::string& text, const std::string& origin = "config");
  static Config Load(const std::string& path);

  bool Has(const std::string& key) const { return values_.count(key) > 0; }
  void Set(const std::string& key, const std::string& value) {
    values_[key] = value;
  }

  // Typed getters return `fallback` for absent keys and throw FormatError for
  // values that do not parse.
  std::string GetString(const std::string& key, const std::string& fallback) const;
  double GetDouble(const std::string& key, double fallback) const;
  int GetInt(const std::string& key, int fallback) const;
  bool GetBool(const std::string& key, bool fallback) const;

  // Keys never read through a getter.
  std::set<std::string> UnusedKeys() const;

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

}  // namespace sprim
