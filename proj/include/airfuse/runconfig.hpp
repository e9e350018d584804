#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "airfuse/error.hpp"

namespace airfuse {

// Sectioned key/value configuration file:
//   [section]
//   key = value        # comment
// Keys are addressed as "section.key"; keys before any section header live in
// the "" section. Unknown keys are rejected against a declared schema.
class RunConfig {
public:
  RunConfig() = default;
  static RunConfig parse_file(const std::string& path);
  static RunConfig parse_text(const std::string& text, const std::string& origin = "<config>");

  bool has(const std::string& key) const;
  std::optional<std::string> get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long get_long(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key) const;  // comma separated

  // Throws ConfigError when the file holds a key outside `known`.
  void check_known_keys(const std::vector<std::string>& known) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

private:
  std::map<std::string, std::string> entries_;
  std::string origin_;
};

}  // namespace airfuse
