#include "airfuse/runconfig.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace airfuse {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

RunConfig RunConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_text(buf.str(), path);
}

RunConfig RunConfig::parse_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line, section;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError(origin + ": unterminated section header (line " +
                          std::to_string(line_no) + ")");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ": expected key = value (line " + std::to_string(line_no) + ")");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(origin + ": empty key (line " + std::to_string(line_no) + ")");
    }
    const std::string full = section.empty() ? key : section + "." + key;
    if (!cfg.entries_.emplace(full, value).second) {
      throw ConfigError(origin + ": duplicate key '" + full + "'");
    }
  }
  return cfg;
}

bool RunConfig::has(const std::string& key) const { return entries_.count(key) > 0; }

std::optional<std::string> RunConfig::get(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string RunConfig::get_or(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  errno = 0;
  char* end = nullptr;
  const double parsed = std::strtod(v->c_str(), &end);
  if (errno != 0 || end != v->c_str() + v->size() || v->empty()) {
    throw ConfigError(origin_ + ": key '" + key + "' is not a number: '" + *v + "'");
  }
  return parsed;
}

long RunConfig::get_long(const std::string& key, long fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  errno = 0;
  char* end = nullptr;
  const long parsed = std::strtol(v->c_str(), &end, 10);
  if (errno != 0 || end != v->c_str() + v->size() || v->empty()) {
    throw ConfigError(origin_ + ": key '" + key + "' is not an integer: '" + *v + "'");
  }
  return parsed;
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw ConfigError(origin_ + ": key '" + key + "' is not a boolean: '" + *v + "'");
}

std::vector<std::string> RunConfig::get_list(const std::string& key) const {
  std::vector<std::string> out;
  const auto v = get(key);
  if (!v || v->empty()) return out;
  std::istringstream ss(*v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void RunConfig::check_known_keys(const std::vector<std::string>& known) const {
  for (const auto& [key, value] : entries_) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError(origin_ + ": unknown configuration key '" + key + "'");
    }
  }
}

}  // namespace airfuse
