#include "inekf/config.h"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace inekf {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (end == value.c_str() || *end != '\0')
    throw std::runtime_error("config: key '" + key + "' has non-numeric value '" +
                             value + "'");
  return v;
}

}  // namespace

KeyValueConfig KeyValueConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot read '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return from_string(buf.str());
}

KeyValueConfig KeyValueConfig::from_string(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: line " + std::to_string(lineno) +
                               " is not of the form key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error("config: empty key on line " + std::to_string(lineno));
    cfg.entries_[key] = value;
  }
  return cfg;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  return parse_double(key, it->second);
}

int KeyValueConfig::get_int(const std::string& key, int fallback) const {
  return static_cast<int>(get_double(key, fallback));
}

uint64_t KeyValueConfig::get_uint64(const std::string& key, uint64_t fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  return static_cast<uint64_t>(std::strtoull(it->second.c_str(), nullptr, 10));
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw std::runtime_error("config: key '" + key + "' is not a boolean");
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       std::string fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? std::move(fallback) : it->second;
}

Eigen::Vector3d KeyValueConfig::get_vec3(const std::string& key,
                                         const Eigen::Vector3d& fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::istringstream in(it->second);
  Eigen::Vector3d v;
  std::string part;
  for (int i = 0; i < 3; ++i) {
    if (!std::getline(in, part, ','))
      throw std::runtime_error("config: key '" + key + "' needs 3 components");
    v[i] = parse_double(key, trim(part));
  }
  return v;
}

}  // namespace inekf
