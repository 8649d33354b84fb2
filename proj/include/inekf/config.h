// Plain-text key-value configuration document.
//
// Grammar: one `key = value` pair per line; `#` starts a comment; blank
// lines ignored. Values are numbers, booleans (true/false), strings, or
// comma-separated 3-vectors. Keys use dotted lowercase names.

#ifndef INEKF_CONFIG_H
#define INEKF_CONFIG_H

#include <cstdint>
#include <map>
#include <string>

#include <Eigen/Core>

namespace inekf {

class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  /// Throws std::runtime_error on an unreadable file or a malformed line.
  static KeyValueConfig from_file(const std::string& path);
  static KeyValueConfig from_string(const std::string& text);

  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) {
    entries_[key] = value;
  }

  /// Typed getters fall back to the default when the key is absent and throw
  /// std::runtime_error when the value does not parse.
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  uint64_t get_uint64(const std::string& key, uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string get_string(const std::string& key, std::string fallback) const;
  Eigen::Vector3d get_vec3(const std::string& key,
                           const Eigen::Vector3d& fallback) const;

  /// Sorted key/value view, used for the deterministic config echo.
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

}  // namespace inekf

#endif  // INEKF_CONFIG_H
