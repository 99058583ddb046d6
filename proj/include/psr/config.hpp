#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>

#include "psr/types.hpp"

namespace psr {

/// Parsed key = value file with [section] headers. Lines starting with #
/// or ; are comments; duplicate keys and text outside any recognized
/// structure are parse errors (reported with line numbers).
struct ConfigFile {
  // section -> key -> value; the unnamed leading section is ""
  std::map<std::string, std::map<std::string, std::string>> sections;

  static ConfigFile parse(const std::string& text);
  static ConfigFile load(const std::string& path);
};

/// Typed access that tracks which keys were consumed. finish() rejects
/// everything left over, so a typo in a key never passes silently.
class ConfigReader {
 public:
  explicit ConfigReader(ConfigFile file) : file_(std::move(file)) {}

  bool has(const std::string& section, const std::string& key) const;

  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback);
  Real get_real(const std::string& section, const std::string& key, Real fallback);
  int get_int(const std::string& section, const std::string& key, int fallback);
  std::uint64_t get_u64(const std::string& section, const std::string& key,
                        std::uint64_t fallback);
  bool get_bool(const std::string& section, const std::string& key, bool fallback);

  /// Throws std::invalid_argument naming every key never consumed.
  void finish() const;

 private:
  const std::string* find(const std::string& section, const std::string& key);

  ConfigFile file_;
  std::set<std::string> consumed_;
};

}  // namespace psr
