#include "psr/config.hpp"

#include <cerrno>
#include <climits>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace psr {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void parse_error(int line, const std::string& what) {
  throw std::invalid_argument("config line " + std::to_string(line) + ": " + what);
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text) {
  ConfigFile cfg;
  std::istringstream is(text);
  std::string raw, section;
  int lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') parse_error(lineno, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) parse_error(lineno, "empty section name");
      cfg.sections[section];  // a section may stay empty
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) parse_error(lineno, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) parse_error(lineno, "empty key");
    auto& sec = cfg.sections[section];
    if (!sec.emplace(key, value).second)
      parse_error(lineno, "duplicate key '" + key + "' in section [" + section + "]");
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot read config file: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse(buf.str());
}

bool ConfigReader::has(const std::string& section, const std::string& key) const {
  auto s = file_.sections.find(section);
  return s != file_.sections.end() && s->second.count(key) > 0;
}

const std::string* ConfigReader::find(const std::string& section, const std::string& key) {
  auto s = file_.sections.find(section);
  if (s == file_.sections.end()) return nullptr;
  auto k = s->second.find(key);
  if (k == s->second.end()) return nullptr;
  consumed_.insert(section + "." + key);
  return &k->second;
}

std::string ConfigReader::get_string(const std::string& section, const std::string& key,
                                     const std::string& fallback) {
  const std::string* v = find(section, key);
  return v ? *v : fallback;
}

Real ConfigReader::get_real(const std::string& section, const std::string& key,
                            Real fallback) {
  const std::string* v = find(section, key);
  if (!v) return fallback;
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(v->c_str(), &end);
  if (end == v->c_str() || *end != '\0' || errno == ERANGE)
    throw std::invalid_argument("config [" + section + "] " + key +
                                ": not a number: " + *v);
  return x;
}

int ConfigReader::get_int(const std::string& section, const std::string& key,
                          int fallback) {
  const std::string* v = find(section, key);
  if (!v) return fallback;
  errno = 0;
  char* end = nullptr;
  const long x = std::strtol(v->c_str(), &end, 10);
  if (end == v->c_str() || *end != '\0' || errno == ERANGE || x < INT_MIN || x > INT_MAX)
    throw std::invalid_argument("config [" + section + "] " + key +
                                ": not an integer: " + *v);
  return static_cast<int>(x);
}

std::uint64_t ConfigReader::get_u64(const std::string& section, const std::string& key,
                                    std::uint64_t fallback) {
  const std::string* v = find(section, key);
  if (!v) return fallback;
  errno = 0;
  char* end = nullptr;
  const unsigned long long x = std::strtoull(v->c_str(), &end, 10);
  if (end == v->c_str() || *end != '\0' || errno == ERANGE || v->find('-') != std::string::npos)
    throw std::invalid_argument("config [" + section + "] " + key +
                                ": not an unsigned integer: " + *v);
  return x;
}

bool ConfigReader::get_bool(const std::string& section, const std::string& key,
                            bool fallback) {
  const std::string* v = find(section, key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw std::invalid_argument("config [" + section + "] " + key +
                              ": not a boolean: " + *v);
}

void ConfigReader::finish() const {
  std::string unknown;
  for (const auto& [section, keys] : file_.sections)
    for (const auto& [key, value] : keys) {
      (void)value;
      const std::string id = section + "." + key;
      if (!consumed_.count(id)) unknown += (unknown.empty() ? "" : ", ") + id;
    }
  if (!unknown.empty())
    throw std::invalid_argument("unknown config keys: " + unknown);
}

}  // namespace psr
