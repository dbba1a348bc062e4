#pragma once

#include <map>
#include <string>
#include <vector>

namespace skelgen {

struct ConfigKey {
  std::string section;
  std::string name;
  std::string default_value;
  std::string help;
};

// Every key the CLI understands, grouped by section.
const std::vector<ConfigKey>& default_schema();

// Flat "[section]" + "key = value" text. Later sources override earlier ones;
// the CLI loads the file first and applies flags on top.
class ConfigStore {
 public:
  explicit ConfigStore(std::vector<ConfigKey> schema = default_schema());

  // '#' and ';' start comments. Throws ConfigError on a malformed line, a key
  // outside any section, or an unknown key (with the closest known key).
  void load_text(const std::string& text, const std::string& source = "<text>");
  void load_file(const std::string& path);

  // Throws ConfigError for an unknown key.
  void set(const std::string& section, const std::string& name, const std::string& value);

  std::string get(const std::string& section, const std::string& name) const;
  double get_double(const std::string& section, const std::string& name) const;
  long get_int(const std::string& section, const std::string& name) const;
  bool get_bool(const std::string& section, const std::string& name) const;

  // Canonical "section.key=value" lines in schema order.
  std::string canonical() const;
  // FNV-1a 64 of canonical(), hex.
  std::string hash() const;
  std::map<std::string, std::string> values() const;

 private:
  const ConfigKey& key(const std::string& section, const std::string& name) const;
  std::vector<ConfigKey> schema_;
  std::map<std::string, std::string> values_;  // "section.name" -> value
};

// Closest candidate by edit distance; ties go to the longer shared suffix,
// then to the earlier candidate. Empty when there are no candidates.
std::string closest_match(const std::string& word, const std::vector<std::string>& candidates);
std::size_t edit_distance(const std::string& a, const std::string& b);

}  // namespace skelgen
