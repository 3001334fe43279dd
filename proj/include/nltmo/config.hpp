#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace nltmo {

// Plain-text key=value settings. Blank lines and lines starting with '#'
// are ignored; whitespace around keys and values is trimmed.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text);
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;

  // Throws FormatError naming the first key not in `known`.
  void require_known(const std::vector<std::string>& known) const;

  // Entries in `over` replace entries here.
  void merge(const KeyValueConfig& over);

  std::string serialize() const;
  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace nltmo
