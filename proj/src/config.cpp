#include "nltmo/config.hpp"

#include <charconv>
#include <sstream>

#include "nltmo/error.hpp"
#include "nltmo/hdr_io.hpp"

namespace nltmo {

namespace {

std::string_view trim(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string_view::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& key, std::string_view v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw FormatError("config: value for '" + key + "' is not a number: '" + std::string(v) + "'");
  return out;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text) {
  KeyValueConfig cfg;
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw FormatError("config: line " + std::to_string(line_no) + " has no '='");
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw FormatError("config: line " + std::to_string(line_no) + " has an empty key");
    cfg.values_[key] = std::string(trim(line.substr(eq + 1)));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  const Bytes b = read_file(path);
  return parse(std::string_view(reinterpret_cast<const char*>(b.data()), b.size()));
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : to_double(key, it->second);
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  long long out = 0;
  const std::string& v = it->second;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw FormatError("config: value for '" + key + "' is not an integer: '" + v + "'");
  return out;
}

std::vector<double> KeyValueConfig::get_doubles(const std::string& key, const std::vector<double>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<double> out;
  std::string_view rest = it->second;
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const std::string_view item = trim(rest.substr(0, comma));
    if (!item.empty()) out.push_back(to_double(key, item));
    rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
  }
  return out;
}

void KeyValueConfig::require_known(const std::vector<std::string>& known) const {
  for (const auto& [k, v] : values_) {
    bool ok = false;
    for (const std::string& n : known) ok = ok || n == k;
    if (!ok) throw FormatError("config: unknown key '" + k + "'");
  }
}

void KeyValueConfig::merge(const KeyValueConfig& over) {
  for (const auto& [k, v] : over.values_) values_[k] = v;
}

std::string KeyValueConfig::serialize() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << '=' << v << '\n';
  return os.str();
}

}  // namespace nltmo
