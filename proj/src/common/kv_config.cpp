#include "occlume/common/kv_config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "occlume/common/error.hpp"
#include "occlume/common/rng.hpp"

namespace occlume {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    auto t = trim(item);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

double to_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ParseError("config key '" + key + "': not a number: '" + text + "'");
  }
  return v;
}

std::int64_t to_int(const std::string& key, const std::string& text) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ParseError("config key '" + key + "': not an integer: '" + text + "'");
  }
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

KvConfig KvConfig::parse(std::string_view text) {
  KvConfig cfg;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    auto line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected key=value", line_no);
    auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError("empty key", line_no);
    cfg.values_[std::string(key)] = std::string(trim(line.substr(eq + 1)));
  }
  return cfg;
}

KvConfig KvConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void KvConfig::set(const std::string& key, double value) { values_[key] = format_double(value); }

void KvConfig::set(const std::string& key, std::int64_t value) {
  values_[key] = std::to_string(value);
}

void KvConfig::set(const std::string& key, const std::vector<std::size_t>& value) {
  std::string s;
  for (std::size_t i = 0; i < value.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(value[i]);
  }
  values_[key] = s;
}

void KvConfig::set(const std::string& key, const std::vector<double>& value) {
  std::string s;
  for (std::size_t i = 0; i < value.size(); ++i) {
    if (i) s += ',';
    s += format_double(value[i]);
  }
  values_[key] = s;
}

void KvConfig::merge(const KvConfig& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

std::string KvConfig::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KvConfig::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : to_double(key, it->second);
}

std::int64_t KvConfig::get_int(const std::string& key, std::int64_t fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : to_int(key, it->second);
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const auto& v = it->second;
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw ParseError("config key '" + key + "': not a boolean: '" + v + "'");
}

std::vector<std::size_t> KvConfig::get_sizes(const std::string& key,
                                             const std::vector<std::size_t>& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<std::size_t> out;
  for (const auto& item : split_list(it->second)) {
    const auto v = to_int(key, item);
    if (v < 0) throw ParseError("config key '" + key + "': negative size");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::vector<double> KvConfig::get_doubles(const std::string& key,
                                          const std::vector<double>& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<double> out;
  for (const auto& item : split_list(it->second)) out.push_back(to_double(key, item));
  return out;
}

std::string KvConfig::to_string() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

std::string KvConfig::to_comment_block() const {
  std::string out;
  for (const auto& [k, v] : values_) out += "# " + k + "=" + v + "\n";
  return out;
}

std::uint64_t KvConfig::hash() const { return fnv1a(to_string()); }

KvConfig KvConfig::section(const std::string& prefix) const {
  KvConfig out;
  for (const auto& [k, v] : values_)
    if (k.size() > prefix.size() && k.compare(0, prefix.size(), prefix) == 0) out.values_[k.substr(prefix.size())] = v;
  return out;
}

KvConfig KvConfig::prefixed(const std::string& prefix) const {
  KvConfig out;
  for (const auto& [k, v] : values_) out.values_[prefix + k] = v;
  return out;
}

}  // namespace occlume
