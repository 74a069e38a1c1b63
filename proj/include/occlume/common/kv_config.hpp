#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace occlume {

/// Flat `key=value` configuration. Lines starting with `#` are comments.
/// Keys are kept sorted so that serialization (and hashing) is canonical.
class KvConfig {
 public:
  KvConfig() = default;

  static KvConfig parse(std::string_view text);
  static KvConfig load(const std::filesystem::path& path);

  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  void set(const std::string& key, const char* value) { values_[key] = value; }
  void erase(const std::string& key) { values_.erase(key); }
  void set(const std::string& key, double value);
  void set(const std::string& key, std::int64_t value);
  void set(const std::string& key, const std::vector<std::size_t>& value);
  void set(const std::string& key, const std::vector<double>& value);

  /// Later entries win.
  void merge(const KvConfig& other);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::size_t> get_sizes(const std::string& key,
                                     const std::vector<std::size_t>& fallback) const;
  std::vector<double> get_doubles(const std::string& key,
                                  const std::vector<double>& fallback) const;

  const std::map<std::string, std::string>& entries() const { return values_; }

  /// Entries whose key starts with `prefix`, with the prefix removed.
  KvConfig section(const std::string& prefix) const;
  /// Copy with `prefix` prepended to every key.
  KvConfig prefixed(const std::string& prefix) const;

  /// Canonical text, one `key=value` per line.
  std::string to_string() const;

  /// Same text with every line prefixed by `# `, for CSV/manifest headers.
  std::string to_comment_block() const;

  std::uint64_t hash() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Shortest decimal text that round-trips the double.
std::string format_double(double v);

std::string hex64(std::uint64_t v);

}  // namespace occlume
