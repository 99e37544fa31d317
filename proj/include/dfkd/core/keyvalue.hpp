#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dfkd {

// Ordered string key/value pairs. Used for model configs embedded in
// checkpoint headers and for sections of config files.
class KeyValues {
 public:
  void set(std::string key, std::string value);
  void set(std::string key, double value);
  void set(std::string key, std::int64_t value);
  void set(std::string key, std::size_t value);
  void set(std::string key, int value) { set(std::move(key), static_cast<std::int64_t>(value)); }
  void set(std::string key, bool value);
  void set(std::string key, const char* value) { set(std::move(key), std::string(value)); }

  bool has(std::string_view key) const;
  // Throw ConfigError when missing or malformed.
  const std::string& get(std::string_view key) const;
  double get_double(std::string_view key) const;
  std::int64_t get_int(std::string_view key) const;
  std::size_t get_size(std::string_view key) const;
  bool get_bool(std::string_view key) const;

  std::string get(std::string_view key, const std::string& fallback) const;
  double get_double(std::string_view key, double fallback) const;
  std::int64_t get_int(std::string_view key, std::int64_t fallback) const;
  std::size_t get_size(std::string_view key, std::size_t fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;

  // Sets every pair of other, replacing existing keys.
  void merge(const KeyValues& other);
  bool erase(std::string_view key);

  const std::vector<std::pair<std::string, std::string>>& items() const { return items_; }
  bool empty() const { return items_.empty(); }
  bool operator==(const KeyValues&) const = default;

 private:
  std::vector<std::pair<std::string, std::string>> items_;
};

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);
// printf %.17g, the fixed-width form used in every CSV output.
std::string csv_double(double value);
// Comma-separated sizes, e.g. "32,16,8".
std::string format_sizes(const std::vector<std::size_t>& values);
std::vector<std::size_t> parse_sizes(std::string_view text, std::string_view what);

}  // namespace dfkd
