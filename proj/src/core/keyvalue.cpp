#include "dfkd/core/keyvalue.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>

#include "dfkd/core/error.hpp"

namespace dfkd {

namespace {

template <class T>
T parse_number(std::string_view key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end)
    throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + text + "'");
  return value;
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

std::string csv_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::string format_sizes(const std::vector<std::size_t>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + std::to_string(values[i]);
  return out;
}

std::vector<std::size_t> parse_sizes(std::string_view text, std::string_view what) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    std::string piece(text.substr(start, comma - start));
    piece.erase(0, piece.find_first_not_of(" \t"));
    piece.erase(piece.find_last_not_of(" \t") + 1);
    out.push_back(parse_number<std::size_t>(what, piece));
    start = comma + 1;
  }
  return out;
}

void KeyValues::set(std::string key, std::string value) {
  for (auto& [k, v] : items_)
    if (k == key) {
      v = std::move(value);
      return;
    }
  items_.emplace_back(std::move(key), std::move(value));
}

void KeyValues::set(std::string key, double value) { set(std::move(key), format_double(value)); }
void KeyValues::set(std::string key, std::int64_t value) { set(std::move(key), std::to_string(value)); }
void KeyValues::set(std::string key, std::size_t value) { set(std::move(key), std::to_string(value)); }
void KeyValues::set(std::string key, bool value) {
  set(std::move(key), std::string(value ? "true" : "false"));
}

bool KeyValues::has(std::string_view key) const {
  return std::any_of(items_.begin(), items_.end(), [&](const auto& kv) { return kv.first == key; });
}

const std::string& KeyValues::get(std::string_view key) const {
  for (const auto& [k, v] : items_)
    if (k == key) return v;
  throw ConfigError("missing config key '" + std::string(key) + "'");
}

double KeyValues::get_double(std::string_view key) const { return parse_number<double>(key, get(key)); }
std::int64_t KeyValues::get_int(std::string_view key) const {
  return parse_number<std::int64_t>(key, get(key));
}
std::size_t KeyValues::get_size(std::string_view key) const {
  return parse_number<std::size_t>(key, get(key));
}
bool KeyValues::get_bool(std::string_view key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + std::string(key) + "': expected a boolean, got '" + v + "'");
}

std::string KeyValues::get(std::string_view key, const std::string& fallback) const {
  return has(key) ? get(key) : fallback;
}
double KeyValues::get_double(std::string_view key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}
std::int64_t KeyValues::get_int(std::string_view key, std::int64_t fallback) const {
  return has(key) ? get_int(key) : fallback;
}
std::size_t KeyValues::get_size(std::string_view key, std::size_t fallback) const {
  return has(key) ? get_size(key) : fallback;
}
bool KeyValues::get_bool(std::string_view key, bool fallback) const {
  return has(key) ? get_bool(key) : fallback;
}

void KeyValues::merge(const KeyValues& other) {
  for (const auto& [k, v] : other.items_) set(k, v);
}

bool KeyValues::erase(std::string_view key) {
  const auto it = std::find_if(items_.begin(), items_.end(), [&](const auto& kv) { return kv.first == key; });
  if (it == items_.end()) return false;
  items_.erase(it);
  return true;
}

}  // namespace dfkd
