#include "dfkd/core/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>

#include "dfkd/core/error.hpp"

namespace dfkd {

namespace {

std::atomic<int> g_level{static_cast<int>(LogLevel::info)};
std::mutex g_mutex;

void emit(LogLevel level, const char* tag, const std::string& message) {
  if (static_cast<int>(level) > g_level.load()) return;
  std::lock_guard lock(g_mutex);
  std::cerr << '[' << tag << "] " << message << '\n';
}

}  // namespace

std::optional<LogLevel> parse_log_level(std::string_view text) {
  if (text == "error") return LogLevel::error;
  if (text == "info") return LogLevel::info;
  if (text == "debug") return LogLevel::debug;
  return std::nullopt;
}

LogLevel log_level_from_env() {
  const char* v = std::getenv("DFKD_LOG");
  if (!v || !*v) return LogLevel::info;
  const auto level = parse_log_level(v);
  if (!level) throw ConfigError(std::string("DFKD_LOG: expected error, info or debug, got '") + v + "'");
  return *level;
}

void set_log_level(LogLevel level) { g_level = static_cast<int>(level); }
LogLevel log_level() { return static_cast<LogLevel>(g_level.load()); }

void log_error(const std::string& message) { emit(LogLevel::error, "error", message); }
void log_warn(const std::string& message) { emit(LogLevel::info, "warn", message); }
void log_info(const std::string& message) { emit(LogLevel::info, "info", message); }
void log_debug(const std::string& message) { emit(LogLevel::debug, "debug", message); }

}  // namespace dfkd
