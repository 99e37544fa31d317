#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace dfkd {

enum class LogLevel { error = 0, info = 1, debug = 2 };

std::optional<LogLevel> parse_log_level(std::string_view text);
// Reads DFKD_LOG; unset means info. An unknown value throws ConfigError.
LogLevel log_level_from_env();
void set_log_level(LogLevel level);
LogLevel log_level();

// Messages go to stderr prefixed with their level. Warnings print at info.
void log_error(const std::string& message);
void log_warn(const std::string& message);
void log_info(const std::string& message);
void log_debug(const std::string& message);

}  // namespace dfkd
