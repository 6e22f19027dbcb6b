#pragma once

#include <string>

namespace cbt {

enum class LogLevel { kQuiet, kWarn, kInfo };

LogLevel log_level();
void set_log_level(LogLevel level);

void log_warn(const std::string& msg);
void log_info(const std::string& msg);

}  // namespace cbt
