#include "cbt/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace cbt {

namespace {
std::atomic<LogLevel> g_level{LogLevel::kWarn};
std::mutex g_mu;
}  // namespace

LogLevel log_level() { return g_level.load(); }
void set_log_level(LogLevel level) { g_level.store(level); }

void log_warn(const std::string& msg) {
  if (g_level.load() < LogLevel::kWarn) return;
  std::lock_guard<std::mutex> lock(g_mu);
  std::cerr << "warning: " << msg << '\n';
}

void log_info(const std::string& msg) {
  if (g_level.load() < LogLevel::kInfo) return;
  std::lock_guard<std::mutex> lock(g_mu);
  std::cerr << msg << '\n';
}

}  // namespace cbt
