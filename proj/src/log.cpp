#include "sise/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace sise {

namespace {
std::atomic<LogLevel> g_level{LogLevel::warning};
std::mutex g_mutex;
}  // namespace

void set_log_level(LogLevel level) { g_level.store(level); }
LogLevel log_level() { return g_level.load(); }

void log_warning(const std::string& message) {
  if (g_level.load() == LogLevel::quiet) return;
  std::lock_guard lock(g_mutex);
  std::cerr << "warning: " << message << '\n';
}

void log_info(const std::string& message) {
  if (g_level.load() != LogLevel::info) return;
  std::lock_guard lock(g_mutex);
  std::cerr << message << '\n';
}

}  // namespace sise
