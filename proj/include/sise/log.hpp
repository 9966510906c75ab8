#pragma once

#include <string>

namespace sise {

enum class LogLevel { quiet, warning, info };

void set_log_level(LogLevel level);
LogLevel log_level();

/// Writes "warning: <message>" to stderr unless the level is quiet. Thread-safe.
void log_warning(const std::string& message);
void log_info(const std::string& message);

}  // namespace sise
