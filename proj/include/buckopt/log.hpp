#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace buckopt {

enum class LogLevel : int { off = 0, warn = 1, info = 2, debug = 3 };

/// Verbosity is controlled by the BUCKLE_LOG environment variable:
/// off | warn | info | debug.  Default is warn.  Messages go to stderr.
inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("BUCKLE_LOG");
    if (env == nullptr) return LogLevel::warn;
    if (std::strcmp(env, "off") == 0) return LogLevel::off;
    if (std::strcmp(env, "warn") == 0) return LogLevel::warn;
    if (std::strcmp(env, "info") == 0) return LogLevel::info;
    if (std::strcmp(env, "debug") == 0) return LogLevel::debug;
    return LogLevel::warn;
  }();
  return level;
}

template <typename... Args>
void log_at(LogLevel level, const char* tag, const char* fmt, Args... args) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  std::fprintf(stderr, "[%s] ", tag);
  if constexpr (sizeof...(Args) == 0)
    std::fputs(fmt, stderr);
  else
    std::fprintf(stderr, fmt, args...);
  std::fputc('\n', stderr);
}

template <typename... Args>
void log_warn(const char* fmt, Args... args) {
  log_at(LogLevel::warn, "warn", fmt, args...);
}

template <typename... Args>
void log_info(const char* fmt, Args... args) {
  log_at(LogLevel::info, "info", fmt, args...);
}

template <typename... Args>
void log_debug(const char* fmt, Args... args) {
  log_at(LogLevel::debug, "debug", fmt, args...);
}

} // namespace buckopt
