#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

namespace rnav::logging {

enum class Level : int { error = 0, warn = 1, info = 2, debug = 3 };

/// Level from REACTIVE_NAV_LOG_LEVEL (error|warn|info|debug); default warn.
inline Level level() {
  static const Level lvl = [] {
    const char* env = std::getenv("REACTIVE_NAV_LOG_LEVEL");
    if (!env) return Level::warn;
    if (std::strcmp(env, "error") == 0) return Level::error;
    if (std::strcmp(env, "warn") == 0) return Level::warn;
    if (std::strcmp(env, "info") == 0) return Level::info;
    if (std::strcmp(env, "debug") == 0) return Level::debug;
    return Level::warn;
  }();
  return lvl;
}

inline bool enabled(Level lvl) { return static_cast<int>(lvl) <= static_cast<int>(level()); }

inline void log(Level lvl, const std::string& message) {
  if (!enabled(lvl)) return;
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::fprintf(stderr, "[%s] %s\n", names[static_cast<int>(lvl)], message.c_str());
}

inline void error(const std::string& m) { log(Level::error, m); }
inline void warn(const std::string& m) { log(Level::warn, m); }
inline void info(const std::string& m) { log(Level::info, m); }
inline void debug(const std::string& m) { log(Level::debug, m); }

}  // namespace rnav::logging
