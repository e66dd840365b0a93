#pragma once

#include <cstdio>
#include <string_view>

namespace stance::log {

enum class Level { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

inline Level& threshold() {
  static Level level = Level::info;
  return level;
}

inline void write(Level level, std::string_view msg) {
  if (level < threshold()) return;
  static constexpr const char* names[] = {"debug", "info", "warn", "error"};
  std::fprintf(stderr, "[%s] %.*s\n", names[static_cast<int>(level)],
               static_cast<int>(msg.size()), msg.data());
}

inline void debug(std::string_view msg) { write(Level::debug, msg); }
inline void info(std::string_view msg) { write(Level::info, msg); }
inline void warn(std::string_view msg) { write(Level::warn, msg); }

}  // namespace stance::log
