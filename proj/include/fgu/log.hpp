#pragma once

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>

namespace fgu::log {

enum class Level { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

// Verbosity comes from the FGU_LOG environment variable
// (error|warn|info|debug); default warn.
inline Level threshold() {
  static const Level level = [] {
    const char* env = std::getenv("FGU_LOG");
    if (!env) return Level::kWarn;
    const std::string v(env);
    if (v == "error") return Level::kError;
    if (v == "warn") return Level::kWarn;
    if (v == "info") return Level::kInfo;
    if (v == "debug") return Level::kDebug;
    return Level::kWarn;
  }();
  return level;
}

inline std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

template <typename... Args>
void emit(Level level, const char* tag, Args&&... args) {
  if (level > threshold()) return;
  std::ostringstream oss;
  oss << "[fgu:" << tag << "] ";
  (oss << ... << std::forward<Args>(args));
  oss << '\n';
  std::lock_guard<std::mutex> lock(sink_mutex());
  std::cerr << oss.str();
}

template <typename... Args>
void error(Args&&... args) {
  emit(Level::kError, "error", std::forward<Args>(args)...);
}
template <typename... Args>
void warn(Args&&... args) {
  emit(Level::kWarn, "warn", std::forward<Args>(args)...);
}
template <typename... Args>
void info(Args&&... args) {
  emit(Level::kInfo, "info", std::forward<Args>(args)...);
}
template <typename... Args>
void debug(Args&&... args) {
  emit(Level::kDebug, "debug", std::forward<Args>(args)...);
}

}  // namespace fgu::log
