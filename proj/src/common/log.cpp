#include "common/log.h"

#include <cstdlib>
#include <iostream>

namespace quartet {

LogLevel logLevel() {
  static LogLevel level = [] {
    const char* env = std::getenv("QUARTET_LOG");
    if (env == nullptr) return LogLevel::kInfo;
    const std::string value(env);
    if (value == "quiet") return LogLevel::kQuiet;
    if (value == "debug") return LogLevel::kDebug;
    return LogLevel::kInfo;
  }();
  return level;
}

void logInfo(const std::string& message) {
  if (logLevel() >= LogLevel::kInfo) {
    std::cerr << message << "\n";
  }
}

void logDebug(const std::string& message) {
  if (logLevel() >= LogLevel::kDebug) {
    std::cerr << "[debug] " << message << "\n";
  }
}

}  // namespace quartet
