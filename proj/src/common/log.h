#pragma once

#include <string>

namespace quartet {

enum class LogLevel { kQuiet = 0, kInfo = 1, kDebug = 2 };

/// Level comes from the QUARTET_LOG env var (quiet|info|debug), default info.
LogLevel logLevel();

void logInfo(const std::string& message);
void logDebug(const std::string& message);

}  // namespace quartet
