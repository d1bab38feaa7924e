#include "oens/log.hpp"

#include <cstdlib>
#include <iostream>

namespace oens {

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* raw = std::getenv("OENS_LOG");
    if (raw == nullptr) return LogLevel::Info;
    const std::string value(raw);
    if (value == "error") return LogLevel::Error;
    if (value == "debug") return LogLevel::Debug;
    return LogLevel::Info;
  }();
  return level;
}

namespace {
void emit(LogLevel at_least, const char* tag, const std::string& message) {
  if (log_level() < at_least) return;
  std::cerr << tag << message << '\n';
}
}  // namespace

void log_error(const std::string& message) { emit(LogLevel::Error, "[error] ", message); }
void log_info(const std::string& message) { emit(LogLevel::Info, "[info] ", message); }
void log_debug(const std::string& message) { emit(LogLevel::Debug, "[debug] ", message); }

}  // namespace oens
