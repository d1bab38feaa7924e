#pragma once

#include <string>

namespace oens {

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

/// Level parsed once from OENS_LOG (error|info|debug); defaults to info.
LogLevel log_level();

/// Human-readable messages go to stderr so stdout stays machine-readable.
void log_error(const std::string& message);
void log_info(const std::string& message);
void log_debug(const std::string& message);

}  // namespace oens
