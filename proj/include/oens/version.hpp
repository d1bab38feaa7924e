#pragma once

namespace oens {

inline constexpr const char* kEngineVersion = "0.1.0";

}  // namespace oens
