#pragma once

namespace zoneprobe {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace zoneprobe
