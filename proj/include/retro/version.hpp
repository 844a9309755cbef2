#pragma once

namespace retro {

inline constexpr const char* kToolName = "retro";
inline constexpr const char* kToolVersion = "0.1.0";

} // namespace retro
