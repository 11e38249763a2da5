#pragma once

namespace cardiolens {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace cardiolens
