#pragma once

namespace hmirt {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace hmirt
