#pragma once

namespace vhtk {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace vhtk
