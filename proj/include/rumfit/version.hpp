#pragma once

namespace rumfit {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace rumfit
