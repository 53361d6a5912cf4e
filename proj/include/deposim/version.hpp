#pragma once

namespace deposim {

inline constexpr const char* kVersion = "deposim 0.1.0";

}  // namespace deposim
