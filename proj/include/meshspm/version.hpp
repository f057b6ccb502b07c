#pragma once

namespace meshspm {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace meshspm
