#pragma once

namespace prl {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace prl
