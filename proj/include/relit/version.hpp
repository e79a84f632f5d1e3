#pragma once

namespace relit {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace relit
