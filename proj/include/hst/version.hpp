#pragma once

namespace hst {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace hst
