#pragma once

namespace spanova {

inline constexpr const char* kVersion = "0.1.0";

}
