#pragma once

namespace magma {

inline constexpr const char* kEngineName = "magma";
inline constexpr const char* kEngineVersion = "0.1.0";

}  // namespace magma
