#pragma once

namespace kslab {

inline constexpr const char* version() { return "1.0.0"; }

} // namespace kslab
