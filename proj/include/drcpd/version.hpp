#pragma once

namespace drcpd {

inline constexpr const char* kToolkitVersion = "0.1.0";

} // namespace drcpd
