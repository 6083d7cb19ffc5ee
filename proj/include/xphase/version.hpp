#pragma once

namespace xphase {

/// Library semantic version, embedded in run manifests so every output
/// bundle records the tool that produced it.
inline constexpr const char* version() { return "1.0.0"; }

}  // namespace xphase
