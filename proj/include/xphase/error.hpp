#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace xphase {

/// Category of a domain failure. The CLI maps these onto the `type` field of
/// its structured error JSON; library users can switch on them.
enum class ErrorKind {
  parse,        ///< malformed input file
  validation,   ///< model invariant broken (cycle, dangling reference, ...)
  topology,     ///< operation applied to an incompatible network shape
  convergence,  ///< iterative solve failed to converge (or diverged)
  infeasible,   ///< optimization has no feasible point
  io,           ///< filesystem failure
  usage,        ///< bad argument to an operation
};

/// Returns a stable lower-case identifier for an ErrorKind.
inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::parse: return "parse";
    case ErrorKind::validation: return "validation";
    case ErrorKind::topology: return "topology";
    case ErrorKind::convergence: return "convergence";
    case ErrorKind::infeasible: return "infeasible";
    case ErrorKind::io: return "io";
    case ErrorKind::usage: return "usage";
  }
  return "unknown";
}

/// Single exception type for all domain errors; carries a kind for
/// programmatic handling and a human-readable message.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace xphase
