#include "dsb/error.hpp"

namespace dsb {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_parameter: return "invalid-parameter";
    case ErrorKind::time_order: return "time-order";
    case ErrorKind::degenerate_bridge: return "degenerate-bridge";
    case ErrorKind::support_violation: return "support-violation";
    case ErrorKind::size_mismatch: return "size-mismatch";
    case ErrorKind::invalid_assignment: return "invalid-assignment";
    case ErrorKind::cap_exceeded: return "cap-exceeded";
    case ErrorKind::positivity_violation: return "positivity-violation";
    case ErrorKind::non_uniform_prior: return "non-uniform-prior";
    case ErrorKind::parse: return "parse";
    case ErrorKind::validation: return "validation";
    case ErrorKind::non_convergence: return "non-convergence";
    case ErrorKind::divergence: return "divergence";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace dsb
