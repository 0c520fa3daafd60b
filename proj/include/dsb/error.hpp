#pragma once

#include <stdexcept>
#include <string>

namespace dsb {

enum class ErrorKind {
  invalid_parameter,
  time_order,
  degenerate_bridge,
  support_violation,
  size_mismatch,
  invalid_assignment,
  cap_exceeded,
  positivity_violation,
  non_uniform_prior,
  parse,
  validation,
  non_convergence,
  divergence,
};

const char* to_string(ErrorKind kind) noexcept;

/// Exception type used by every module. The kind lets front-ends map
/// failures onto exit codes without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace dsb
