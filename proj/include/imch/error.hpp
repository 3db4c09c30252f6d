#pragma once

#include <stdexcept>
#include <string>

namespace imch {

/// Failure categories shared by the library and the command-line driver.
enum class ErrorKind {
  InvalidArgument,
  NumericFailure,
  StepRejected,
  NewtonDiverged,
  JacobianSingular,
  NoConvergence,
  InvalidConfig,
  RegimeViolation,
  Io,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::NumericFailure: return "numeric-failure";
    case ErrorKind::StepRejected: return "step-rejected";
    case ErrorKind::NewtonDiverged: return "newton-diverged";
    case ErrorKind::JacobianSingular: return "jacobian-singular";
    case ErrorKind::NoConvergence: return "no-convergence";
    case ErrorKind::InvalidConfig: return "invalid-config";
    case ErrorKind::RegimeViolation: return "regime-violation";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool condition, const std::string& what) {
  if (!condition) fail(ErrorKind::InvalidArgument, what);
}

}  // namespace imch
