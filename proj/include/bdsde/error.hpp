#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bdsde {

enum class ErrorKind {
  InvalidArgument,
  Capacity,
  Catalog,
  AssumptionViolation,  // declared metadata contradicts a standing assumption
  Precondition,
  Numeric,
  Regression,
  Inversion,
  Scheme,       // stability guard violated; a finer grid is required
  Consistency,  // internal monotonicity / ordering checks failed
  Premise,      // comparison premise refuted at a probe
  Config,
};

std::string_view kindName(ErrorKind kind);

/// Library-wide exception. Every error carries a kind so that callers (the
/// CLI in particular) can map failures onto exit statuses without parsing
/// messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, std::string(kindName(kind)) + ": " + message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace bdsde
