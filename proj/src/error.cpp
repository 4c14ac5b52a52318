#include "bdsde/error.hpp"

namespace bdsde {

std::string_view kindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::Capacity: return "capacity";
    case ErrorKind::Catalog: return "catalog";
    case ErrorKind::AssumptionViolation: return "assumption-violation";
    case ErrorKind::Precondition: return "precondition";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Regression: return "regression";
    case ErrorKind::Inversion: return "inversion";
    case ErrorKind::Scheme: return "scheme";
    case ErrorKind::Consistency: return "consistency";
    case ErrorKind::Premise: return "premise";
    case ErrorKind::Config: return "config";
  }
  return "unknown";
}

}  // namespace bdsde
