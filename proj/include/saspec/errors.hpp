#pragma once

#include <stdexcept>
#include <string>

namespace saspec {

/// Malformed arguments: singular matrices, negative parameters, bad symbols.
struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A standing assumption (irreducibility, non-compactness, ...) is not met.
struct HypothesisFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// The dominated-subsystem construction could not verify a sandwich.
struct ConstructionFailure : std::runtime_error {
  ConstructionFailure(const std::string& msg, std::string w)
      : std::runtime_error(msg), word(std::move(w)) {}
  std::string word;
};

struct CertificateViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Target value lies outside (or on the boundary of) the admissible domain.
struct Infeasible : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Iteration or term budget exhausted before the requested tolerance.
struct Unconverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InternalInconsistency : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace saspec
