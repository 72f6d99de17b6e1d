#pragma once

#include <stdexcept>
#include <string>

namespace rrm {

// Base type for all errors raised by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operand dimensions do not line up. Message names the offending operand.
struct ShapeError : Error {
  using Error::Error;
};

// Input value outside the documented domain (negative gains, infeasible
// powers, out-of-range probabilities, ...).
struct DomainError : Error {
  using Error::Error;
};

// Non-finite intermediate or result.
struct NumericError : Error {
  using Error::Error;
};

// Bad user-facing configuration (unknown enum name, invalid flag value).
struct ConfigError : Error {
  using Error::Error;
};

// Malformed persisted data. Message carries the line number where known.
struct ParseError : Error {
  using Error::Error;
};

// Persisted data written by an incompatible format version.
struct VersionError : Error {
  using Error::Error;
};

// Requested problem size exceeds a documented guard.
struct SizeError : Error {
  using Error::Error;
};

// Iterative solver failed to converge within its iteration budget.
struct ConvergenceError : Error {
  using Error::Error;
};

// Training loss blew up or became non-finite.
struct DivergenceError : Error {
  using Error::Error;
};

}  // namespace rrm
