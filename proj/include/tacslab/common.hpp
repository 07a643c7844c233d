#pragma once

#include <stdexcept>
#include <string>

namespace tacslab {

inline constexpr const char* kVersion = "0.1.0";

// Error taxonomy. Everything thrown by the library derives from Error so
// callers can map failures to exit codes in one place.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operand dimensions do not line up (matrix/vector ops, concat, ...).
struct ShapeError : Error {
  using Error::Error;
};

// A value is outside its documented domain (labels, indices, k, ...).
struct InvalidArgumentError : Error {
  using Error::Error;
};

// NaN/Inf where a finite value is required. Training aborts loudly on these.
struct NumericError : Error {
  using Error::Error;
};

// Candidate pool empty, or fully masked for a query.
struct EmptyPoolError : Error {
  using Error::Error;
};

// Bad configuration file or inconsistent run settings.
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace tacslab
