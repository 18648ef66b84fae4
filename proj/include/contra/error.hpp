#pragma once

#include <stdexcept>
#include <string>

namespace contra {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input is structurally valid but numerically unusable (zero rows, empty sequences).
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Caller broke an API contract (shape mismatch, wrong tape, bad partition).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// An oracle could not be evaluated reliably, e.g. a non-deterministic objective.
class OracleViolation : public Error {
 public:
  using Error::Error;
};

/// Two forward passes that must be identical were not.
class StabilityViolation : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf appeared in a loss, gradient or parameter.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

}  // namespace contra
