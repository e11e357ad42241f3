#pragma once

#include <stdexcept>
#include <string>

namespace permurank {

// Exception hierarchy. The CLI maps each family to an exit code:
// UsageError -> 1, DataError -> 2, GatewayError -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class GatewayError : public Error {
 public:
  using Error::Error;
};

/// Raised when a caller asks for token log-probabilities from a model
/// that cannot provide them.
class CapabilityError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

}  // namespace permurank
