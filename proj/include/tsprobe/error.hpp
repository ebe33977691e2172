#pragma once

#include <stdexcept>
#include <string>

namespace tsprobe {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad arguments or configuration (maps to CLI exit code 2).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated on-disk artifact.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace tsprobe
