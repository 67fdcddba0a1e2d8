#pragma once

#include <stdexcept>
#include <string>

namespace gpdense {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input or configuration (CLI exit code 1).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure: non-PD matrices, non-finite terms, stalls (exit code 2).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A result whose Monte-Carlo normaliser failed the 1% guard (exit code 3).
class FlaggedResultError : public Error {
 public:
  using Error::Error;
};

}  // namespace gpdense
