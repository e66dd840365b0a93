#pragma once

#include <stdexcept>
#include <string>

namespace stance {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration: unknown keys, out-of-range hyperparameters, bad flags.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data (corpora, lexicons, checkpoints).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss, dimension mismatch between tensors, failed optimisation.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace stance
