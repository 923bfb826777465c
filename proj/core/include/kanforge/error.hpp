#pragma once

#include <stdexcept>
#include <string>

namespace kanforge {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes, bad axes, fan mismatches.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the autodiff tape (non-scalar loss, double backward, ...).
class AutogradError : public Error {
 public:
  using Error::Error;
};

/// Invalid user-facing configuration: bad specs, unknown keys, bad names.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A training run that could not complete (NaN loss, empty data).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace kanforge
