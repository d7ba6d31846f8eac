#pragma once

#include <stdexcept>
#include <string>

namespace gdsr {

/// Base class for all library errors. Subclasses map onto CLI exit codes:
/// ConfigError -> 2, DataError (and ShapeError) -> 3, NumericError -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (bad key, bad value, bad preset).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Invalid input data: malformed files, unsupported rasters, bad manifests.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Dimension or rank mismatch between operands.
class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

/// A numeric fault: an operation produced NaN/Inf, or a numeric contract
/// (scalar loss, populated gradients) was violated.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace gdsr
