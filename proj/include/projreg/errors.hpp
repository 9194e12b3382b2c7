#pragma once

#include <stdexcept>
#include <string>

namespace projreg {

// Malformed or inconsistent configuration / arguments (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical breakdown: singular systems, invalid values, failed factorisations
// (CLI exit code 3).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem and format failures (CLI exit code 4).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape/dimension mismatches between values that must agree.
class DimensionError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace projreg
