#pragma once

#include <stdexcept>
#include <string>

namespace hstg {

/// Base for every error the library raises.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bad input: malformed files, violated preconditions, missing artifacts.
struct ValidationError : Error {
  using Error::Error;
};

/// Tensor shapes that do not agree.
struct DimensionError : Error {
  using Error::Error;
};

/// An index outside its valid range (class ids, cell ids, neighbors).
struct IndexError : Error {
  using Error::Error;
};

/// NaN or Inf produced by an operation.
struct NumericError : Error {
  using Error::Error;
};

/// Optimization diverged.
struct TrainingError : Error {
  using Error::Error;
};

}  // namespace hstg
