#pragma once

#include <stdexcept>
#include <string>

namespace quartet {

// Error categories map onto CLI exit codes: usage 1, data 2, numeric 3.

/// Bad invocation, config or flag usage.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (files, tensors, token streams).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numeric failure at runtime (non-finite loss, invalid logits).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shape incompatibility; message names both shapes.
class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace quartet
