#pragma once

#include <stdexcept>
#include <string>

namespace dkaft {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad run configuration or usage (CLI exit code 1).
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Invalid or inconsistent input data (CLI exit code 2).
class DataError : public Error {
public:
  using Error::Error;
};

/// Numerical failure: factorization breakdown, non-finite loss (CLI exit code 3).
class NumericError : public Error {
public:
  using Error::Error;
};

/// Incompatible tensor shapes; message names the op and the offending shapes.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// Input outside an op's legal domain (log of a non-positive value, ...).
class DomainError : public Error {
public:
  using Error::Error;
};

/// Cholesky failure after jitter escalation; carries the smallest pivot seen.
class FactorizationError : public NumericError {
public:
  FactorizationError(const std::string& msg, double smallest_pivot)
      : NumericError(msg), smallest_pivot_(smallest_pivot) {}
  double smallest_pivot() const { return smallest_pivot_; }

private:
  double smallest_pivot_;
};

}  // namespace dkaft
