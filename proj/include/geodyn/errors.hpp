#pragma once

#include <stdexcept>
#include <string>

namespace geodyn {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or dimensions that do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input outside the domain of an operation (e.g. a non-SPD matrix fed to a log).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameter or option value.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Numerical breakdown (eigensolver failure, singular solve).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Iterative solver ran out of iterations.
class ConvergenceError : public NumericError {
 public:
  ConvergenceError(const std::string& what, double residual)
      : NumericError(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Malformed, truncated or corrupted file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace geodyn
