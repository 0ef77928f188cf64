#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace spectt {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Element-count, arity or junction mismatch between tensors.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A 1-based index outside its axis extent.
class RangeError : public Error {
 public:
  RangeError(std::size_t axis, const std::string& what)
      : Error(what), axis_(axis) {}
  std::size_t axis() const noexcept { return axis_; }

 private:
  std::size_t axis_;
};

/// Argument outside the mathematical domain of an operation (rank caps,
/// non-orthogonal gauge matrices, degenerate spectra, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Iterative method failed or a non-finite value appeared.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A frame column could not be normalized to a unit structural diagonal.
class EncodeError : public Error {
 public:
  EncodeError(std::size_t column, const std::string& what)
      : Error(what), column_(column) {}
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t column_;
};

/// A TT-core handed to a routine that requires orthonormal matricizations.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Mixed padded sizes inside a batch decode.
class BatchError : public Error {
 public:
  using Error::Error;
};

/// Tensor diagram exceeds the planner's exhaustive-search bound.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Data bound to a diagram node is missing or has the wrong dims.
class BindingError : public Error {
 public:
  using Error::Error;
};

/// Loss blew up during fitting.
class DivergenceError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Malformed matrix or parameter file.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace spectt
