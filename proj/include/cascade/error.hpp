#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cascade {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A division or rate split would produce a negative flat rate.
class FlatnessViolation : public Error {
 public:
  using Error::Error;
};

class DivisionByZeroMonomial : public Error {
 public:
  using Error::Error;
};

/// Adaptive quadrature could not reach its tolerance within the depth limit.
class QuadratureNonConvergence : public Error {
 public:
  using Error::Error;
};

/// Malformed manifest input. `position()` is a byte offset for syntax errors
/// and the offset of the enclosing document (0) for schema errors; `path()`
/// is a JSON pointer to the offending value when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position, std::string path = {})
      : Error(what), position_(position), path_(std::move(path)) {}

  std::size_t position() const noexcept { return position_; }
  const std::string& path() const noexcept { return path_; }

 private:
  std::size_t position_;
  std::string path_;
};

class VariantMismatch : public Error {
 public:
  using Error::Error;
};

/// choose_sdagger was asked for an empty target set.
class InfeasibleSupport : public Error {
 public:
  using Error::Error;
};

/// A cascade step could not meet its bounds within the escalation budget.
class BoundUnreachable : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A verification assertion failed; the message names the offending cell.
class AssertionFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace cascade
