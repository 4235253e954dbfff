#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace usim {

enum class ErrorCode {
  InvalidData,
  ShapeMismatch,
  DegenerateInput,
  ConvergenceFailure,
  MissingLabels,
  InvalidSpec,
  ParseError,
  NonFiniteValue,
  DegenerateGrid,
  IoError,
};

/// Machine-parseable prefix used on the CLI, e.g. "E_SHAPE_MISMATCH".
std::string_view code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised by the readers; carries the 1-based line (CSV) or byte offset (binary).
class ParseError : public Error {
 public:
  ParseError(const std::string& message, long long location)
      : Error(ErrorCode::ParseError, message), location_(location) {}

  long long location() const noexcept { return location_; }

 private:
  long long location_;
};

/// Non-finite cell; row and column are 0-based data coordinates.
class NonFiniteValue : public Error {
 public:
  NonFiniteValue(const std::string& message, long long row, long long col)
      : Error(ErrorCode::NonFiniteValue, message), row_(row), col_(col) {}

  long long row() const noexcept { return row_; }
  long long col() const noexcept { return col_; }

 private:
  long long row_;
  long long col_;
};

}  // namespace usim
