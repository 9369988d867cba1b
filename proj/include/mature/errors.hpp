#pragma once

#include <stdexcept>
#include <string>

namespace mature {

/// Operand extents do not line up.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Out-of-range index or slice.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// A documented precondition was violated by the caller.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid model specification (unknown kind, wrong mode arity, bad sizes).
class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed input data. Carries the offending 1-based line when known.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what, long line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  long line() const noexcept { return line_; }

 private:
  long line_;
};

/// Training aborted (non-finite loss or gradient).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mature
