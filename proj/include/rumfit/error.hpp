#pragma once

#include <stdexcept>
#include <string>

namespace rumfit {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input data (ballot files, inconsistent dimensions, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

// A ballot file line that does not follow the grammar.
class ParseError : public DataError {
 public:
  ParseError(int line, const std::string& message)
      : DataError("line " + std::to_string(line) + ": " + message), line_(line) {}

  int line() const noexcept { return line_; }

 private:
  int line_;
};

// Numerical breakdown: zero-mass truncation intervals, non-finite objectives,
// impossible rankings.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace rumfit
