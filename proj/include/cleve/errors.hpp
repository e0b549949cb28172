#pragma once

#include <stdexcept>
#include <string>

namespace cleve {

// Exception hierarchy. The CLI maps each family onto an exit code:
// ConfigError -> 1, DataError -> 2, NumericError -> 3.

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text. `location` is a 1-based line number for line
/// oriented formats or a 0-based character offset for PENMAN.
class ParseError : public DataError {
 public:
  ParseError(const std::string& what, long location)
      : DataError(what), location_(location) {}
  long location() const { return location_; }

 private:
  long location_;
};

/// Well-formed input that violates a structural invariant.
class ValidationError : public DataError {
 public:
  using DataError::DataError;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cleve
