#pragma once

#include <stdexcept>
#include <string>

namespace hiernet {

// Error taxonomy. The CLI maps these onto exit codes:
// ConfigError -> 2, DataError (and subclasses) -> 3, NumericError -> 4.

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

class InvalidLabelError : public DataError {
 public:
  using DataError::DataError;
};

class StratificationError : public DataError {
 public:
  using DataError::DataError;
};

class InsufficientDataError : public DataError {
 public:
  using DataError::DataError;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hiernet
