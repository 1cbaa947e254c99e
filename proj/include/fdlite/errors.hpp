#pragma once

#include <stdexcept>
#include <string>

namespace fdlite {

// Error categories used across the library. Each maps onto one failure class
// of the public contracts: bad configuration, malformed graph structure, bad
// numeric data, unreadable files, and failures during forward evaluation.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class StructuralError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ExecutionError : public Error {
 public:
  using Error::Error;
};

}  // namespace fdlite
