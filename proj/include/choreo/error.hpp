#pragma once

#include <stdexcept>
#include <string>

namespace choreo {

// Exit code contract: 0 success, 2 configuration, 3 data, 4 numeric.
enum class ErrorKind { Config = 2, Data = 3, Numeric = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

// Invalid parameters, infeasible configurations, misuse of an API.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(ErrorKind::Config, msg) {}
};

// Malformed or unusable input data (files, sequences, datasets).
class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(ErrorKind::Data, msg) {}
};

// Tensor shape disagreements between paired inputs.
class ShapeError : public DataError {
 public:
  explicit ShapeError(const std::string& msg) : DataError(msg) {}
};

// Missing or uninitialized model state (weights, dictionaries).
class StateError : public ConfigError {
 public:
  explicit StateError(const std::string& msg) : ConfigError(msg) {}
};

// Non-finite losses, failed numeric guards.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(ErrorKind::Numeric, msg) {}
};

}  // namespace choreo
