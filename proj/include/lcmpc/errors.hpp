#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace lcmpc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInputError : public Error {
 public:
  using Error::Error;
};

class SingularDynamicsError : public Error {
 public:
  using Error::Error;
};

/// Raised by the MPC solver when the objective becomes non-finite at an
/// accepted iterate. Carries the flattened control iterate [a0, d0, a1, d1, ...].
class NumericalFailureError : public Error {
 public:
  NumericalFailureError(const std::string& what, std::vector<double> iterate)
      : Error(what), iterate_(std::move(iterate)) {}

  const std::vector<double>& iterate() const noexcept { return iterate_; }

 private:
  std::vector<double> iterate_;
};

/// Configuration error; `key()` is the dotted path of the offending entry.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& msg)
      : Error(key.empty() ? msg : key + ": " + msg), key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace lcmpc
