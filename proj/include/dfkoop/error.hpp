#pragma once

#include <stdexcept>
#include <string>

#include "dfkoop/types.hpp"

namespace dfkoop {

/// Root of the library's exception hierarchy.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user input: malformed config, inconsistent dimensions, bad arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A computation produced non-finite values or failed to converge.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// File system or parse failure on an artifact file.
class IoError : public Error {
 public:
  using Error::Error;
};

/// The integrator produced a non-finite state.
class IntegrationError : public NumericError {
 public:
  IntegrationError(const std::string& what, Vec state)
      : NumericError(what), state_(std::move(state)) {}

  [[nodiscard]] const Vec& state() const { return state_; }

 private:
  Vec state_;
};

}  // namespace dfkoop
