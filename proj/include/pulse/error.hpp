#pragma once

#include <stdexcept>
#include <string>

namespace pulse {

/// Base class for every error the library raises. The CLI maps each
/// subclass to a distinct process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input values violate an operation's preconditions.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A file or serialized payload is malformed.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Configuration is inconsistent (bad shapes, bad hyperparameters).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite value.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace pulse

namespace pulse {

/// A spectrum carries no power inside the requested band.
class NoPeakError : public InputError {
 public:
  using InputError::InputError;
};

}  // namespace pulse
