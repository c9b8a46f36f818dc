#pragma once

#include <stdexcept>
#include <string>

namespace l4gs {

// Base for every error raised by the library. The CLI maps subclasses onto
// exit codes, so keep the hierarchy flat.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad shapes or inconsistent layer configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Caller-supplied value outside its documented domain.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Operation invoked in the wrong lifecycle state (e.g. backward before forward).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Decode order violated: context requested before its sources were decoded.
class SequencingError : public StateError {
 public:
  using StateError::StateError;
};

/// Broken internal invariant. Never expected on valid input.
class InternalError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or divergence during optimization.
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Malformed file: bad magic, truncation, checksum mismatch, unknown version.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Symbol outside its alphabet, or an alphabet the coder cannot represent.
class EncodingError : public Error {
 public:
  using Error::Error;
};

/// Entropy decoder ran out of input or hit an impossible state.
class DecodeError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace l4gs
