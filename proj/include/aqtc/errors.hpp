#pragma once

#include <stdexcept>
#include <string>

namespace aqtc {

// Base for every error raised by the engine. The CLI maps the
// validation family to exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input violates a typed invariant or precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// FEATPACK framing is wrong: bad magic, truncation, unknown dtype.
class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Trailing CRC32 does not match the file contents.
class CorruptionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class MissingFeatureError : public ValidationError {
 public:
  explicit MissingFeatureError(std::string key)
      : ValidationError("missing feature key: " + key), key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A NaN/Inf appeared where a finite value is required.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace aqtc
