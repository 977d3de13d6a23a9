#pragma once

#include <stdexcept>
#include <string>

namespace rtc {

// Base for every error raised by the library. Each subclass names the
// category used by callers (and by the CLI exit codes).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape mismatches, invalid handles, malformed graphs.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// Non-finite values produced by an operation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Arguments outside the operation's domain (delays, flow times, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Incompatible checkpoints, strategies or configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Corrupt, truncated or version-mismatched files.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Dataset generation produced nothing usable.
class DatasetError : public Error {
 public:
  using Error::Error;
};

}  // namespace rtc
