#pragma once

#include <stdexcept>
#include <string>

namespace agcl {

/// Base of every error raised by the library. The CLI maps NumericError (and
/// verification failures) to exit code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes, ranks or counts that do not fit together; missing files.
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, degenerate norms, numeric range violations.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// API used out of order (e.g. backward before forward).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Argument outside its documented interval.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// A configuration that cannot be realised (e.g. objects do not fit).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Bad input values: malformed config files, non one-hot labels, ...
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// File content does not match its header or checksum.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

/// Not enough items to satisfy a request.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Stored artifact was produced with an incompatible configuration.
class CompatibilityError : public Error {
 public:
  using Error::Error;
};

}  // namespace agcl
