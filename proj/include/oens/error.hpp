#pragma once

#include <stdexcept>
#include <string>

namespace oens {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor/layer dimension mismatches.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration values (out-of-range k, bad priors, malformed specs, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf surfaced by an engine operation. Training aborts rather than
/// propagating non-finite values.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// File-format and I/O problems (IDX, CSV, checkpoints).
class IoError : public Error {
 public:
  using Error::Error;
};

/// A ForwardTrace was used after the parameters it was computed with changed.
class StaleTraceError : public Error {
 public:
  using Error::Error;
};

}  // namespace oens
