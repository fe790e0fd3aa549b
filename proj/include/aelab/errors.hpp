#pragma once

#include <stdexcept>
#include <string>

namespace aelab {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Operand dimensions incompatible with the requested operation.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// A value or gradient came out NaN or infinite; the message names the
/// first offending operation.
class NonFiniteError : public Error {
public:
  using Error::Error;
};

/// An operation that needs at least one data point received none.
class EmptyBatchError : public Error {
public:
  using Error::Error;
};

/// Malformed textual input (architecture strings, checkpoints, CSV).
class ParseError : public Error {
public:
  using Error::Error;
};

/// Invalid or inconsistent configuration values.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Latent binning produced too few populated bins to be meaningful.
class InsufficientBinsError : public Error {
public:
  using Error::Error;
};

/// The latent map is (numerically) constant over the batch, so
/// latent-resolved statistics are undefined.
class DegenerateLatentError : public Error {
public:
  using Error::Error;
};

/// Newton step requested at a point where the Hessian is singular.
class SingularHessianError : public Error {
public:
  using Error::Error;
};

/// Iterate left the trust region (norm blew past the divergence bound).
class DivergenceError : public Error {
public:
  using Error::Error;
};

}  // namespace aelab
