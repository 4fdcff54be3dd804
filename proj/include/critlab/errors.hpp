#pragma once

#include <stdexcept>
#include <string>

namespace critlab {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dimension or layout mismatch between a network, its parameters and data.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An argument lies outside its documented range.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value appeared during evaluation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A dense computation would exceed its configured size cap.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// A theorem verifier was called outside the theorem's hypotheses.
class HypothesisError : public Error {
 public:
  using Error::Error;
};

/// An operation's precondition does not hold at the given point.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// The point handed to a critical-point routine has a large gradient.
class NotCriticalError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

/// Descent line requested from a point that is already a fiber minimizer.
class DegenerateLineError : public Error {
 public:
  using Error::Error;
};

/// Malformed run configuration; the message carries a JSON pointer path.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace critlab
