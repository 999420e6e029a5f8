// Copyright (c) mpcc_opt contributors
#pragma once

#include <stdexcept>
#include <string>

namespace mpcc {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// A problem definition violates a structural rule (dimensions, bounds, ...).
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// A feature is accepted by the contract but not supported by this build
/// (e.g. polytope object hooks).
class UnsupportedFeatureError : public Error {
 public:
  using Error::Error;
};

/// A function handed to the tape recorder used a primitive that cannot be
/// taped (branch on a traced value, unsupported operation).
class RecordingError : public Error {
 public:
  using Error::Error;
};

/// A function evaluation left the domain of one of its primitives
/// (log of a negative number, division by zero, ...).
class EvaluationError : public Error {
 public:
  using Error::Error;
};

}  // namespace mpcc
